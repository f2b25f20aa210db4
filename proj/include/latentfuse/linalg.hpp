#pragma once

#include <cstddef>
#include <vector>

#include "latentfuse/error.hpp"

namespace latentfuse {

// Dense row-major matrix, sized for the small systems this engine solves
// (frame counts and latent dims are single digits to low tens).
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<double> a;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), a(static_cast<size_t>(r) * c, 0.0) {}

    double& operator()(int r, int c) { return a[static_cast<size_t>(r) * cols + c]; }
    double operator()(int r, int c) const { return a[static_cast<size_t>(r) * cols + c]; }

    static Mat identity(int n) {
        Mat m(n, n);
        for (int i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }
};

Mat mat_mul(const Mat& x, const Mat& y);
Mat mat_transpose(const Mat& x);

// y = m * x for an x of length m.cols.
std::vector<double> mat_vec(const Mat& m, const std::vector<double>& x);

// In-place Cholesky factorization of an SPD matrix; throws NumericalError
// if a pivot is not positive.
Mat cholesky(const Mat& spd);

// Solves spd * x = b given the Cholesky factor L (lower triangular).
std::vector<double> cholesky_solve(const Mat& chol_l, const std::vector<double>& b);

// Inverse of an SPD matrix via its Cholesky factor.
Mat spd_inverse(const Mat& spd);

struct SymEigen {
    std::vector<double> values;  // ascending
    Mat vectors;                 // columns are eigenvectors
};

// Cyclic Jacobi eigendecomposition of a symmetric matrix.
SymEigen sym_eigen(const Mat& sym);

}  // namespace latentfuse
