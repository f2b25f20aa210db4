#include "latentfuse/linalg.hpp"

#include <algorithm>
#include <cmath>

namespace latentfuse {

Mat mat_mul(const Mat& x, const Mat& y) {
    if (x.cols != y.rows) throw ShapeError("mat_mul: inner dimensions differ");
    Mat out(x.rows, y.cols);
    for (int i = 0; i < x.rows; ++i) {
        for (int k = 0; k < x.cols; ++k) {
            const double xv = x(i, k);
            if (xv == 0.0) continue;
            for (int j = 0; j < y.cols; ++j) out(i, j) += xv * y(k, j);
        }
    }
    return out;
}

Mat mat_transpose(const Mat& x) {
    Mat out(x.cols, x.rows);
    for (int i = 0; i < x.rows; ++i)
        for (int j = 0; j < x.cols; ++j) out(j, i) = x(i, j);
    return out;
}

std::vector<double> mat_vec(const Mat& m, const std::vector<double>& x) {
    if (static_cast<int>(x.size()) != m.cols) throw ShapeError("mat_vec: size mismatch");
    std::vector<double> y(m.rows, 0.0);
    for (int i = 0; i < m.rows; ++i) {
        double s = 0.0;
        for (int j = 0; j < m.cols; ++j) s += m(i, j) * x[j];
        y[i] = s;
    }
    return y;
}

Mat cholesky(const Mat& spd) {
    if (spd.rows != spd.cols) throw ShapeError("cholesky: matrix not square");
    const int n = spd.rows;
    Mat l(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j <= i; ++j) {
            double s = spd(i, j);
            for (int k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
            if (i == j) {
                if (s <= 0.0) throw NumericalError("cholesky: matrix not positive definite");
                l(i, i) = std::sqrt(s);
            } else {
                l(i, j) = s / l(j, j);
            }
        }
    }
    return l;
}

std::vector<double> cholesky_solve(const Mat& l, const std::vector<double>& b) {
    const int n = l.rows;
    if (static_cast<int>(b.size()) != n) throw ShapeError("cholesky_solve: size mismatch");
    std::vector<double> y(n);
    for (int i = 0; i < n; ++i) {
        double s = b[i];
        for (int k = 0; k < i; ++k) s -= l(i, k) * y[k];
        y[i] = s / l(i, i);
    }
    for (int i = n - 1; i >= 0; --i) {
        double s = y[i];
        for (int k = i + 1; k < n; ++k) s -= l(k, i) * y[k];
        y[i] = s / l(i, i);
    }
    return y;
}

Mat spd_inverse(const Mat& spd) {
    const int n = spd.rows;
    const Mat l = cholesky(spd);
    Mat inv(n, n);
    std::vector<double> e(n, 0.0);
    for (int j = 0; j < n; ++j) {
        e[j] = 1.0;
        const std::vector<double> col = cholesky_solve(l, e);
        e[j] = 0.0;
        for (int i = 0; i < n; ++i) inv(i, j) = col[i];
    }
    return inv;
}

SymEigen sym_eigen(const Mat& sym) {
    if (sym.rows != sym.cols) throw ShapeError("sym_eigen: matrix not square");
    const int n = sym.rows;
    Mat a = sym;
    Mat v = Mat::identity(n);

    for (int sweep = 0; sweep < 128; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
        if (off < 1e-28) break;

        for (int p = 0; p < n; ++p) {
            for (int q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (std::abs(apq) < 1e-300) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (int k = 0; k < n; ++k) {
                    const double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }

    SymEigen out;
    out.values.resize(n);
    for (int i = 0; i < n; ++i) out.values[i] = a(i, i);

    // sort ascending, permuting eigenvector columns alongside
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](int x, int y) { return out.values[x] < out.values[y]; });
    SymEigen sorted;
    sorted.values.resize(n);
    sorted.vectors = Mat(n, n);
    for (int j = 0; j < n; ++j) {
        sorted.values[j] = out.values[order[j]];
        for (int i = 0; i < n; ++i) sorted.vectors(i, j) = v(i, order[j]);
    }
    return sorted;
}

}  // namespace latentfuse
