#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "latentfuse/error.hpp"

namespace latentfuse {

// A stack of per-frame latent vectors. Row f is one frame; every diffusion
// quantity in this engine (z_t, eps, means) has this shape.
struct VideoLatent {
    int frames = 0;
    int dim = 0;
    std::vector<double> v;  // row-major frames x dim

    VideoLatent() = default;
    VideoLatent(int f, int d) : frames(f), dim(d), v(static_cast<size_t>(f) * d, 0.0) {
        if (f < 1 || d < 1) throw ShapeError("VideoLatent: frames and dim must be >= 1");
    }

    double& operator()(int f, int i) { return v[static_cast<size_t>(f) * dim + i]; }
    double operator()(int f, int i) const { return v[static_cast<size_t>(f) * dim + i]; }

    bool same_shape(const VideoLatent& o) const { return frames == o.frames && dim == o.dim; }

    std::vector<double> frame(int f) const {
        return std::vector<double>(v.begin() + static_cast<size_t>(f) * dim,
                                   v.begin() + static_cast<size_t>(f + 1) * dim);
    }

    void set_frame(int f, const std::vector<double>& x) {
        for (int i = 0; i < dim; ++i) (*this)(f, i) = x[i];
    }
};

inline void check_same_shape(const VideoLatent& a, const VideoLatent& b, const char* where) {
    if (!a.same_shape(b)) throw ShapeError(std::string(where) + ": shape mismatch");
}

inline VideoLatent operator+(const VideoLatent& a, const VideoLatent& b) {
    check_same_shape(a, b, "operator+");
    VideoLatent r = a;
    for (size_t i = 0; i < r.v.size(); ++i) r.v[i] += b.v[i];
    return r;
}

inline VideoLatent operator-(const VideoLatent& a, const VideoLatent& b) {
    check_same_shape(a, b, "operator-");
    VideoLatent r = a;
    for (size_t i = 0; i < r.v.size(); ++i) r.v[i] -= b.v[i];
    return r;
}

inline VideoLatent operator*(double s, const VideoLatent& a) {
    VideoLatent r = a;
    for (double& x : r.v) x *= s;
    return r;
}

inline double frob_norm(const VideoLatent& a) {
    double s = 0.0;
    for (double x : a.v) s += x * x;
    return std::sqrt(s);
}

inline double max_abs_diff(const VideoLatent& a, const VideoLatent& b) {
    check_same_shape(a, b, "max_abs_diff");
    double m = 0.0;
    for (size_t i = 0; i < a.v.size(); ++i) m = std::max(m, std::abs(a.v[i] - b.v[i]));
    return m;
}

inline bool all_finite(const VideoLatent& a) {
    for (double x : a.v)
        if (!std::isfinite(x)) return false;
    return true;
}

}  // namespace latentfuse
