#include "latentfuse/analytic_denoiser.hpp"

#include <cmath>

namespace latentfuse {

namespace {
constexpr double kLog2Pi = 1.8378770664093454835606594728112;

// rows of z rotated by basis^T: out_k = basis^T * z_k
VideoLatent rotate_frames(const VideoLatent& z, const Mat& basis, bool transpose_basis) {
    VideoLatent out(z.frames, z.dim);
    for (int k = 0; k < z.frames; ++k) {
        for (int i = 0; i < z.dim; ++i) {
            double s = 0.0;
            for (int j = 0; j < z.dim; ++j)
                s += (transpose_basis ? basis(j, i) : basis(i, j)) * z(k, j);
            out(k, i) = s;
        }
    }
    return out;
}
}  // namespace

Mat ar1_correlation(int frames, double rho) {
    Mat r(frames, frames);
    for (int j = 0; j < frames; ++j)
        for (int k = 0; k < frames; ++k) r(j, k) = std::pow(rho, std::abs(j - k));
    return r;
}

AnalyticGaussianDenoiser::AnalyticGaussianDenoiser(GaussianVideoPrior prior,
                                                   NoiseSchedule schedule, Mode mode)
    : prior_(std::move(prior)), schedule_(std::move(schedule)), mode_(mode) {
    const int nc = prior_.n_classes();
    if (nc == 0) throw ConfigError("AnalyticGaussianDenoiser: prior has no classes");
    const int f = prior_.frames();
    const int d = prior_.dim();
    if (prior_.spatial_shape.rows != d || prior_.temporal_corr.rows != f)
        throw ConfigError("AnalyticGaussianDenoiser: prior matrices do not match mean shape");
    for (int c = 0; c < nc; ++c) {
        if (!(prior_.sigmas[c] > 0.0))
            throw ConfigError("AnalyticGaussianDenoiser: sigma must be > 0");
        if (prior_.means[c].frames != f || prior_.means[c].dim != d)
            throw ConfigError("AnalyticGaussianDenoiser: inconsistent class mean shapes");
    }

    spatial_eig_ = sym_eigen(prior_.spatial_shape);
    temporal_eig_ = sym_eigen(prior_.temporal_corr);

    const int T = schedule_.steps();
    if (mode_ == Mode::joint) {
        joint_gain_.assign(T + 1, {});
        for (int t = 1; t <= T; ++t) {
            const double abar = schedule_.alpha_bar(t);
            joint_gain_[t].resize(nc);
            for (int c = 0; c < nc; ++c) {
                const double s2 = prior_.sigmas[c] * prior_.sigmas[c];
                joint_gain_[t][c].reserve(d);
                for (int i = 0; i < d; ++i) {
                    const double w = s2 * spatial_eig_.values[i];
                    Mat m(f, f);  // abar*w*R + (1-abar)*I
                    for (int a = 0; a < f; ++a)
                        for (int b = 0; b < f; ++b)
                            m(a, b) = abar * w * prior_.temporal_corr(a, b) + (a == b ? 1.0 - abar : 0.0);
                    const Mat minv = spd_inverse(m);
                    Mat gain(f, f);  // sqrt(abar)*w*R*minv
                    for (int a = 0; a < f; ++a)
                        for (int b = 0; b < f; ++b) {
                            double s = 0.0;
                            for (int k = 0; k < f; ++k)
                                s += prior_.temporal_corr(a, k) * minv(k, b);
                            gain(a, b) = std::sqrt(abar) * w * s;
                        }
                    joint_gain_[t][c].push_back(std::move(gain));
                }
            }
        }
    } else {
        marginal_gain_.assign(T + 1, {});
        for (int t = 1; t <= T; ++t) {
            const double abar = schedule_.alpha_bar(t);
            marginal_gain_[t].resize(nc);
            for (int c = 0; c < nc; ++c) {
                const double s2 = prior_.sigmas[c] * prior_.sigmas[c];
                marginal_gain_[t][c].resize(d);
                for (int i = 0; i < d; ++i) {
                    const double w = s2 * spatial_eig_.values[i];
                    marginal_gain_[t][c][i] = std::sqrt(abar) * w / (abar * w + 1.0 - abar);
                }
            }
        }
    }
}

int AnalyticGaussianDenoiser::resolve_class(const Conditioning& cond) const {
    // Text condition wins; a structural image condition stands in when the
    // text channel is null; both null -> mixture (-1).
    auto check = [this](int id) {
        if (id < 0 || id >= prior_.n_classes())
            throw UnknownClassError("AnalyticGaussianDenoiser: condition class_id " +
                                    std::to_string(id) + " not in prior");
        return id;
    };
    if (!cond.text.is_null) return check(cond.text.class_id);
    if (cond.image && !cond.image->is_null) return check(cond.image->class_id);
    return -1;
}

VideoLatent AnalyticGaussianDenoiser::posterior_mean_z0(const VideoLatent& z, int t,
                                                        int class_idx) const {
    const double abar = schedule_.alpha_bar(t);
    const VideoLatent& mean = prior_.means[class_idx];
    check_same_shape(z, mean, "AnalyticGaussianDenoiser");

    // residual in the spatially rotated basis
    VideoLatent resid = z;
    for (size_t i = 0; i < resid.v.size(); ++i) resid.v[i] -= std::sqrt(abar) * mean.v[i];
    VideoLatent y = rotate_frames(resid, spatial_eig_.vectors, /*transpose=*/true);

    VideoLatent cond_mean_rot(z.frames, z.dim);
    if (mode_ == Mode::joint) {
        const auto& gains = joint_gain_[t][class_idx];
        for (int i = 0; i < z.dim; ++i) {
            const Mat& g = gains[i];
            for (int a = 0; a < z.frames; ++a) {
                double s = 0.0;
                for (int b = 0; b < z.frames; ++b) s += g(a, b) * y(b, i);
                cond_mean_rot(a, i) = s;
            }
        }
    } else {
        const auto& gains = marginal_gain_[t][class_idx];
        for (int a = 0; a < z.frames; ++a)
            for (int i = 0; i < z.dim; ++i) cond_mean_rot(a, i) = gains[i] * y(a, i);
    }

    VideoLatent out = rotate_frames(cond_mean_rot, spatial_eig_.vectors, /*transpose=*/false);
    for (size_t i = 0; i < out.v.size(); ++i) out.v[i] += mean.v[i];
    return out;
}

VideoLatent AnalyticGaussianDenoiser::class_eps(const VideoLatent& z, int t, int class_idx) const {
    const double abar = schedule_.alpha_bar(t);
    const VideoLatent ez0 = posterior_mean_z0(z, t, class_idx);
    VideoLatent eps(z.frames, z.dim);
    const double denom = std::sqrt(1.0 - abar);
    for (size_t i = 0; i < eps.v.size(); ++i)
        eps.v[i] = (z.v[i] - std::sqrt(abar) * ez0.v[i]) / denom;
    return eps;
}

double AnalyticGaussianDenoiser::joint_log_density(const VideoLatent& z, int t,
                                                   int class_idx) const {
    const double abar = schedule_.alpha_bar(t);
    const double s2 = prior_.sigmas[class_idx] * prior_.sigmas[class_idx];
    const VideoLatent& mean = prior_.means[class_idx];

    VideoLatent resid = z;
    for (size_t i = 0; i < resid.v.size(); ++i) resid.v[i] -= std::sqrt(abar) * mean.v[i];
    const VideoLatent y = rotate_frames(resid, spatial_eig_.vectors, /*transpose=*/true);

    // fully diagonal in the (spatial U, temporal V) double-rotated basis
    double quad = 0.0, logdet = 0.0;
    for (int i = 0; i < z.dim; ++i) {
        const double w = s2 * spatial_eig_.values[i];
        for (int j = 0; j < z.frames; ++j) {
            double q = 0.0;
            for (int a = 0; a < z.frames; ++a) q += temporal_eig_.vectors(a, j) * y(a, i);
            const double var = abar * w * temporal_eig_.values[j] + (1.0 - abar);
            quad += q * q / var;
            logdet += std::log(var);
        }
    }
    return -0.5 * (quad + logdet + z.frames * z.dim * kLog2Pi);
}

double AnalyticGaussianDenoiser::frame_log_density(const std::vector<double>& zk, int t,
                                                   int class_idx, int frame) const {
    const double abar = schedule_.alpha_bar(t);
    const double s2 = prior_.sigmas[class_idx] * prior_.sigmas[class_idx];
    const int d = prior_.dim();

    double quad = 0.0, logdet = 0.0;
    for (int i = 0; i < d; ++i) {
        double q = 0.0;
        for (int j = 0; j < d; ++j)
            q += spatial_eig_.vectors(j, i) *
                 (zk[j] - std::sqrt(abar) * prior_.means[class_idx](frame, j));
        const double var = abar * s2 * spatial_eig_.values[i] + (1.0 - abar);
        quad += q * q / var;
        logdet += std::log(var);
    }
    return -0.5 * (quad + logdet + d * kLog2Pi);
}

VideoLatent AnalyticGaussianDenoiser::mixture_eps(const VideoLatent& z, int t) const {
    const int nc = prior_.n_classes();
    if (nc == 1) return class_eps(z, t, 0);

    VideoLatent out(z.frames, z.dim);
    if (mode_ == Mode::joint) {
        std::vector<double> logp(nc);
        double mx = -1e300;
        for (int c = 0; c < nc; ++c) {
            logp[c] = joint_log_density(z, t, c);
            mx = std::max(mx, logp[c]);
        }
        double norm = 0.0;
        for (int c = 0; c < nc; ++c) norm += std::exp(logp[c] - mx);
        for (int c = 0; c < nc; ++c) {
            const double w = std::exp(logp[c] - mx) / norm;
            const VideoLatent e = class_eps(z, t, c);
            for (size_t i = 0; i < out.v.size(); ++i) out.v[i] += w * e.v[i];
        }
    } else {
        // per-frame mixture weights keep image-role locality intact
        std::vector<VideoLatent> class_preds;
        class_preds.reserve(nc);
        for (int c = 0; c < nc; ++c) class_preds.push_back(class_eps(z, t, c));
        for (int k = 0; k < z.frames; ++k) {
            std::vector<double> logp(nc);
            double mx = -1e300;
            for (int c = 0; c < nc; ++c) {
                logp[c] = frame_log_density(z.frame(k), t, c, k);
                mx = std::max(mx, logp[c]);
            }
            double norm = 0.0;
            for (int c = 0; c < nc; ++c) norm += std::exp(logp[c] - mx);
            for (int c = 0; c < nc; ++c) {
                const double w = std::exp(logp[c] - mx) / norm;
                for (int i = 0; i < z.dim; ++i) out(k, i) += w * class_preds[c](k, i);
            }
        }
    }
    return out;
}

VideoLatent AnalyticGaussianDenoiser::predict_eps(const VideoLatent& z, int t,
                                                  const Conditioning& cond) const {
    if (t < 1 || t > schedule_.steps())
        throw IndexError("AnalyticGaussianDenoiser::predict_eps: t out of [1, T]");
    if (z.frames != prior_.frames() || z.dim != prior_.dim())
        throw ShapeError("AnalyticGaussianDenoiser::predict_eps: latent shape mismatch");
    const int c = resolve_class(cond);
    return c >= 0 ? class_eps(z, t, c) : mixture_eps(z, t);
}

}  // namespace latentfuse
