#pragma once

#include <memory>
#include <string>
#include <vector>

#include "latentfuse/denoiser.hpp"
#include "latentfuse/linalg.hpp"
#include "latentfuse/noise_schedule.hpp"
#include "latentfuse/video_latent.hpp"

namespace latentfuse {

// Class-conditional Gaussian prior expressed in the space the denoiser
// operates in (typically the latent space after encoding): per class a
// frames x dim mean stack and a scale sigma; shared spatial shape S (d x d,
// the pushforward of an isotropic frame through the codec) and temporal
// correlation R (f x f). Full covariance per class: sigma_c^2 * (R kron S).
struct GaussianVideoPrior {
    std::vector<std::string> labels;
    std::vector<VideoLatent> means;   // one f x d stack per class
    std::vector<double> sigmas;       // > 0 per class
    Mat spatial_shape;                // S, d x d SPD
    Mat temporal_corr;                // R, f x f SPD with unit diagonal

    int n_classes() const { return static_cast<int>(labels.size()); }
    int frames() const { return means.empty() ? 0 : means[0].frames; }
    int dim() const { return means.empty() ? 0 : means[0].dim; }
};

// AR(1) correlation matrix rho^|j-k|.
Mat ar1_correlation(int frames, double rho);

// Exact posterior-expectation epsilon predictor for a Gaussian video prior.
// Joint mode conditions on the whole f*d stack; marginal mode conditions
// each frame on itself only (image role). A null condition is answered with
// the posterior-weighted mixture over classes.
class AnalyticGaussianDenoiser : public Denoiser {
public:
    enum class Mode { marginal, joint };

    AnalyticGaussianDenoiser(GaussianVideoPrior prior, NoiseSchedule schedule, Mode mode);

    Role role() const override { return mode_ == Mode::joint ? Role::video : Role::image; }
    Mode mode() const { return mode_; }
    const NoiseSchedule& schedule() const { return schedule_; }
    const GaussianVideoPrior& prior() const { return prior_; }

    VideoLatent predict_eps(const VideoLatent& z, int t, const Conditioning& cond) const override;

    // E[z_0 | z_t] for one class; exposed for tests.
    VideoLatent posterior_mean_z0(const VideoLatent& z, int t, int class_idx) const;

private:
    VideoLatent class_eps(const VideoLatent& z, int t, int class_idx) const;
    VideoLatent mixture_eps(const VideoLatent& z, int t) const;
    double joint_log_density(const VideoLatent& z, int t, int class_idx) const;
    double frame_log_density(const std::vector<double>& zk, int t, int class_idx, int frame) const;
    int resolve_class(const Conditioning& cond) const;

    GaussianVideoPrior prior_;
    NoiseSchedule schedule_;
    Mode mode_;

    SymEigen spatial_eig_;   // S = U Lambda U^T
    SymEigen temporal_eig_;  // R = V Psi V^T

    // joint gains: per t (1..T), class, spatial eigenindex i, an f x f matrix
    // sqrt(abar) * s2 lam_i R * (abar * s2 lam_i R + (1-abar) I)^-1
    std::vector<std::vector<std::vector<Mat>>> joint_gain_;
    // marginal gains: per t, class, spatial eigenindex, the scalar
    // sqrt(abar) * s2 lam_i / (abar * s2 lam_i + 1 - abar)
    std::vector<std::vector<std::vector<double>>> marginal_gain_;
};

}  // namespace latentfuse
