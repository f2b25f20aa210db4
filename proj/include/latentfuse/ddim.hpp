#pragma once

#include <optional>
#include <vector>

#include "latentfuse/denoiser.hpp"
#include "latentfuse/noise_schedule.hpp"
#include "latentfuse/video_latent.hpp"

namespace latentfuse {

// Classifier-free guidance settings for one denoising branch.
struct GuidanceConfig {
    double text_scale = 1.0;
    std::optional<double> image_scale;  // engages dual-channel guidance

    ConditionEmbedding null_text;
    std::optional<ConditionEmbedding> null_image;

    // Per-timestep replacements for the null text embedding, indexed by t in
    // [1, T]; entry 0 unused. Either empty or covering every step.
    std::vector<std::vector<double>> null_text_overrides;

    bool has_overrides() const { return !null_text_overrides.empty(); }
    void validate(int total_steps) const;
};

// Latents along one sampling or inversion run, together with their
// timesteps: latents[i] is the state at timesteps[i].
struct Trajectory {
    std::vector<VideoLatent> latents;
    std::vector<int> timesteps;

    const VideoLatent& at_timestep(int t) const;
    size_t size() const { return latents.size(); }
};

// z_{t-1} from z_t and the predicted noise (deterministic DDIM update).
VideoLatent ddim_sample_step(const VideoLatent& z_t, const VideoLatent& eps_hat, int t,
                             const NoiseSchedule& schedule);

// z_t from z_{t-1}; algebraic inverse of ddim_sample_step for equal eps_hat.
VideoLatent ddim_invert_step(const VideoLatent& z_prev, const VideoLatent& eps_hat, int t,
                             const NoiseSchedule& schedule);

// Coefficient of eps_hat in the affine sample step; the sensitivity needed
// when differentiating a guided step.
double ddim_step_eps_coeff(int t, const NoiseSchedule& schedule);

// Classifier-free guided prediction:
//   single channel: eps = eps_null + s * (eps_cond - eps_null)
//   dual channel:   eps = eps00 + s_img * (eps0i - eps00) + s * (eps_ci - eps0i)
// Scale 1 (single) returns the conditional prediction exactly.
VideoLatent guided_eps(const Denoiser& denoiser, const VideoLatent& z, int t,
                       const Conditioning& cond, const GuidanceConfig& guidance);

struct SampleResult {
    VideoLatent z0;
    Trajectory trajectory;  // z_T first, z_0 last
};

SampleResult ddim_sample_loop(const Denoiser& denoiser, const VideoLatent& z_T,
                              const Conditioning& cond, const GuidanceConfig& guidance,
                              const NoiseSchedule& schedule);

struct InvertResult {
    VideoLatent z_T;
    Trajectory pivot;  // z_0 first, z_T last
};

// Runs the inversion step from t = 1..T, evaluating eps at the current
// (explicit) latent. Callers wanting plain pivot inversion pass guidance
// with text_scale 1.
InvertResult ddim_invert_loop(const Denoiser& denoiser, const VideoLatent& z_0,
                              const Conditioning& cond, const NoiseSchedule& schedule,
                              const GuidanceConfig& guidance);

}  // namespace latentfuse
