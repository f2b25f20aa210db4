#pragma once

#include <vector>

#include "latentfuse/ddim.hpp"

namespace latentfuse {

enum class AlphaMode { fixed, linear_to_one };

// Knobs of the two-branch fusion loop. The first tau denoising steps run the
// branches independently; fusion is active for t <= T - tau.
struct FusionConfig {
    int total_steps = 50;   // must match the schedule
    int tau = 0;            // in [0, T]; tau == T disables fusion entirely
    double alpha_tau = 0.5; // initial video weight, in [0, 1]
    AlphaMode mode = AlphaMode::linear_to_one;

    void validate() const;
    int fused_step_count() const { return total_steps - tau; }
};

struct FusionStepRecord {
    int t = 0;
    bool fused = false;
    double alpha_used = 0.0;  // meaningful only when fused
    double divergence = 0.0;  // ||z_V - z_I|| before any fusing at this step
};

struct FusionTrace {
    std::vector<FusionStepRecord> steps;

    int fused_count() const {
        int n = 0;
        for (const auto& s : steps) n += s.fused ? 1 : 0;
        return n;
    }
};

// Convex combination alpha * z_video + (1 - alpha) * z_image; the alpha 0
// and 1 boundaries return the respective branch bit-exactly.
VideoLatent fuse_latents(const VideoLatent& z_video, const VideoLatent& z_image, double alpha);

// One update of the linear-to-one schedule: alpha + (1 - alpha_tau)/(T - tau).
// tau == T is rejected at FusionConfig validation, never here at runtime.
double next_alpha(double alpha_t, double alpha_tau, int total_steps, int tau);

struct FusedEditResult {
    VideoLatent z0;
    FusionTrace trace;
};

// Two-branch guided denoising with latent fusion: per timestep both branches
// take a guided DDIM step; once fusion is active the latents are convexly
// combined, alpha is advanced (linear mode), and both branches continue from
// the fused latent.
FusedEditResult fused_edit(const Denoiser& video_denoiser, const Denoiser& image_denoiser,
                           const VideoLatent& zT_video, const VideoLatent& zT_image,
                           const Conditioning& target_cond, const GuidanceConfig& guidance_video,
                           const GuidanceConfig& guidance_image, const NoiseSchedule& schedule,
                           const FusionConfig& fusion);

}  // namespace latentfuse
