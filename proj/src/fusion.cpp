#include "latentfuse/fusion.hpp"

#include <cmath>
#include <string>

namespace latentfuse {

void FusionConfig::validate() const {
    if (total_steps < 1) throw ConfigError("FusionConfig: total_steps must be >= 1");
    if (tau < 0 || tau > total_steps)
        throw ConfigError("FusionConfig: tau must be in [0, T], got " + std::to_string(tau));
    if (!(alpha_tau >= 0.0 && alpha_tau <= 1.0))
        throw ConfigError("FusionConfig: alpha_tau must be in [0, 1]");
}

VideoLatent fuse_latents(const VideoLatent& z_video, const VideoLatent& z_image, double alpha) {
    check_same_shape(z_video, z_image, "fuse_latents");
    if (!(alpha >= 0.0 && alpha <= 1.0))
        throw ConfigError("fuse_latents: alpha must be in [0, 1], got " + std::to_string(alpha));
    if (alpha == 1.0) return z_video;
    if (alpha == 0.0) return z_image;
    VideoLatent out(z_video.frames, z_video.dim);
    for (size_t i = 0; i < out.v.size(); ++i)
        out.v[i] = alpha * z_video.v[i] + (1.0 - alpha) * z_image.v[i];
    return out;
}

double next_alpha(double alpha_t, double alpha_tau, int total_steps, int tau) {
    if (tau >= total_steps)
        throw ConfigError("next_alpha: undefined for tau >= total_steps");
    return alpha_t + (1.0 - alpha_tau) / (total_steps - tau);
}

FusedEditResult fused_edit(const Denoiser& video_denoiser, const Denoiser& image_denoiser,
                           const VideoLatent& zT_video, const VideoLatent& zT_image,
                           const Conditioning& target_cond, const GuidanceConfig& guidance_video,
                           const GuidanceConfig& guidance_image, const NoiseSchedule& schedule,
                           const FusionConfig& fusion) {
    fusion.validate();
    if (fusion.total_steps != schedule.steps())
        throw ConfigError("fused_edit: fusion.total_steps (" + std::to_string(fusion.total_steps) +
                          ") does not match the schedule (" + std::to_string(schedule.steps()) +
                          "); both branches must share one schedule");
    check_same_shape(zT_video, zT_image, "fused_edit");
    guidance_video.validate(schedule.steps());
    guidance_image.validate(schedule.steps());

    const int T = schedule.steps();
    VideoLatent z_v = zT_video;
    VideoLatent z_i = zT_image;
    double alpha = fusion.alpha_tau;

    FusedEditResult res;
    res.trace.steps.reserve(T);

    for (int t = T; t >= 1; --t) {
        const VideoLatent eps_i = guided_eps(image_denoiser, z_i, t, target_cond, guidance_image);
        z_i = ddim_sample_step(z_i, eps_i, t, schedule);
        const VideoLatent eps_v = guided_eps(video_denoiser, z_v, t, target_cond, guidance_video);
        z_v = ddim_sample_step(z_v, eps_v, t, schedule);

        FusionStepRecord rec;
        rec.t = t;
        rec.divergence = frob_norm(z_v - z_i);

        if (t <= T - fusion.tau) {
            const VideoLatent fused = fuse_latents(z_v, z_i, alpha);
            rec.fused = true;
            rec.alpha_used = alpha;
            if (fusion.mode == AlphaMode::linear_to_one)
                alpha = next_alpha(alpha, fusion.alpha_tau, fusion.total_steps, fusion.tau);
            z_v = fused;
            z_i = fused;
        }
        res.trace.steps.push_back(rec);
    }

    res.z0 = z_v;
    return res;
}

}  // namespace latentfuse
