#include "latentfuse/ddim.hpp"

#include <cmath>
#include <string>

namespace latentfuse {

void GuidanceConfig::validate(int total_steps) const {
    if (!(std::isfinite(text_scale) && text_scale >= 0.0))
        throw ConfigError("GuidanceConfig: text_scale must be finite and >= 0");
    if (image_scale && !(std::isfinite(*image_scale) && *image_scale >= 0.0))
        throw ConfigError("GuidanceConfig: image_scale must be finite and >= 0");
    if (has_overrides()) {
        if (static_cast<int>(null_text_overrides.size()) != total_steps + 1)
            throw ConfigError("GuidanceConfig: null overrides must cover every t in [1, T]");
        for (int t = 1; t <= total_steps; ++t)
            if (null_text_overrides[t].empty())
                throw ConfigError("GuidanceConfig: missing null override for t=" +
                                  std::to_string(t));
    }
}

const VideoLatent& Trajectory::at_timestep(int t) const {
    for (size_t i = 0; i < timesteps.size(); ++i)
        if (timesteps[i] == t) return latents[i];
    throw IndexError("Trajectory: no latent recorded for t=" + std::to_string(t));
}

namespace {
void check_step_args(const VideoLatent& z, const VideoLatent& eps, int t,
                     const NoiseSchedule& schedule, const char* where) {
    if (t < 1 || t > schedule.steps())
        throw IndexError(std::string(where) + ": t out of [1, T]");
    check_same_shape(z, eps, where);
}
}  // namespace

VideoLatent ddim_sample_step(const VideoLatent& z_t, const VideoLatent& eps_hat, int t,
                             const NoiseSchedule& schedule) {
    check_step_args(z_t, eps_hat, t, schedule, "ddim_sample_step");
    const double a_t = schedule.alpha_bar(t);
    const double a_prev = schedule.alpha_bar(t - 1);
    const double c0 = std::sqrt(a_prev) / std::sqrt(a_t);
    const double c1 = std::sqrt(1.0 - a_t);
    const double c2 = std::sqrt(1.0 - a_prev);

    VideoLatent out(z_t.frames, z_t.dim);
    for (size_t i = 0; i < out.v.size(); ++i)
        out.v[i] = c0 * (z_t.v[i] - c1 * eps_hat.v[i]) + c2 * eps_hat.v[i];
    return out;
}

VideoLatent ddim_invert_step(const VideoLatent& z_prev, const VideoLatent& eps_hat, int t,
                             const NoiseSchedule& schedule) {
    check_step_args(z_prev, eps_hat, t, schedule, "ddim_invert_step");
    const double a_t = schedule.alpha_bar(t);
    const double a_prev = schedule.alpha_bar(t - 1);
    const double c0 = std::sqrt(a_t) / std::sqrt(a_prev);
    const double c1 = std::sqrt(1.0 - a_prev);
    const double c2 = std::sqrt(1.0 - a_t);

    VideoLatent out(z_prev.frames, z_prev.dim);
    for (size_t i = 0; i < out.v.size(); ++i)
        out.v[i] = c0 * (z_prev.v[i] - c1 * eps_hat.v[i]) + c2 * eps_hat.v[i];
    return out;
}

double ddim_step_eps_coeff(int t, const NoiseSchedule& schedule) {
    const double a_t = schedule.alpha_bar(t);
    const double a_prev = schedule.alpha_bar(t - 1);
    return std::sqrt(1.0 - a_prev) - std::sqrt(a_prev) * std::sqrt(1.0 - a_t) / std::sqrt(a_t);
}

namespace {
ConditionEmbedding resolve_null_text(const GuidanceConfig& g, int t) {
    if (!g.has_overrides()) return g.null_text;
    ConditionEmbedding c;
    c.vec = g.null_text_overrides[t];
    c.is_null = true;
    return c;
}
}  // namespace

VideoLatent guided_eps(const Denoiser& denoiser, const VideoLatent& z, int t,
                       const Conditioning& cond, const GuidanceConfig& guidance) {
    const double s = guidance.text_scale;

    if (!guidance.image_scale) {
        if (s == 1.0) return denoiser.predict_eps(z, t, cond);

        Conditioning uncond = cond;
        uncond.text = resolve_null_text(guidance, t);
        if (s == 0.0) return denoiser.predict_eps(z, t, uncond);

        const VideoLatent eps_c = denoiser.predict_eps(z, t, cond);
        const VideoLatent eps_n = denoiser.predict_eps(z, t, uncond);
        VideoLatent out(z.frames, z.dim);
        for (size_t i = 0; i < out.v.size(); ++i)
            out.v[i] = eps_n.v[i] + s * (eps_c.v[i] - eps_n.v[i]);
        return out;
    }

    // dual channel
    const double si = *guidance.image_scale;
    if (!cond.image)
        throw ConfigError("guided_eps: dual guidance requires an image condition");
    if (!guidance.null_image)
        throw ConfigError("guided_eps: dual guidance requires a null image embedding");

    Conditioning c_ci = cond;
    if (s == 1.0 && si == 1.0) return denoiser.predict_eps(z, t, c_ci);

    Conditioning c_0i = cond;
    c_0i.text = resolve_null_text(guidance, t);
    Conditioning c_00 = c_0i;
    c_00.image = *guidance.null_image;

    const VideoLatent e00 = denoiser.predict_eps(z, t, c_00);
    const VideoLatent e0i = denoiser.predict_eps(z, t, c_0i);
    const VideoLatent eci = denoiser.predict_eps(z, t, c_ci);
    VideoLatent out(z.frames, z.dim);
    for (size_t i = 0; i < out.v.size(); ++i)
        out.v[i] = e00.v[i] + si * (e0i.v[i] - e00.v[i]) + s * (eci.v[i] - e0i.v[i]);
    return out;
}

SampleResult ddim_sample_loop(const Denoiser& denoiser, const VideoLatent& z_T,
                              const Conditioning& cond, const GuidanceConfig& guidance,
                              const NoiseSchedule& schedule) {
    guidance.validate(schedule.steps());

    SampleResult res;
    res.trajectory.latents.reserve(schedule.steps() + 1);
    res.trajectory.timesteps.reserve(schedule.steps() + 1);
    res.trajectory.latents.push_back(z_T);
    res.trajectory.timesteps.push_back(schedule.steps());

    VideoLatent z = z_T;
    for (int t = schedule.steps(); t >= 1; --t) {
        const VideoLatent eps = guided_eps(denoiser, z, t, cond, guidance);
        z = ddim_sample_step(z, eps, t, schedule);
        res.trajectory.latents.push_back(z);
        res.trajectory.timesteps.push_back(t - 1);
    }
    res.z0 = z;
    return res;
}

InvertResult ddim_invert_loop(const Denoiser& denoiser, const VideoLatent& z_0,
                              const Conditioning& cond, const NoiseSchedule& schedule,
                              const GuidanceConfig& guidance) {
    guidance.validate(schedule.steps());

    InvertResult res;
    res.pivot.latents.reserve(schedule.steps() + 1);
    res.pivot.timesteps.reserve(schedule.steps() + 1);
    res.pivot.latents.push_back(z_0);
    res.pivot.timesteps.push_back(0);

    VideoLatent z = z_0;
    for (int t = 1; t <= schedule.steps(); ++t) {
        const VideoLatent eps = guided_eps(denoiser, z, t, cond, guidance);
        z = ddim_invert_step(z, eps, t, schedule);
        res.pivot.latents.push_back(z);
        res.pivot.timesteps.push_back(t);
    }
    res.z_T = z;
    return res;
}

}  // namespace latentfuse
