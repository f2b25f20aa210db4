#include "latentfuse/null_text.hpp"

#include <cmath>
#include <string>

namespace latentfuse {

namespace {

double sq_distance(const VideoLatent& a, const VideoLatent& b) {
    double s = 0.0;
    for (size_t i = 0; i < a.v.size(); ++i) {
        const double r = a.v[i] - b.v[i];
        s += r * r;
    }
    return s;
}

// Guided step evaluation at a candidate null embedding, honoring the
// branch's guidance mode. In dual mode the null text embedding enters both
// the fully unconditional and the image-conditioned predictions:
//   eps = (1-s_img) e00 + (s_img-s) e0i + s e_ci
// which reduces to plain CFG when no image scale is set.
struct GuidedNullEval {
    const TrainedDenoiser& model;
    const Conditioning& cond;
    const GuidanceConfig& guidance;
    const NoiseSchedule& schedule;
    bool dual;
    double s;
    double si;

    GuidedNullEval(const TrainedDenoiser& m, const Conditioning& c, const GuidanceConfig& g,
                   const NoiseSchedule& sched)
        : model(m), cond(c), guidance(g), schedule(sched) {
        s = g.text_scale;
        dual = g.image_scale.has_value() && cond.image.has_value();
        si = dual ? *g.image_scale : 0.0;
        if (g.image_scale && !cond.image)
            throw ConfigError("null_text_invert: dual guidance requires an image condition");
        if (dual && !g.null_image)
            throw ConfigError("null_text_invert: dual guidance requires a null image embedding");
    }

    bool inert() const { return dual ? (s == 1.0 && si == 1.0) : s == 1.0; }

    Conditioning with_null(const std::vector<double>& null_vec, bool null_image_too) const {
        Conditioning c = cond;
        c.text.vec = null_vec;
        c.text.is_null = true;
        c.text.class_id = -1;
        if (null_image_too) c.image = *guidance.null_image;
        return c;
    }

    struct Step {
        VideoLatent z_next;
        double loss;
    };

    Step operator()(const VideoLatent& z, int t, const std::vector<double>& null_vec,
                    const VideoLatent& eps_cond, const VideoLatent& pivot_prev) const {
        VideoLatent eps(z.frames, z.dim);
        if (!dual) {
            const VideoLatent e_n = model.predict_eps(z, t, with_null(null_vec, false));
            for (size_t i = 0; i < eps.v.size(); ++i)
                eps.v[i] = e_n.v[i] + s * (eps_cond.v[i] - e_n.v[i]);
        } else {
            const VideoLatent e0i = model.predict_eps(z, t, with_null(null_vec, false));
            const VideoLatent e00 = model.predict_eps(z, t, with_null(null_vec, true));
            for (size_t i = 0; i < eps.v.size(); ++i)
                eps.v[i] =
                    (1.0 - si) * e00.v[i] + (si - s) * e0i.v[i] + s * eps_cond.v[i];
        }
        Step st;
        st.z_next = ddim_sample_step(z, eps, t, schedule);
        st.loss = sq_distance(st.z_next, pivot_prev);
        return st;
    }

    // dL/d null_vec for upstream = dL/d eps_hat
    std::vector<double> gradient(const VideoLatent& z, int t, const std::vector<double>& null_vec,
                                 const VideoLatent& upstream) const {
        if (!dual) {
            VideoLatent u = upstream;
            for (double& v : u.v) v *= (1.0 - s);
            return model.backward_inputs(z, t, with_null(null_vec, false), u).wrt_text_cond;
        }
        VideoLatent u0i = upstream, u00 = upstream;
        for (double& v : u0i.v) v *= (si - s);
        for (double& v : u00.v) v *= (1.0 - si);
        std::vector<double> g =
            model.backward_inputs(z, t, with_null(null_vec, false), u0i).wrt_text_cond;
        const std::vector<double> g00 =
            model.backward_inputs(z, t, with_null(null_vec, true), u00).wrt_text_cond;
        for (size_t i = 0; i < g.size(); ++i) g[i] += g00[i];
        return g;
    }
};

}  // namespace

NullTextResult null_text_invert(const TrainedDenoiser& denoiser, const VideoLatent& z_0,
                                const Conditioning& cond, const GuidanceConfig& guidance,
                                const NoiseSchedule& schedule, const NullTextOptions& opts) {
    const int T = schedule.steps();
    if (opts.inner_steps < 0 || !(opts.step_size > 0.0))
        throw ConfigError("null_text_invert: inner_steps must be >= 0 and step_size > 0");

    const GuidedNullEval eval(denoiser, cond, guidance, schedule);

    // pivot trajectory at scale 1 under the full conditioning
    GuidanceConfig pivot_guidance;
    pivot_guidance.text_scale = 1.0;
    pivot_guidance.null_text = guidance.null_text;
    const InvertResult inv = ddim_invert_loop(denoiser, z_0, cond, schedule, pivot_guidance);

    NullTextResult res;
    res.z_T = inv.z_T;
    res.null_embeddings.assign(T + 1, {});
    res.loss_before.assign(T + 1, 0.0);
    res.loss_after.assign(T + 1, 0.0);

    std::vector<double> null_vec = guidance.null_text.vec;  // warm-started across timesteps
    VideoLatent z = inv.z_T;
    double eta = opts.step_size;  // line-search state carries across timesteps

    for (int t = T; t >= 1; --t) {
        const VideoLatent& pivot_prev = inv.pivot.at_timestep(t - 1);
        const VideoLatent eps_cond = denoiser.predict_eps(z, t, cond);

        GuidedNullEval::Step cur = eval(z, t, null_vec, eps_cond, pivot_prev);
        res.loss_before[t] = cur.loss;

        // When the guided step does not depend on the null embedding the
        // gradients vanish; skip the descent loop and leave it untouched.
        const double eps_coeff = ddim_step_eps_coeff(t, schedule);

        for (int it = 0; it < opts.inner_steps && !eval.inert(); ++it) {
            VideoLatent upstream(z.frames, z.dim);
            for (size_t i = 0; i < upstream.v.size(); ++i)
                upstream.v[i] = 2.0 * (cur.z_next.v[i] - pivot_prev.v[i]) * eps_coeff;
            const std::vector<double> g = eval.gradient(z, t, null_vec, upstream);

            double gnorm2 = 0.0;
            for (double v : g) {
                if (!std::isfinite(v))
                    throw NumericalError("null_text_invert: non-finite gradient at t=" +
                                         std::to_string(t));
                gnorm2 += v * v;
            }
            if (gnorm2 < 1e-28) break;  // at the numerical floor

            const double tol = opts.increase_tolerance * (1.0 + cur.loss);
            bool accepted = false;
            for (int halving = 0; halving <= 5; ++halving) {
                std::vector<double> trial_vec = null_vec;
                for (size_t i = 0; i < trial_vec.size(); ++i) trial_vec[i] -= eta * g[i];
                const GuidedNullEval::Step trial = eval(z, t, trial_vec, eps_cond, pivot_prev);
                if (trial.loss <= cur.loss + tol) {
                    null_vec = std::move(trial_vec);
                    cur = trial;
                    accepted = true;
                    if (halving == 0) eta *= 2.0;  // ramp while steps keep landing
                    break;
                }
                eta *= 0.5;
            }
            if (!accepted)
                throw NumericalError(
                    "null_text_invert: loss increased after 5 halvings at t=" + std::to_string(t) +
                    " (loss=" + std::to_string(cur.loss) + ")");
        }

        res.loss_after[t] = cur.loss;
        res.null_embeddings[t] = null_vec;
        z = cur.z_next;
    }
    return res;
}

}  // namespace latentfuse
