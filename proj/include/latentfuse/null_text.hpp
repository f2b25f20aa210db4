#pragma once

#include <vector>

#include "latentfuse/ddim.hpp"
#include "latentfuse/trained_denoiser.hpp"

namespace latentfuse {

struct NullTextOptions {
    int inner_steps = 10;
    double step_size = 1e-2;
    double increase_tolerance = 1e-12;  // relative slack before a step counts as an increase
};

struct NullTextResult {
    VideoLatent z_T;
    // Optimized null embedding per timestep, indexed by t in [1, T]; entry 0
    // unused. Shaped for GuidanceConfig::null_text_overrides.
    std::vector<std::vector<double>> null_embeddings;
    std::vector<double> loss_before;  // indexed by t, entry 0 unused
    std::vector<double> loss_after;
};

// Pivot inversion at scale 1 followed by per-timestep optimization of the
// null text embedding so that the guided sampling step lands on the pivot
// trajectory. Descent uses backtracking halving (up to 5) so the recorded
// loss never increases; the running latent advances with the optimized step.
NullTextResult null_text_invert(const TrainedDenoiser& denoiser, const VideoLatent& z_0,
                                const Conditioning& cond, const GuidanceConfig& guidance,
                                const NoiseSchedule& schedule, const NullTextOptions& opts);

}  // namespace latentfuse
