#pragma once

#include <cstdint>
#include <vector>

#include "latentfuse/error.hpp"

namespace latentfuse {

// Discrete diffusion noise schedule: per-step variance increments beta_t and
// their running products alpha_bar_t. Immutable after construction; all
// arithmetic in double so oracle comparisons stay tight.
class NoiseSchedule {
public:
    // Linearly interpolated betas from beta_start to beta_end inclusive.
    static NoiseSchedule linear(int steps, double beta_start, double beta_end);

    int steps() const { return static_cast<int>(betas_.size()); }

    // t in [1, T]
    double beta(int t) const;

    // t in [0, T]; alpha_bar(0) == 1 exactly.
    double alpha_bar(int t) const;

    const std::vector<double>& betas() const { return betas_; }
    const std::vector<double>& alpha_bars() const { return alpha_bars_; }

    // Stable content hash, recorded in trained-weight headers.
    uint64_t hash() const;

private:
    NoiseSchedule(std::vector<double> betas, std::vector<double> alpha_bars)
        : betas_(std::move(betas)), alpha_bars_(std::move(alpha_bars)) {}

    std::vector<double> betas_;       // betas_[t-1] = beta_t
    std::vector<double> alpha_bars_;  // alpha_bars_[t] = alpha_bar_t, size T+1
};

}  // namespace latentfuse
