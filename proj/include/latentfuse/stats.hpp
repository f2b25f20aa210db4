#pragma once

#include <algorithm>
#include <vector>

#include "latentfuse/error.hpp"
#include "latentfuse/rng.hpp"

namespace latentfuse {

struct MeanCI {
    double mean = 0.0;
    double lo = 0.0;
    double hi = 0.0;
    int n = 0;
};

inline double mean_of(const std::vector<double>& xs) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

// Percentile bootstrap CI (95%) for the mean.
inline MeanCI bootstrap_mean_ci(const std::vector<double>& xs, int resamples, uint64_t seed) {
    if (xs.empty()) throw ConfigError("bootstrap_mean_ci: empty sample");
    MeanCI ci;
    ci.n = static_cast<int>(xs.size());
    ci.mean = mean_of(xs);

    Rng rng(splitmix64(seed ^ 0xb005ULL));
    std::vector<double> means(resamples);
    for (int b = 0; b < resamples; ++b) {
        double s = 0.0;
        for (size_t i = 0; i < xs.size(); ++i)
            s += xs[rng.next_u64() % xs.size()];
        means[b] = s / static_cast<double>(xs.size());
    }
    std::sort(means.begin(), means.end());
    const auto pick = [&](double q) {
        const int idx = std::clamp(static_cast<int>(q * (resamples - 1)), 0, resamples - 1);
        return means[idx];
    };
    ci.lo = pick(0.025);
    ci.hi = pick(0.975);
    return ci;
}

// Paired-difference bootstrap CI for mean(a[i] - b[i]).
inline MeanCI bootstrap_paired_diff_ci(const std::vector<double>& a, const std::vector<double>& b,
                                       int resamples, uint64_t seed) {
    if (a.size() != b.size() || a.empty())
        throw ConfigError("bootstrap_paired_diff_ci: samples must be non-empty and aligned");
    std::vector<double> diffs(a.size());
    for (size_t i = 0; i < a.size(); ++i) diffs[i] = a[i] - b[i];
    return bootstrap_mean_ci(diffs, resamples, seed);
}

}  // namespace latentfuse
