#include "latentfuse/noise_schedule.hpp"

#include <cstring>
#include <string>

#include "latentfuse/rng.hpp"

namespace latentfuse {

NoiseSchedule NoiseSchedule::linear(int steps, double beta_start, double beta_end) {
    if (steps < 1) throw ConfigError("NoiseSchedule: steps must be >= 1");
    if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
        throw ConfigError("NoiseSchedule: need 0 < beta_start <= beta_end < 1, got [" +
                          std::to_string(beta_start) + ", " + std::to_string(beta_end) + "]");

    std::vector<double> betas(steps);
    if (steps == 1) {
        betas[0] = beta_start;
    } else {
        for (int t = 0; t < steps; ++t)
            betas[t] = beta_start + (beta_end - beta_start) * t / (steps - 1);
    }

    std::vector<double> abars(steps + 1);
    abars[0] = 1.0;
    for (int t = 1; t <= steps; ++t) abars[t] = abars[t - 1] * (1.0 - betas[t - 1]);
    return NoiseSchedule(std::move(betas), std::move(abars));
}

double NoiseSchedule::beta(int t) const {
    if (t < 1 || t > steps()) throw IndexError("NoiseSchedule::beta: t out of [1, T]");
    return betas_[t - 1];
}

double NoiseSchedule::alpha_bar(int t) const {
    if (t < 0 || t > steps()) throw IndexError("NoiseSchedule::alpha_bar: t out of [0, T]");
    return alpha_bars_[t];
}

uint64_t NoiseSchedule::hash() const {
    uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](uint64_t bits) {
        h ^= bits;
        h *= 0x100000001b3ULL;
        h = splitmix64(h);
    };
    mix(static_cast<uint64_t>(steps()));
    for (double b : betas_) {
        uint64_t bits;
        std::memcpy(&bits, &b, sizeof(bits));
        mix(bits);
    }
    return h;
}

}  // namespace latentfuse
