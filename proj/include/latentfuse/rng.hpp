#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace latentfuse {

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Deterministic random stream. All randomness in the engine flows through
// explicit Rng instances; independent streams are derived with child().
class Rng {
public:
    explicit Rng(uint64_t seed) : seed_(seed), gen_(splitmix64(seed)) {}

    uint64_t next_u64() { return gen_(); }

    // [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller; consumes two uniforms per draw, no cached spare.
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    // Independent stream derived from this stream's seed and a tag.
    Rng child(uint64_t tag) const {
        return Rng(splitmix64(seed_ ^ splitmix64(tag + 0x517cc1b727220a95ULL)));
    }

    uint64_t seed() const { return seed_; }

private:
    uint64_t seed_;
    std::mt19937_64 gen_;
};

}  // namespace latentfuse
