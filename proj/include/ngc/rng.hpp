// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>

namespace ngc {

// Counter-based generator: every value is a pure function of (seed, stream key,
// counter). Streams keyed by e.g. (trajectory, layer, round) can be drawn in any
// order, so parallel rollouts stay reproducible.
class CounterRng {
public:
    CounterRng() = default;
    CounterRng(uint64_t seed, uint64_t k0 = 0, uint64_t k1 = 0, uint64_t k2 = 0)
        : state_(mix(mix(mix(mix(0x9e3779b97f4a7c15ULL ^ seed) ^ k0) ^ k1) ^ k2)) {}

    uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        return mix(state_);
    }

    // Uniform in (0,1), clamped away from both endpoints.
    double next_uniform() {
        double u = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
        if (u < 1e-300) u = 1e-300;
        if (u > 1.0 - 1e-16) u = 1.0 - 1e-16;
        return u;
    }

    // Box-Muller, one value per call (the pair's second half is discarded; clarity
    // over throughput at this scale).
    double next_gaussian() {
        double u1 = next_uniform();
        double u2 = next_uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    double next_gumbel() {
        double u = next_uniform();
        return -std::log(-std::log(u));
    }

    // Integer in [0, n).
    uint64_t next_below(uint64_t n) { return next_u64() % n; }

private:
    static uint64_t mix(uint64_t z) {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    uint64_t state_ = 0;
};

}  // namespace ngc
