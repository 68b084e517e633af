#pragma once

#include <cstdint>
#include <random>

namespace melisa {

/// Deterministic random stream: mt19937_64 with explicit Box-Muller normals
/// and rejection-sampled bounded integers, so the byte-identical-replay
/// guarantee does not depend on the standard library's distribution
/// implementations.
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t raw() { return gen_(); }

    /// Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    /// Uniform in (0, 1].
    double uniform_open0() { return 1.0 - uniform(); }

    /// Standard normal via Box-Muller; two uniforms per draw, no cached spare.
    double normal();

    /// Uniform integer in [0, n), n >= 1, without modulo bias.
    uint64_t uniform_int(uint64_t n);

    bool bernoulli(double p) { return uniform() < p; }

private:
    std::mt19937_64 gen_;
};

}  // namespace melisa
