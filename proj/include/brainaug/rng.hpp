#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

namespace brainaug {

/// Seeded random source with hand-rolled transforms so that every draw is
/// reproducible bit-for-bit across runs and platforms. The standard library
/// distributions are implementation-defined, so only the raw mt19937_64
/// engine is used here.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform double in [0, 1) with 53 bits of entropy.
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller. Two uniforms per draw, no cached spare,
    /// so the consumed stream length is a function of the call count alone.
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) *
               std::cos(2.0 * std::numbers::pi * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    /// Unbiased integer in [0, n) by rejection.
    std::uint64_t bounded(std::uint64_t n) {
        const std::uint64_t threshold = -n % n;
        for (;;) {
            const std::uint64_t r = engine_();
            if (r >= threshold) return r % n;
        }
    }

    int uniform_int(int n) { return static_cast<int>(bounded(static_cast<std::uint64_t>(n))); }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = bounded(i);
            std::swap(v[i - 1], v[j]);
        }
    }

    /// Derive an independent stream, e.g. one per pipeline stage or fold.
    Rng fork(std::uint64_t stream) {
        std::uint64_t z = engine_() + 0x9e3779b97f4a7c15ull * (stream + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return Rng(z ^ (z >> 31));
    }

  private:
    std::mt19937_64 engine_;
};

}  // namespace brainaug
