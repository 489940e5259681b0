#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <utility>

namespace wmc {

/// SplitMix64 generator (Steele, Lea & Flood 2014): 64-bit state, one add and
/// a three-round xor-shift-multiply finalizer per draw.
///
/// All derived draws (uniform doubles, bounded integers, normals, shuffles) are
/// computed here rather than through <random> distributions, whose outputs are
/// implementation-defined; runs are therefore bit-reproducible across
/// standard libraries.
class Rng {
public:
    using result_type = std::uint64_t;

    explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    std::uint64_t state() const { return state_; }
    void set_state(std::uint64_t s) { state_ = s; }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return double((*this)() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n), rejection-sampled to avoid modulo bias.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = max() - max() % n;
        std::uint64_t r;
        do r = (*this)();
        while (r >= limit);
        return r % n;
    }

    /// Standard normal via Box-Muller (cosine branch only).
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    template <typename T>
    void shuffle(std::span<T> items) {
        for (std::size_t i = items.size(); i > 1; --i) std::swap(items[i - 1], items[below(i)]);
    }

    /// Independent stream for a (seed, index) pair.
    static Rng derive(std::uint64_t seed, std::uint64_t index) {
        Rng mix(seed ^ (index * 0xD1B54A32D192ED03ull));
        mix();
        return Rng(mix());
    }

private:
    std::uint64_t state_;
};

}  // namespace wmc
