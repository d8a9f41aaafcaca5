#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <utility>
#include <vector>

namespace deepfn {

inline constexpr std::uint64_t splitmix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// Order-sensitive combination of seeds, for deriving child streams.
inline constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    return splitmix64(seed ^ splitmix64(salt + 0x632BE59BD9B4E019ULL));
}

/**
 * Counter-based generator: draw i is a fixed integer hash of (seed, i), so the
 * stream is identical on every platform. Floating-point variates are built
 * from the integer stream here rather than through <random> distributions,
 * whose algorithms are implementation-defined.
 */
class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed = 0) : seed_(seed), key_(splitmix64(seed)) {}

    std::uint64_t seed() const { return seed_; }
    std::uint64_t counter() const { return counter_; }

    std::uint64_t next_u64() { return splitmix64(key_ + 0xD1B54A32D192ED03ULL * (counter_++)); }

    /// Uniform on [0, 1) with 53 bits of resolution.
    double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller (consumes two draws).
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    bool bernoulli(double p) { return uniform() < p; }

    /// Unbiased integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        if (n <= 1) return 0;
        const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
        std::uint64_t v = next_u64();
        while (v >= limit) v = next_u64();
        return v % n;
    }

    /// Independent child stream, derived from the seed rather than the counter.
    SeededRng fork(std::uint64_t stream) const { return SeededRng(mix_seed(seed_, stream)); }

    template <typename V>
    void shuffle(std::vector<V>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            const std::size_t j = std::size_t(below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    std::uint64_t seed_;
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

}  // namespace deepfn
