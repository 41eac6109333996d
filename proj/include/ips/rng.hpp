#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace ips {

// Stateless 64-bit finalizer (splitmix64 output function).
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Seed for stream `k` under `master`; independent of how many other streams exist.
constexpr std::uint64_t stream_seed(std::uint64_t master, std::uint64_t k) noexcept {
    return mix64(mix64(master) ^ mix64(k + 0x632be59bd9b4e019ULL));
}

// Portable random source: the engine is fully specified by the standard and every
// distribution below is implemented here, so streams are identical on all platforms.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(mix64(seed)) {}

    static Rng stream(std::uint64_t master, std::uint64_t k) { return Rng(stream_seed(master, k)); }

    std::uint64_t bits() { return engine_(); }

    // Uniform on [0,1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    // Uniform on [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    double exponential(double rate) { return -std::log1p(-uniform()) / rate; }

    bool bernoulli(double p) { return uniform() < p; }

    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        return static_cast<std::uint64_t>((static_cast<unsigned __int128>(engine_()) * n) >> 64);
    }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u = 0.0;
        while (u == 0.0) u = uniform();
        const double v = uniform();
        const double radius = std::sqrt(-2.0 * std::log(u));
        spare_ = radius * std::sin(2.0 * std::numbers::pi * v);
        has_spare_ = true;
        return radius * std::cos(2.0 * std::numbers::pi * v);
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace ips
