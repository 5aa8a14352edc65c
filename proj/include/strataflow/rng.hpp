#pragma once

#include <cmath>
#include <cstdint>

namespace strataflow {

/// Seeded splitmix64 stream. Every draw is fully specified by the seed and
/// the call sequence, so runs are bit-reproducible across platforms and
/// standard libraries (std::normal_distribution is not).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Uniform double in [0, 1).
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller (no cached spare: call order stays
    /// independent of how results are consumed).
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

    /// Derive an independent child seed; used to fan one experiment seed out
    /// to sub-components without correlated streams.
    static std::uint64_t derive(std::uint64_t seed, std::uint64_t salt) {
        Rng r(seed ^ (0x6a09e667f3bcc909ULL + salt * 0x9e3779b97f4a7c15ULL));
        return r.next_u64();
    }

private:
    std::uint64_t state_;
};

} // namespace strataflow
