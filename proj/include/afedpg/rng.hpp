#pragma once

// Deterministic named random streams. Every stochastic quantity in the
// library draws from a stream keyed by (master seed, tag, indices), so a
// run is fully reproducible from its config and independent of the order
// in which other streams are consumed.

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace afedpg {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t hash_tag(std::string_view tag) {
    // FNV-1a
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : tag) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

class RngStream {
public:
    RngStream(std::uint64_t master_seed, std::string_view tag,
              std::uint64_t i = 0, std::uint64_t j = 0) {
        std::uint64_t s = splitmix64(master_seed ^ hash_tag(tag));
        s = splitmix64(s ^ (0x9e3779b97f4a7c15ULL * (i + 1)));
        s = splitmix64(s ^ (0xc2b2ae3d27d4eb4fULL * (j + 1)));
        engine_.seed(s);
    }

    std::uint64_t u64() { return engine_(); }

    /// Uniform double in [0, 1) with 53 bits of precision.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, n).
    int uniform_int(int n) { return static_cast<int>(engine_() % static_cast<std::uint64_t>(n)); }

    /// Sample an index from an unnormalized-free probability vector via its CDF.
    int categorical(const double* probs, int n) {
        double u = uniform();
        double acc = 0.0;
        for (int i = 0; i < n; ++i) {
            acc += probs[i];
            if (u < acc) return i;
        }
        return n - 1;  // guard against accumulated rounding
    }

    int categorical(const std::vector<double>& probs) {
        return categorical(probs.data(), static_cast<int>(probs.size()));
    }

    /// Standard normal via Box-Muller (second value discarded).
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace afedpg
