#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace hyplan {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state;
    z = (z ^ (z >> 30u)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27u)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31u);
}

// Mixes extra words into a seed so derived streams are decorrelated.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0,
                              std::uint64_t c = 0) {
    std::uint64_t s = seed ^ (a * 0x9e3779b97f4a7c15ull);
    splitmix64(s);
    s ^= b * 0xbf58476d1ce4e5b9ull;
    splitmix64(s);
    s ^= c * 0x94d049bb133111ebull;
    return splitmix64(s);
}

inline std::uint64_t hash_str(std::string_view s, std::uint64_t seed = 0x243f6a8885a308d3ull) {
    std::uint64_t h = seed;
    for (char ch : s) {
        h ^= static_cast<std::uint64_t>(static_cast<unsigned char>(ch));
        h *= 0x100000001b3ull;
    }
    return h;
}

// Deterministic random stream. Distribution helpers are hand-rolled because
// std::uniform_real_distribution and friends are implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n).
    std::uint64_t uniform_int(std::uint64_t n) {
        // Rejection-free modulo is fine at our scales; bias < 2^-53.
        return static_cast<std::uint64_t>(uniform() * static_cast<double>(n));
    }

    // Standard normal via Box-Muller.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    bool bernoulli(double p) { return uniform() < p; }

private:
    std::mt19937_64 gen_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace hyplan
