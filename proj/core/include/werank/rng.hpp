#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace werank {

/// Deterministic 64-bit generator (xoshiro256**, Blackman & Vigna) seeded
/// through splitmix64. Substreams are derived by hashing (seed, stream ids),
/// so any (config, seed) pair reproduces bit-identical draws across runs.
class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t x = seed;
        for (auto& word : state_) word = split_mix(x);
    }

    /// Independent substream for a labelled consumer (view index, epoch, ...).
    static Rng substream(std::uint64_t seed, std::uint64_t stream) {
        return Rng(derive(seed, stream));
    }
    static Rng substream(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
        return Rng(derive(derive(seed, a), b));
    }

    static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream) {
        std::uint64_t x = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
        std::uint64_t h = split_mix(x);
        return h ^ split_mix(h + stream);
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    /// Standard normal via Box-Muller; the paired draw is cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    /// Uniform integer in [0, n), n > 0. Rejection-free modulo of a 64-bit
    /// draw; bias is negligible for the desk-scale n used here.
    int uniform_int(int n) {
        return static_cast<int>(next_u64() % static_cast<std::uint64_t>(n));
    }

    bool bernoulli(double p) { return uniform() < p; }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_int(static_cast<int>(i)));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }
    static std::uint64_t split_mix(std::uint64_t& x) {
        x += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = x;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }
    static std::uint64_t split_mix(std::uint64_t&& x) {
        std::uint64_t y = x;
        return split_mix(y);
    }

    std::uint64_t state_[4] = {};
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace werank
