// Deterministic random number generation. Everything stochastic in the
// library draws from this generator so that results are reproducible
// bit-for-bit for a given seed, independent of platform stdlib details
// and of how work is distributed over threads.
#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string_view>
#include <vector>

namespace xuq {

// 64-bit mix (splitmix64 step). Also the seed-splitting rule: a stream for
// run index i under root seed r is seeded with mix64(r ^ i). The additive
// constant avoids the finalizer's fixed point at zero.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ULL;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebULL;
    x ^= x >> 31;
    return x;
}

inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t index) {
    return mix64(root ^ index);
}

// Salts for independent sub-streams of one root seed.
namespace seed_salt {
inline constexpr std::uint64_t kEnsembleRun = 0x5e6d73746d626c65ULL;
inline constexpr std::uint64_t kInstanceSampling = 0x696e7374616e6365ULL;
inline constexpr std::uint64_t kGrowingSpheres = 0x67726f7773706872ULL;
inline constexpr std::uint64_t kTruthEnsemble = 0x7472757468656e73ULL;
inline constexpr std::uint64_t kBootstrap = 0x626f6f7473747261ULL;
inline constexpr std::uint64_t kMaskDraw = 0x6d61736b64726177ULL;
inline constexpr std::uint64_t kTangent = 0x74616e67656e7400ULL;
}  // namespace seed_salt

// xoshiro256++ with splitmix64 state expansion.
class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t sm = seed;
        for (auto& word : state_) {
            sm += 0x9e3779b97f4a7c15ULL;
            word = mix64(sm);
        }
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform in [0,1) with 53 bits.
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform in (0,1]; safe as a log() argument.
    double uniform01_open() { return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Unbiased integer in [0, n).
    std::uint64_t bounded(std::uint64_t n) {
        const std::uint64_t threshold = (0 - n) % n;
        for (;;) {
            const std::uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    // Standard normal via Box-Muller (spare cached).
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = uniform01_open();
        const double u2 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    void normal_fill(std::span<double> out) {
        for (auto& x : out) x = normal();
    }

    // k distinct indices from [0, n), in draw order.
    std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k) {
        std::vector<std::size_t> idx(n);
        for (std::size_t i = 0; i < n; ++i) idx[i] = i;
        if (k > n) k = n;
        for (std::size_t i = 0; i < k; ++i) {
            const std::size_t j = i + static_cast<std::size_t>(bounded(n - i));
            std::swap(idx[i], idx[j]);
        }
        idx.resize(k);
        return idx;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(bounded(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::uint64_t state_[4] = {};
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// Stable 64-bit hash of a double vector; pins per-instance randomness (e.g.
// the boundary search inside MVG explainers) to the instance itself.
inline std::uint64_t hash_doubles(std::span<const double> v) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (double d : v) {
        std::uint64_t bits;
        static_assert(sizeof(bits) == sizeof(d));
        __builtin_memcpy(&bits, &d, sizeof(bits));
        h ^= bits;
        h *= 0x100000001b3ULL;
        h = mix64(h);
    }
    return h;
}

inline std::uint64_t hash_bytes(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return mix64(h);
}

}  // namespace xuq
