#ifndef RSM_RNG_HPP
#define RSM_RNG_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <vector>

namespace rsm {

// Deterministic, cross-platform RNG. std::mt19937 is portable but the
// standard distributions are implementation-defined, so uniform/normal
// draws are hand-rolled on top of xoshiro256**.
inline std::uint64_t splitmix64_next(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

class Rng {
  public:
    Rng() : Rng(0) {}

    explicit Rng(std::uint64_t seed) {
        std::uint64_t sm = seed;
        for (auto& word : state_) word = splitmix64_next(sm);
    }

    // Derives an independent stream from (seed, path...). Streams for
    // distinct paths never share state, so adding agents or purposes does
    // not perturb existing draws.
    static Rng stream(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
        std::uint64_t h = seed;
        for (std::uint64_t part : path) {
            h = splitmix64_next(h) ^ (part + 0x9e3779b97f4a7c15ULL);
        }
        return Rng(splitmix64_next(h));
    }

    std::uint64_t next_u64() {
        auto rotl = [](std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); };
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

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller; uses two uniforms per draw.
    double normal() {
        const double u1 = 1.0 - uniform();  // (0, 1], keeps log finite
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    // Unbiased integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t threshold = (-n) % n;
        for (;;) {
            const std::uint64_t x = next_u64();
            if (x >= threshold) return x % n;
        }
    }

    // k distinct indices drawn uniformly from [0, n), in draw order
    // (partial Fisher-Yates).
    std::vector<int> sample_without_replacement(int n, int k) {
        std::vector<int> pool(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) pool[static_cast<std::size_t>(i)] = i;
        std::vector<int> picked;
        picked.reserve(static_cast<std::size_t>(k));
        for (int i = 0; i < k; ++i) {
            const auto j = static_cast<std::size_t>(i) + below(static_cast<std::uint64_t>(n - i));
            std::swap(pool[static_cast<std::size_t>(i)], pool[j]);
            picked.push_back(pool[static_cast<std::size_t>(i)]);
        }
        return picked;
    }

  private:
    std::array<std::uint64_t, 4> state_{};
};

// Purpose tags for stream splitting; values are part of the reproducibility
// contract and must not be reordered.
namespace stream {
inline constexpr std::uint64_t kActorInit = 1;
inline constexpr std::uint64_t kCriticInit = 2;
inline constexpr std::uint64_t kEnvReset = 3;
inline constexpr std::uint64_t kActionNoise = 4;
inline constexpr std::uint64_t kGossipTargets = 5;
inline constexpr std::uint64_t kMixSamples = 6;
inline constexpr std::uint64_t kEvalReset = 7;
inline constexpr std::uint64_t kTopology = 8;
}  // namespace stream

}  // namespace rsm

#endif  // RSM_RNG_HPP
