#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace waveud {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

} // namespace detail

// xoshiro256** seeded through splitmix64. Self-contained so every stream is
// bit-reproducible across platforms and toolchains; std::mt19937 plus the
// standard distributions are not guaranteed stable between library versions.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed) {
        std::uint64_t sm = seed;
        for (auto& word : state_) word = detail::splitmix64(sm);
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

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [lo, hi], inclusive.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        const std::uint64_t range = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<std::int64_t>(next_u64() % range);
    }

    // Standard normal via Box-Muller. Consumes two uniforms per sample and
    // keeps no cached spare, so the state alone determines the stream.
    double normal() {
        const double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
    }

    // Independent deterministic substream. Depends only on the original seed
    // and the stream id, never on how much of this Rng has been consumed.
    Rng fork(std::uint64_t stream) const {
        std::uint64_t sm = seed_ ^ (0x9e3779b97f4a7c15ull + stream * 0xd1342543de82ef95ull);
        return Rng(detail::splitmix64(sm));
    }

    std::array<std::uint64_t, 4> state() const { return state_; }
    std::uint64_t seed() const { return seed_; }

    void set_state(const std::array<std::uint64_t, 4>& s, std::uint64_t seed) {
        state_ = s;
        seed_ = seed;
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::array<std::uint64_t, 4> state_{};
    std::uint64_t seed_ = 0;
};

} // namespace waveud
