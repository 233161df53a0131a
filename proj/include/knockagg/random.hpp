#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace knockagg {

// splitmix64 finalizer
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Counter-based seed derivation: the child seed is a pure function of the
/// parent seed and the tag sequence, so work units can run in any order.
constexpr std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> tags) noexcept {
    std::uint64_t h = mix64(base);
    for (auto t : tags) h = mix64(h ^ mix64(t + 0x632be59bd9b4e019ULL));
    return h;
}

/// Stream tags so that different consumers of one seed never collide.
namespace stream {
inline constexpr std::uint64_t design = 1;
inline constexpr std::uint64_t signal = 2;
inline constexpr std::uint64_t noise = 3;
inline constexpr std::uint64_t node = 4;
inline constexpr std::uint64_t knockoff = 5;
inline constexpr std::uint64_t coin = 6;
inline constexpr std::uint64_t folds = 7;
inline constexpr std::uint64_t orthogonal = 8;
}  // namespace stream

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

/// Fair ±1 coin, one independent draw per (seed, index).
inline int seeded_coin(std::uint64_t seed, std::uint64_t index) {
    return (derive_seed(seed, {index}) >> 63) ? 1 : -1;
}

}  // namespace knockagg
