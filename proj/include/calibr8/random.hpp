#pragma once

#include <cstdint>
#include <random>

namespace calibr8 {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer.
constexpr std::uint64_t splitmix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Counter-based seed derivation: the seed for item `index` of stream
/// `stream` depends only on (master, stream, index), never on the order in
/// which items are processed.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream,
                                    std::uint64_t index = 0) noexcept {
  return splitmix64(splitmix64(splitmix64(master) ^ stream) + index);
}

inline Rng make_rng(std::uint64_t master, std::uint64_t stream, std::uint64_t index = 0) {
  return Rng(derive_seed(master, stream, index));
}

/// Stream tags keep the sub-streams of one master seed disjoint.
namespace stream {
inline constexpr std::uint64_t design = 0x01;
inline constexpr std::uint64_t ensemble = 0x02;
inline constexpr std::uint64_t likelihood = 0x03;
inline constexpr std::uint64_t mcmc = 0x10;
inline constexpr std::uint64_t abc_prior = 0x20;
inline constexpr std::uint64_t abc_sim = 0x21;
inline constexpr std::uint64_t smc = 0x30;
inline constexpr std::uint64_t smc_sim = 0x31;
inline constexpr std::uint64_t history = 0x40;
inline constexpr std::uint64_t eki = 0x50;
inline constexpr std::uint64_t eki_sim = 0x51;
inline constexpr std::uint64_t vi = 0x60;
inline constexpr std::uint64_t surrogate = 0x70;
inline constexpr std::uint64_t predict = 0x80;
inline constexpr std::uint64_t predict_sim = 0x81;
inline constexpr std::uint64_t gp_fit = 0x90;
inline constexpr std::uint64_t mle = 0xa0;
inline constexpr std::uint64_t testbed = 0xb0;
}  // namespace stream

}  // namespace calibr8
