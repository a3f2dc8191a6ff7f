#pragma once

#include <cstdint>
#include <random>

namespace mdiqds {

using Rng = std::mt19937_64;

/// Independent stream for (seed, stream index). Batches, trials and parties
/// each get their own index so results never depend on scheduling.
Rng make_stream(std::uint64_t seed, std::uint64_t stream);

/// Derive a child seed; used to give sub-components disjoint stream spaces.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt);

/// Uniform double in [0, 1) with 53 random bits.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline bool bernoulli(Rng& rng, double p) { return uniform01(rng) < p; }

}  // namespace mdiqds
