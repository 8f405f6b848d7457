#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace prefviz {

/// Every stochastic component draws from an explicitly passed engine so runs
/// are reproducible from a single seed.
using Rng = std::mt19937_64;

/// Identifier of a sampled state within one run's state table.
using StateId = std::int64_t;

/// Independent stream derived from (seed, stream). Different streams of the
/// same seed never share a sequence prefix.
Rng make_stream(std::uint64_t seed, std::uint64_t stream);

/// Textual engine state, suitable for checkpoints.
std::string save_rng(const Rng& rng);
void restore_rng(Rng& rng, const std::string& text);

}  // namespace prefviz
