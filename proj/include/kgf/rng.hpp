#pragma once
// All randomness flows from one run seed through named sub-streams, so a test
// can pin one stream (say, negatives) without perturbing the others.

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

#include "kgf/tensor.hpp"

namespace kgf {

using Rng = std::mt19937_64;

/// Deterministic 64-bit seed for stream `name` under `seed`.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view name);

inline Rng make_stream(std::uint64_t seed, std::string_view name) {
  return Rng(derive_seed(seed, name));
}

/// Standard-normal tensor.
Tensor normal_tensor(std::size_t rows, std::size_t cols, Rng& rng, double stddev = 1.0);

/// Textual engine state (the standard operator<< form) and its inverse.
std::string rng_state(const Rng& rng);
void set_rng_state(Rng& rng, const std::string& state);

}  // namespace kgf
