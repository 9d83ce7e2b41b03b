#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

#include "mind/errors.hpp"

namespace mind {

// Deterministic random source. All sampling is built on the raw mt19937_64
// stream with explicit transforms (no std distributions), so a seed fully
// determines every draw on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1).
  double uniform();
  // Uniform in [lo, hi).
  double uniform(double lo, double hi);

  // Standard normal via Box-Muller on explicit uniforms; the spare of each
  // pair is cached so consecutive calls consume a predictable stream.
  double normal();
  std::vector<double> normal_vec(std::size_t n);

  // Unbiased uniform integer in [0, bound).
  std::uint64_t bounded(std::uint64_t bound);

  // Uniform random permutation of {0..n-1} (Fisher-Yates).
  std::vector<std::size_t> permutation(std::size_t n);

  // Uniform fixed-point-free permutation (rejection from permutation()).
  // Throws BatchSizeError for n < 2: no derangement exists.
  std::vector<std::size_t> derangement(std::size_t n);

 private:
  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Stable sub-seed derivation: one master seed fans out to independent
// streams keyed by a purpose tag (and optional index).
std::uint64_t derive_seed(std::uint64_t master, std::string_view tag,
                          std::uint64_t index = 0);

}  // namespace mind
