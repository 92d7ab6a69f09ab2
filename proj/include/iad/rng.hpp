#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>

#include "iad/matrix.hpp"

namespace iad {

// SplitMix64-based generator. The uniform integer stream is bit-portable;
// keyed substreams (derive) give independent noise per (seed, checkpoint,
// sample) without any shared mutable state, which is what keeps the
// influence kernels deterministic under any thread count.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed), seed_(seed) {}

  std::uint64_t next_u64();

  // Uniform in [0, 1) with 53 random bits.
  double uniform01();

  // Uniform integer in [0, bound), bias-free via rejection. bound > 0.
  std::uint64_t below(std::uint64_t bound);

  // Standard normal via the Marsaglia polar method (pairs, one cached).
  double normal();

  // Fisher-Yates shuffle of an index vector.
  void shuffle(std::vector<std::size_t>& indices);

  // Draw k distinct indices from [0, n) without replacement, ascending order.
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

  // New independent generator keyed by the ORIGINAL seed and the given
  // words; unaffected by how much of this stream has been consumed.
  Rng derive(std::initializer_list<std::uint64_t> key) const;

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t state_;
  std::uint64_t seed_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// i.i.d. standard-normal matrix; same rng state + shape -> identical result.
Matrix gaussian_sample(Rng& rng, std::size_t rows, std::size_t cols);

// FNV-1a over raw bytes; used to key per-sample noise streams by content.
std::uint64_t fnv1a64(const void* bytes, std::size_t len);
std::uint64_t hash_sample(std::span<const double> sample);

}  // namespace iad
