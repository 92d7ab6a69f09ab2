#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>

#include "iad/mlp.hpp"

namespace iad {

// Identifies the noise stream a Monte-Carlo loss should use. Deterministic
// losses ignore it. Implementations derive the actual stream from
// (seed, stream, hash(sample)) so the same sample sees the same draws at a
// given checkpoint no matter which code path asks.
struct NoiseKey {
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
};

// A per-sample loss family over a flat parameter vector: the one interface
// training, TracIn and the oracles need. Implementations are stateless and
// safe to share across threads.
class SampleLoss {
 public:
  virtual ~SampleLoss() = default;

  virtual double loss(const FlatParams& params, std::span<const double> sample,
                      NoiseKey key) const = 0;
  virtual FlatParams gradient(const FlatParams& params, std::span<const double> sample,
                              NoiseKey key) const = 0;
  virtual const ParamLayout& layout() const = 0;
  virtual std::size_t sample_dim() const = 0;
  virtual std::string name() const = 0;

  // Mean loss and mean gradient over the rows of a batch. The default loops
  // over gradient()/loss(); MLP-backed losses override with a batched pass
  // that yields the loss as a byproduct of the forward sweep.
  virtual double batch_loss(const FlatParams& params, const Matrix& batch,
                            NoiseKey key) const;
  virtual FlatParams batch_gradient(const FlatParams& params, const Matrix& batch,
                                    NoiseKey key, double* mean_loss = nullptr) const;
};

}  // namespace iad
