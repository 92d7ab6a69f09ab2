#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "iad/loss.hpp"
#include "iad/training.hpp"

namespace iad {

struct InfluenceConfig {
  std::size_t subsample_size = 1;        // m
  bool resample_per_checkpoint = false;  // redraw B at each checkpoint
  std::uint64_t seed = 0;
};

// Raw mean influence per validation row; higher = more normal. The anomaly
// score handed to the evaluator is the negation.
struct InfluenceResult {
  Vector values;
};

// Sum over checkpoints of eta_i * <grad l(theta_i, x'), grad l(theta_i, x)>.
// Monte-Carlo losses key their noise by (noise_seed, checkpoint index,
// sample hash), so repeated calls are reproducible.
double tracin_cp(const CheckpointStore& store, const SampleLoss& loss,
                 std::span<const double> x, std::span<const double> x_prime,
                 std::uint64_t noise_seed);

// tracin_cp(x, x) >= 0.
double self_influence(const CheckpointStore& store, const SampleLoss& loss,
                      std::span<const double> x, std::uint64_t noise_seed);

// Mean TracInCP influence of a random train subsample B (|B| = m, drawn
// once before the checkpoint loop; per-checkpoint when the flag is set) on
// each validation row. Fast path: the m train gradients are computed once
// per checkpoint and reused for every validation row; OpenMP-parallel over
// rows, bitwise-deterministic for any thread count.
InfluenceResult tracin_ad(const CheckpointStore& store, const SampleLoss& loss,
                          const Matrix& train_set, const Matrix& val_set,
                          const InfluenceConfig& cfg);

// Serial reference: the literal double loop over (validation row, B) with
// nothing precomputed. Kept for tests and the bench command; must agree
// with tracin_ad to ~1e-10.
InfluenceResult tracin_ad_naive(const CheckpointStore& store, const SampleLoss& loss,
                                const Matrix& train_set, const Matrix& val_set,
                                const InfluenceConfig& cfg);

// Leave-one-out retraining oracle for the influence of train row x_index on
// x_prime: loss(theta_without, x') - loss(theta_full, x'), both trained under
// identical seeds. Test-only; refuses train sets above 50 rows or below 2.
double loo_influence_oracle(const Matrix& train_set, std::size_t x_index,
                            std::span<const double> x_prime, const SampleLoss& loss,
                            const FlatParams& init, const TrainConfig& cfg);

}  // namespace iad
