#include "iad/influence.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

#include <atomic>
#include <cmath>
#include <exception>

#include "iad/rng.hpp"

namespace iad {

namespace {

constexpr std::uint64_t kSubsampleTag = 0x7375627324ULL;

// OpenMP loop with exception transport; an exception escaping a parallel
// region would otherwise terminate the process.
template <class Body>
void parallel_for(std::size_t n, Body&& body) {
  std::exception_ptr err = nullptr;
  std::atomic<bool> failed{false};
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < n; ++i) {
    if (failed.load(std::memory_order_relaxed)) continue;
    try {
      body(i);
    } catch (...) {
#pragma omp critical
      {
        if (!err) {
          err = std::current_exception();
          failed.store(true, std::memory_order_relaxed);
        }
      }
    }
  }
  if (err) std::rethrow_exception(err);
}

void check_sample(const SampleLoss& loss, std::span<const double> x, const char* what) {
  if (x.size() != loss.sample_dim()) {
    throw ShapeError(std::string(what) + ": sample dim " + std::to_string(x.size()) +
                     " does not match loss input dim " +
                     std::to_string(loss.sample_dim()));
  }
}

std::vector<std::size_t> draw_subsample(const InfluenceConfig& cfg, std::size_t n_train,
                                        std::size_t checkpoint_index, bool per_checkpoint) {
  Rng rng = per_checkpoint
                ? Rng(cfg.seed).derive({kSubsampleTag, checkpoint_index + 1})
                : Rng(cfg.seed).derive({kSubsampleTag});
  return rng.sample_without_replacement(n_train, cfg.subsample_size);
}

}  // namespace

double tracin_cp(const CheckpointStore& store, const SampleLoss& loss,
                 std::span<const double> x, std::span<const double> x_prime,
                 std::uint64_t noise_seed) {
  if (store.empty()) {
    throw ConfigError("tracin_cp: checkpoint store is empty");
  }
  check_sample(loss, x, "tracin_cp");
  check_sample(loss, x_prime, "tracin_cp");
  double acc = 0.0;
  for (std::size_t i = 0; i < store.checkpoints.size(); ++i) {
    const Checkpoint& cp = store.checkpoints[i];
    const NoiseKey key{noise_seed, i + 1};
    const FlatParams gx = loss.gradient(cp.params, x, key);
    const FlatParams gxp = loss.gradient(cp.params, x_prime, key);
    acc += cp.learning_rate * grad_dot(gxp, gx);
  }
  return acc;
}

double self_influence(const CheckpointStore& store, const SampleLoss& loss,
                      std::span<const double> x, std::uint64_t noise_seed) {
  return tracin_cp(store, loss, x, x, noise_seed);
}

InfluenceResult tracin_ad(const CheckpointStore& store, const SampleLoss& loss,
                          const Matrix& train_set, const Matrix& val_set,
                          const InfluenceConfig& cfg) {
  if (store.empty()) throw ConfigError("tracin_ad: checkpoint store is empty");
  if (cfg.subsample_size == 0 || cfg.subsample_size > train_set.rows()) {
    throw ConfigError("tracin_ad: subsample size m = " +
                      std::to_string(cfg.subsample_size) +
                      " must be in [1, train rows = " +
                      std::to_string(train_set.rows()) + "]");
  }
  if (train_set.cols() != val_set.cols()) {
    throw ShapeError("tracin_ad: train and validation dims differ (" +
                     std::to_string(train_set.cols()) + " vs " +
                     std::to_string(val_set.cols()) + ")");
  }

  const std::size_t n_val = val_set.rows();
  const std::size_t m = cfg.subsample_size;
  InfluenceResult result;
  result.values.assign(n_val, 0.0);

  std::vector<std::size_t> subsample =
      draw_subsample(cfg, train_set.rows(), 0, /*per_checkpoint=*/false);

  for (std::size_t i = 0; i < store.checkpoints.size(); ++i) {
    const Checkpoint& cp = store.checkpoints[i];
    const NoiseKey key{cfg.seed, i + 1};
    if (cfg.resample_per_checkpoint) {
      subsample = draw_subsample(cfg, train_set.rows(), i, /*per_checkpoint=*/true);
    }

    // Precompute the m train gradients once per checkpoint; their sum is all
    // any validation row needs, since (1/m) sum_j <gv, gt_j> = <gv, sum_j gt_j> / m.
    std::vector<FlatParams> train_grads(m);
    parallel_for(m, [&](std::size_t j) {
      train_grads[j] = loss.gradient(cp.params, train_set.row(subsample[j]), key);
    });
    // Summed in index order so the result does not depend on thread count.
    FlatParams train_sum = train_grads[0];
    for (std::size_t j = 1; j < m; ++j) {
      for (std::size_t p = 0; p < train_sum.values.size(); ++p) {
        train_sum.values[p] += train_grads[j].values[p];
      }
    }
    train_grads.clear();
    train_grads.shrink_to_fit();

    const double scale = cp.learning_rate / static_cast<double>(m);
    parallel_for(n_val, [&](std::size_t v) {
      const FlatParams gv = loss.gradient(cp.params, val_set.row(v), key);
      result.values[v] += scale * grad_dot(gv, train_sum);
    });
  }

  require_finite(std::span<const double>(result.values), "tracin_ad influence values");
  return result;
}

InfluenceResult tracin_ad_naive(const CheckpointStore& store, const SampleLoss& loss,
                                const Matrix& train_set, const Matrix& val_set,
                                const InfluenceConfig& cfg) {
  if (store.empty()) throw ConfigError("tracin_ad: checkpoint store is empty");
  if (cfg.subsample_size == 0 || cfg.subsample_size > train_set.rows()) {
    throw ConfigError("tracin_ad: subsample size m = " +
                      std::to_string(cfg.subsample_size) +
                      " must be in [1, train rows = " +
                      std::to_string(train_set.rows()) + "]");
  }

  const std::size_t m = cfg.subsample_size;
  InfluenceResult result;
  result.values.assign(val_set.rows(), 0.0);

  std::vector<std::size_t> subsample =
      draw_subsample(cfg, train_set.rows(), 0, /*per_checkpoint=*/false);

  for (std::size_t i = 0; i < store.checkpoints.size(); ++i) {
    const Checkpoint& cp = store.checkpoints[i];
    const NoiseKey key{cfg.seed, i + 1};
    if (cfg.resample_per_checkpoint) {
      subsample = draw_subsample(cfg, train_set.rows(), i, /*per_checkpoint=*/true);
    }
    for (std::size_t v = 0; v < val_set.rows(); ++v) {
      const FlatParams gv = loss.gradient(cp.params, val_set.row(v), key);
      double acc = 0.0;
      for (std::size_t j = 0; j < m; ++j) {
        const FlatParams gt = loss.gradient(cp.params, train_set.row(subsample[j]), key);
        acc += grad_dot(gv, gt);
      }
      result.values[v] += cp.learning_rate * acc / static_cast<double>(m);
    }
  }
  return result;
}

double loo_influence_oracle(const Matrix& train_set, std::size_t x_index,
                            std::span<const double> x_prime, const SampleLoss& loss,
                            const FlatParams& init, const TrainConfig& cfg) {
  if (train_set.rows() < 2) {
    throw ConfigError("loo_influence_oracle: needs at least 2 training rows");
  }
  if (train_set.rows() > 50) {
    throw ConfigError("loo_influence_oracle: refuses more than 50 training rows "
                      "(full retraining oracle, tiny instances only)");
  }
  if (x_index >= train_set.rows()) {
    throw ConfigError("loo_influence_oracle: x_index out of range");
  }

  Matrix without(train_set.rows() - 1, train_set.cols());
  std::size_t w = 0;
  for (std::size_t r = 0; r < train_set.rows(); ++r) {
    if (r == x_index) continue;
    const auto src = train_set.row(r);
    std::copy(src.begin(), src.end(), without.row(w).begin());
    ++w;
  }

  const CheckpointStore full = train(loss, init, train_set, cfg, "loo-full");
  const CheckpointStore held = train(loss, init, without, cfg, "loo-held");
  const NoiseKey key{cfg.seed, 0};
  const double loss_full = loss.loss(full.checkpoints.back().params, x_prime, key);
  const double loss_held = loss.loss(held.checkpoints.back().params, x_prime, key);
  // Removal hurting x_prime means x was a proponent: oriented to agree in
  // sign with tracin_cp.
  return loss_held - loss_full;
}

}  // namespace iad
