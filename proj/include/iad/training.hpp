#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "iad/loss.hpp"
#include "iad/matrix.hpp"

namespace iad {

struct TrainConfig {
  std::size_t epochs = 1;
  std::size_t batch_size = 1;
  double learning_rate = 1e-3;
  std::size_t checkpoint_step = 1;  // epochs between snapshots
  std::uint64_t seed = 0;

  void validate() const;  // throws ConfigError
};

struct Checkpoint {
  std::size_t epoch = 0;        // 1-based epoch index at snapshot time
  double learning_rate = 0.0;   // step size active during that epoch
  FlatParams params;
};

using Fingerprint = std::array<std::uint8_t, 32>;

// Fingerprint of a layout + spec description; stores refuse to load into a
// mismatched model.
Fingerprint fingerprint_of(const ParamLayout& layout, const std::string& spec_desc);

struct CheckpointStore {
  Fingerprint fingerprint{};
  std::vector<Checkpoint> checkpoints;

  std::size_t size() const { return checkpoints.size(); }
  bool empty() const { return checkpoints.empty(); }
};

struct EpochStat {
  std::size_t epoch = 0;
  double mean_loss = 0.0;  // mean training loss over the epoch's batches
};

// Shuffled minibatch SGD: theta <- theta - eta * mean-batch-gradient.
// Snapshots after every checkpoint_step epochs and always after the final
// epoch (deduplicated when they coincide). Deterministic given cfg.seed.
// Throws NumericError naming epoch and batch if the loss goes non-finite.
CheckpointStore train(const SampleLoss& loss, const FlatParams& init,
                      const Matrix& train_set, const TrainConfig& cfg,
                      const std::string& spec_desc,
                      std::vector<EpochStat>* stats = nullptr);

// Binary round-trip, bit-exact. Magic "TIAD", version, fingerprint, then
// per checkpoint: epoch u64, learning rate f64, count u64, raw LE doubles.
void save_store(const CheckpointStore& store, const std::filesystem::path& path);
CheckpointStore load_store(const std::filesystem::path& path, const ParamLayout& layout,
                           const std::optional<Fingerprint>& expected);

}  // namespace iad
