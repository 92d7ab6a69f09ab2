#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "iad/data.hpp"
#include "iad/eval.hpp"
#include "iad/influence.hpp"
#include "iad/models.hpp"
#include "iad/training.hpp"

namespace iad {

// Flat key-value run configuration; every key is echoed verbatim into the
// output summary so no run is unattributable.
struct RunConfig {
  std::filesystem::path recipe;
  std::filesystem::path out_dir = "out";
  std::string model = "vae";  // vae | dsvdd
  std::string activation = "tanh";
  std::vector<std::size_t> encoder_hidden;
  std::vector<std::size_t> decoder_hidden;  // vae; empty = mirror encoder_hidden
  std::size_t latent_dim = 0;
  std::size_t mc_samples = 1;  // l
  std::size_t epochs = 1;
  std::size_t batch_size = 1;
  double learning_rate = 1e-4;
  std::size_t checkpoint_step = 1;
  std::uint64_t seed = 1;
  std::size_t subsample_size = 64;  // m
  bool resample_per_checkpoint = false;
  std::vector<std::string> scorers = {"tracinad"};  // tracinad | reconstruction | dsvdd-plain
  std::size_t runs = 1;

  std::map<std::string, std::string> raw;  // verbatim key/value echo

  void validate() const;  // throws ConfigError
};

RunConfig load_run_config(const std::filesystem::path& path);

struct PreparedModel {
  std::optional<VaeModel> vae;
  std::optional<DsvddModel> dsvdd;  // center initialized against the train set
  std::unique_ptr<SampleLoss> train_loss;
  FlatParams init;
  std::string spec_desc;
};

// Build model + init params + training loss for one run seed.
PreparedModel build_model(const RunConfig& cfg, std::size_t data_dim,
                          const Matrix& train_set, std::uint64_t run_seed);

// Anomaly scores for one scorer name (tracinad scores are negated mean
// influence, so higher = more anomalous for every scorer).
Vector score_validation(const RunConfig& cfg, const std::string& scorer,
                        const PreparedModel& model, const CheckpointStore& store,
                        const Matrix& train_set, const Matrix& val_set,
                        std::uint64_t run_seed);

struct EvaluateOutcome {
  // Keyed by scorer name; reports are per run, aligned across scorers so a
  // paired comparison (e.g. tracinad vs dsvdd-plain) reads straight off.
  std::map<std::string, RunAggregate> aggregate;
  std::map<std::string, std::vector<ScoreReport>> reports;
};

// The evaluate body, exposed for tests and the acceptance suite. With
// runs == 1 it reuses out_dir/split.bin + store.bin; with runs > 1 each run
// re-splits, re-initializes and retrains under seed + run_index.
EvaluateOutcome evaluate_runs(const RunConfig& cfg, bool write_artifacts);

// Subcommand bodies; throw iad errors.
void cmd_prepare(const RunConfig& cfg);
void cmd_train(const RunConfig& cfg);
void cmd_evaluate(const RunConfig& cfg);
void cmd_bench(const RunConfig& cfg);

// Exit-code mapping used by the CLI: 0 ok, 1 config, 2 data, 3 numeric.
int run_command(const std::string& command, const RunConfig& cfg);

}  // namespace iad
