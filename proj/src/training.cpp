#include "iad/training.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "iad/rng.hpp"

namespace iad {

namespace {

constexpr char kMagic[4] = {'T', 'I', 'A', 'D'};
constexpr std::uint32_t kFormatVersion = 1;
constexpr std::uint64_t kShuffleTag = 0x73687566666c65ULL;

// The parameter payload is read/written as raw doubles; the on-disk format
// is little-endian, so a big-endian port would need byte swaps here.
static_assert(std::endian::native == std::endian::little);

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double v) {
  put_u64(out, std::bit_cast<std::uint64_t>(v));
}

class Reader {
 public:
  Reader(const std::filesystem::path& path) : in_(path, std::ios::binary) {
    if (!in_) throw DataError("cannot open store file: " + path.string());
    path_ = path.string();
  }

  void bytes(void* dst, std::size_t n) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
      throw DataError("corrupt store (truncated): " + path_);
    }
  }

  std::uint32_t u32() {
    std::uint8_t b[4];
    bytes(b, 4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
    return v;
  }

  std::uint64_t u64() {
    std::uint8_t b[8];
    bytes(b, 8);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
    return v;
  }

  double f64() { return std::bit_cast<double>(u64()); }

 private:
  std::ifstream in_;
  std::string path_;
};

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("train config: epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("train config: batch_size must be >= 1");
  if (!(learning_rate > 0.0)) {
    throw ConfigError("train config: learning_rate must be > 0");
  }
  if (checkpoint_step < 1) throw ConfigError("train config: checkpoint_step must be >= 1");
}

Fingerprint fingerprint_of(const ParamLayout& layout, const std::string& spec_desc) {
  std::string blob = spec_desc;
  blob.push_back('|');
  for (const ParamSegment& seg : layout.segments()) {
    put_u64(blob, seg.layer);
    blob.push_back(seg.is_bias ? 'b' : 'w');
    put_u64(blob, seg.rows);
    put_u64(blob, seg.cols);
    put_u64(blob, seg.offset);
  }
  // Four independent FNV-1a lanes; integrity tagging, not cryptography.
  static constexpr std::uint64_t kLaneSeeds[4] = {
      0xcbf29ce484222325ULL, 0x9ae16a3b2f90404fULL, 0xc2b2ae3d27d4eb4fULL,
      0x165667b19e3779f9ULL};
  Fingerprint fp{};
  for (int lane = 0; lane < 4; ++lane) {
    std::uint64_t h = kLaneSeeds[lane];
    for (unsigned char c : blob) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    for (int i = 0; i < 8; ++i) {
      fp[static_cast<std::size_t>(lane * 8 + i)] =
          static_cast<std::uint8_t>((h >> (8 * i)) & 0xff);
    }
  }
  return fp;
}

CheckpointStore train(const SampleLoss& loss, const FlatParams& init,
                      const Matrix& train_set, const TrainConfig& cfg,
                      const std::string& spec_desc, std::vector<EpochStat>* stats) {
  cfg.validate();
  if (train_set.rows() == 0) throw DataError("train: training set is empty");
  if (train_set.cols() != loss.sample_dim()) {
    throw ShapeError("train: data has " + std::to_string(train_set.cols()) +
                     " features, loss expects " + std::to_string(loss.sample_dim()));
  }

  CheckpointStore store;
  store.fingerprint = fingerprint_of(loss.layout(), spec_desc);

  FlatParams params = init;
  Rng base(cfg.seed);
  std::vector<std::size_t> order(train_set.rows());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  const std::size_t n = train_set.rows();
  std::size_t last_snapshot = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng shuffle_rng = base.derive({kShuffleTag, epoch});
    shuffle_rng.shuffle(order);

    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t stop = std::min(start + cfg.batch_size, n);
      Matrix batch(stop - start, train_set.cols());
      for (std::size_t r = start; r < stop; ++r) {
        const auto src = train_set.row(order[r]);
        std::copy(src.begin(), src.end(), batch.row(r - start).begin());
      }

      double batch_loss = 0.0;
      const NoiseKey key{cfg.seed, epoch};
      const FlatParams grad = loss.batch_gradient(params, batch, key, &batch_loss);
      if (!std::isfinite(batch_loss)) {
        throw NumericError("training diverged: non-finite loss at epoch " +
                           std::to_string(epoch) + ", batch " + std::to_string(batches));
      }
      for (std::size_t i = 0; i < params.values.size(); ++i) {
        params.values[i] -= cfg.learning_rate * grad.values[i];
      }
      epoch_loss += batch_loss;
      ++batches;
    }
    if (stats) {
      stats->push_back({epoch, epoch_loss / static_cast<double>(batches)});
    }

    if (epoch % cfg.checkpoint_step == 0) {
      store.checkpoints.push_back({epoch, cfg.learning_rate, params});
      last_snapshot = epoch;
    }
  }
  if (last_snapshot != cfg.epochs) {
    store.checkpoints.push_back({cfg.epochs, cfg.learning_rate, params});
  }
  return store;
}

void save_store(const CheckpointStore& store, const std::filesystem::path& path) {
  std::string out;
  out.append(kMagic, 4);
  put_u32(out, kFormatVersion);
  out.append(reinterpret_cast<const char*>(store.fingerprint.data()),
             store.fingerprint.size());
  put_u64(out, store.checkpoints.size());
  for (const Checkpoint& cp : store.checkpoints) {
    put_u64(out, cp.epoch);
    put_f64(out, cp.learning_rate);
    put_u64(out, cp.params.values.size());
    for (double v : cp.params.values) put_f64(out, v);
  }
  if (!path.parent_path().empty()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot write store file: " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw DataError("failed writing store file: " + path.string());
}

CheckpointStore load_store(const std::filesystem::path& path, const ParamLayout& layout,
                           const std::optional<Fingerprint>& expected) {
  Reader r(path);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) {
    throw DataError("corrupt store (bad magic bytes): " + path.string());
  }
  const std::uint32_t version = r.u32();
  if (version != kFormatVersion) {
    throw DataError("unsupported store format version " + std::to_string(version) +
                    ": " + path.string());
  }
  CheckpointStore store;
  r.bytes(store.fingerprint.data(), store.fingerprint.size());
  if (expected && store.fingerprint != *expected) {
    throw ConfigError("incompatible checkpoint store (model spec fingerprint mismatch): " +
                      path.string());
  }
  const std::uint64_t count = r.u64();
  std::size_t prev_epoch = 0;
  for (std::uint64_t i = 0; i < count; ++i) {
    Checkpoint cp;
    cp.epoch = r.u64();
    cp.learning_rate = r.f64();
    const std::uint64_t nparams = r.u64();
    if (nparams != layout.total_size()) {
      throw ConfigError("incompatible checkpoint store: checkpoint has " +
                        std::to_string(nparams) + " parameters, layout expects " +
                        std::to_string(layout.total_size()));
    }
    cp.params.layout = layout;
    cp.params.values.resize(nparams);
    r.bytes(cp.params.values.data(), nparams * sizeof(double));
    if (i > 0 && cp.epoch <= prev_epoch) {
      throw DataError("corrupt store (epochs not strictly increasing): " + path.string());
    }
    prev_epoch = cp.epoch;
    store.checkpoints.push_back(std::move(cp));
  }
  return store;
}

}  // namespace iad
