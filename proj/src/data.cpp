#include "iad/data.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace iad {

namespace {

constexpr std::uint64_t kSplitShuffleTag = 0x73706c6974ULL;
constexpr std::uint64_t kReverseSubsampleTag = 0x726576737562ULL;

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(value);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::set<std::size_t> parse_index_set(const std::string& value, const std::string& key) {
  std::set<std::size_t> out;
  for (const std::string& tok : split_list(value)) {
    std::size_t idx = 0;
    const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), idx);
    if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) {
      throw DataError("recipe: bad index '" + tok + "' in " + key);
    }
    out.insert(idx);
  }
  return out;
}

bool parse_bool(const std::string& value, const std::string& key) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw DataError("recipe: bad boolean '" + value + "' for " + key);
}

// Key-value file with '#' comments; shared by recipes and run configs.
std::map<std::string, std::string> read_kv_file(const std::filesystem::path& path,
                                                const char* what) {
  std::ifstream in(path);
  if (!in) throw DataError(std::string(what) + " not readable: " + path.string());
  std::map<std::string, std::string> kv;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw DataError(std::string(what) + " " + path.string() + ":" +
                      std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw DataError(std::string(what) + " " + path.string() + ":" +
                      std::to_string(line_no) + ": empty key");
    }
    kv[key] = value;
  }
  return kv;
}

}  // namespace

std::map<std::string, std::string> read_key_value_file(const std::filesystem::path& path,
                                                       const char* what) {
  return read_kv_file(path, what);
}

void DatasetRecipe::validate() const {
  if (name.empty()) throw DataError("recipe: missing name");
  if (source.empty()) throw DataError("recipe '" + name + "': missing source");
  if (expected_columns == 0) {
    throw DataError("recipe '" + name + "': expected_columns must be set");
  }
  if (label_column >= expected_columns) {
    throw DataError("recipe '" + name + "': label_column out of range");
  }
  if (anomaly_labels.empty()) {
    throw DataError("recipe '" + name + "': anomaly_labels must be non-empty");
  }
  auto in_range = [&](const std::set<std::size_t>& s) {
    return s.empty() || *s.rbegin() < expected_columns;
  };
  if (!in_range(categorical_columns) || !in_range(drop_columns) ||
      !in_range(continuous_columns)) {
    throw DataError("recipe '" + name + "': column index exceeds expected_columns");
  }
  // The roles must partition the schema.
  for (std::size_t c = 0; c < expected_columns; ++c) {
    int hits = 0;
    if (c == label_column) ++hits;
    if (categorical_columns.count(c)) ++hits;
    if (drop_columns.count(c)) ++hits;
    if (continuous_rest) {
      if (hits == 0) hits = 1;  // the rest bucket
    } else if (continuous_columns.count(c)) {
      ++hits;
    }
    if (hits != 1) {
      throw DataError("recipe '" + name + "': column " + std::to_string(c) +
                      (hits == 0 ? " has no role" : " has conflicting roles"));
    }
  }
  if (reverse && !(reverse_fraction > 0.0 && reverse_fraction < 1.0)) {
    throw DataError("recipe '" + name + "': reverse_fraction must be in (0, 1)");
  }
}

ColumnRole DatasetRecipe::role_of(std::size_t col) const {
  if (col == label_column) return ColumnRole::Label;
  if (drop_columns.count(col)) return ColumnRole::Dropped;
  if (categorical_columns.count(col)) return ColumnRole::Categorical;
  if (continuous_rest || continuous_columns.count(col)) return ColumnRole::Continuous;
  return ColumnRole::Dropped;
}

DatasetRecipe load_recipe(const std::filesystem::path& path) {
  const auto kv = read_kv_file(path, "recipe");
  DatasetRecipe r;
  for (const auto& [key, value] : kv) {
    if (key == "name") r.name = value;
    else if (key == "source") r.source = value;
    else if (key == "delimiter") {
      if (value == "comma") r.delimiter = ',';
      else if (value == "space") r.delimiter = ' ';
      else if (value == "semicolon") r.delimiter = ';';
      else if (value.size() == 1) r.delimiter = value[0];
      else throw DataError("recipe: bad delimiter '" + value + "'");
    }
    else if (key == "expected_columns") r.expected_columns = std::stoull(value);
    else if (key == "label_column") r.label_column = std::stoull(value);
    else if (key == "anomaly_labels") {
      for (const std::string& v : split_list(value)) r.anomaly_labels.insert(v);
    }
    else if (key == "categorical_columns") r.categorical_columns = parse_index_set(value, key);
    else if (key == "drop_columns") r.drop_columns = parse_index_set(value, key);
    else if (key == "continuous_columns") {
      if (value == "rest") {
        r.continuous_rest = true;
      } else {
        r.continuous_rest = false;
        r.continuous_columns = parse_index_set(value, key);
      }
    }
    else if (key == "missing_token") r.missing_token = value;
    else if (key == "reverse") r.reverse = parse_bool(value, key);
    else if (key == "reverse_fraction") r.reverse_fraction = std::stod(value);
    else throw DataError("recipe " + path.string() + ": unknown key '" + key + "'");
  }
  // Paths are relative to the recipe file unless absolute.
  if (!r.source.empty() && r.source.is_relative()) {
    r.source = path.parent_path() / r.source;
  }
  r.validate();
  return r;
}

std::size_t RawTable::feature_width() const {
  std::size_t w = 0;
  for (const Column& col : columns) {
    if (col.role == ColumnRole::Continuous) ++w;
    else if (col.role == ColumnRole::Categorical) w += col.dict.size();
  }
  return w;
}

namespace {

// Split one CSV line into trimmed cells; returns false on column-count mismatch.
bool tokenize(const std::string& line, char delim, std::size_t n_cols,
              std::vector<std::string>& cells) {
  cells.clear();
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(delim, start);
    cells.push_back(trim(line.substr(
        start, pos == std::string::npos ? std::string::npos : pos - start)));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return cells.size() == n_cols;
}

}  // namespace

RawTable load_table(const DatasetRecipe& recipe, const std::filesystem::path& base_dir) {
  recipe.validate();
  const std::filesystem::path path =
      recipe.source.is_absolute() || base_dir.empty() ? recipe.source
                                                      : base_dir / recipe.source;
  const std::size_t n_cols = recipe.expected_columns;

  RawTable table;
  table.columns.resize(n_cols);
  for (std::size_t c = 0; c < n_cols; ++c) {
    table.columns[c].role = recipe.role_of(c);
  }

  auto is_missing = [&](const std::string& cell) {
    return cell.empty() || cell == recipe.missing_token;
  };

  // Pass 1 (streaming): validate the schema and count missing cells per
  // column; columns over 50% missing are dropped outright.
  std::vector<std::size_t> missing_count(n_cols, 0);
  std::size_t n_rows = 0;
  {
    std::ifstream in(path);
    if (!in) throw DataError("dataset file not readable: " + path.string());
    std::string line;
    std::vector<std::string> cells;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (trim(line).empty()) continue;
      if (!tokenize(line, recipe.delimiter, n_cols, cells)) {
        throw DataError("schema error in " + path.string() + " line " +
                        std::to_string(line_no) + ": got " +
                        std::to_string(cells.size()) + " columns, expected " +
                        std::to_string(n_cols));
      }
      ++n_rows;
      for (std::size_t c = 0; c < n_cols; ++c) {
        if (is_missing(cells[c])) ++missing_count[c];
      }
    }
  }
  if (n_rows == 0) {
    throw DataError("schema error: dataset file is empty: " + path.string());
  }

  std::vector<std::uint8_t> col_active(n_cols, 0);
  for (std::size_t c = 0; c < n_cols; ++c) {
    Column& col = table.columns[c];
    if (col.role == ColumnRole::Dropped) continue;
    if (col.role != ColumnRole::Label && 2 * missing_count[c] > n_rows) {
      col.role = ColumnRole::Dropped;
      table.missing_columns_dropped.push_back(c);
    } else {
      col_active[c] = 1;
    }
  }

  // Pass 2 (streaming): drop rows with remaining missing values, parse
  // numerics directly and intern categorical values on the fly.
  std::vector<std::map<std::string, std::uint32_t>> interning(n_cols);
  {
    std::ifstream in(path);
    if (!in) throw DataError("dataset file not readable: " + path.string());
    std::string line;
    std::vector<std::string> cells;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (trim(line).empty()) continue;
      tokenize(line, recipe.delimiter, n_cols, cells);

      bool keep = true;
      for (std::size_t c = 0; c < n_cols && keep; ++c) {
        if (col_active[c] && is_missing(cells[c])) keep = false;
      }
      if (!keep) {
        ++table.missing_rows_dropped;
        continue;
      }
      ++table.rows;
      for (std::size_t c = 0; c < n_cols; ++c) {
        if (!col_active[c]) continue;
        Column& col = table.columns[c];
        if (col.role == ColumnRole::Continuous) {
          const std::string& cell = cells[c];
          double v = 0.0;
          const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
          if (res.ec != std::errc() || res.ptr != cell.data() + cell.size()) {
            throw DataError("parse error in " + path.string() + ": column " +
                            std::to_string(c) + " value '" + cell +
                            "' is not numeric");
          }
          col.numeric.push_back(v);
        } else {
          auto [it, inserted] = interning[c].try_emplace(
              cells[c], static_cast<std::uint32_t>(interning[c].size()));
          col.codes.push_back(it->second);
        }
      }
    }
  }
  if (table.rows == 0) {
    throw DataError("all rows dropped for missing values: " + path.string());
  }

  // Re-code categoricals against the lexicographically sorted dictionary so
  // one-hot column order is deterministic.
  for (std::size_t c = 0; c < n_cols; ++c) {
    if (!col_active[c]) continue;
    Column& col = table.columns[c];
    if (col.role == ColumnRole::Continuous) continue;
    std::vector<std::uint32_t> remap(interning[c].size());
    col.dict.reserve(interning[c].size());
    std::uint32_t next = 0;
    for (const auto& [value, old_code] : interning[c]) {  // std::map: sorted keys
      col.dict.push_back(value);
      remap[old_code] = next++;
    }
    for (std::uint32_t& code : col.codes) code = remap[code];
  }
  return table;
}

namespace {

struct FeatureBuilder {
  // Maps table columns to positions in the expanded feature matrix.
  std::vector<std::size_t> cont_cols;   // table column index
  std::vector<std::size_t> cat_cols;    // table column index
  std::size_t width = 0;
  std::vector<std::uint8_t> onehot_mask;

  explicit FeatureBuilder(const RawTable& table) {
    for (std::size_t c = 0; c < table.columns.size(); ++c) {
      const Column& col = table.columns[c];
      if (col.role == ColumnRole::Continuous) {
        cont_cols.push_back(c);
        onehot_mask.push_back(0);
        ++width;
      } else if (col.role == ColumnRole::Categorical) {
        cat_cols.push_back(c);
        for (std::size_t k = 0; k < col.dict.size(); ++k) onehot_mask.push_back(1);
        width += col.dict.size();
      }
    }
  }

  void fill_row(const RawTable& table, std::size_t row, std::span<double> out) const {
    std::size_t pos = 0;
    for (std::size_t c = 0; c < table.columns.size(); ++c) {
      const Column& col = table.columns[c];
      if (col.role == ColumnRole::Continuous) {
        out[pos++] = col.numeric[row];
      } else if (col.role == ColumnRole::Categorical) {
        const std::size_t base = pos;
        for (std::size_t k = 0; k < col.dict.size(); ++k) out[pos++] = 0.0;
        out[base + col.codes[row]] = 1.0;
      }
    }
  }
};

}  // namespace

DatasetSplit make_split(const RawTable& table, const DatasetRecipe& recipe,
                        std::uint64_t seed) {
  const Column* label_col = nullptr;
  for (const Column& col : table.columns) {
    if (col.role == ColumnRole::Label) label_col = &col;
  }
  if (!label_col) throw DataError("make_split: table has no label column");

  std::vector<std::uint8_t> is_anomaly_code(label_col->dict.size(), 0);
  bool any = false;
  for (std::size_t k = 0; k < label_col->dict.size(); ++k) {
    if (recipe.anomaly_labels.count(label_col->dict[k])) {
      is_anomaly_code[k] = 1;
      any = true;
    }
  }
  if (!any) {
    throw DataError("recipe '" + recipe.name +
                    "': anomaly label set matches no value in the data");
  }

  std::vector<std::size_t> normal_rows, anomaly_rows;
  for (std::size_t r = 0; r < table.rows; ++r) {
    if (is_anomaly_code[label_col->codes[r]]) anomaly_rows.push_back(r);
    else normal_rows.push_back(r);
  }
  if (anomaly_rows.empty()) {
    throw DataError("recipe '" + recipe.name + "': no anomalies in the data");
  }
  if (normal_rows.size() < 2) {
    throw DataError("recipe '" + recipe.name + "': not enough normal rows to split");
  }

  Rng base(seed);
  if (recipe.reverse) {
    const std::size_t keep = static_cast<std::size_t>(
        recipe.reverse_fraction * static_cast<double>(normal_rows.size()));
    if (keep == 0 || keep > anomaly_rows.size()) {
      throw DataError("recipe '" + recipe.name + "': reverse subsample of " +
                      std::to_string(keep) + " anomalies is infeasible (" +
                      std::to_string(anomaly_rows.size()) + " available)");
    }
    Rng sub_rng = base.derive({kReverseSubsampleTag});
    const std::vector<std::size_t> pick =
        sub_rng.sample_without_replacement(anomaly_rows.size(), keep);
    std::vector<std::size_t> kept;
    kept.reserve(keep);
    for (std::size_t idx : pick) kept.push_back(anomaly_rows[idx]);
    anomaly_rows = std::move(kept);
  }

  Rng shuffle_rng = base.derive({kSplitShuffleTag});
  shuffle_rng.shuffle(normal_rows);
  const std::size_t n_train = normal_rows.size() / 2;  // floor; val gets the odd row

  const FeatureBuilder fb(table);
  DatasetSplit split;
  split.recipe_name = recipe.name;
  split.seed = seed;
  split.onehot_mask = fb.onehot_mask;

  split.train = Matrix(n_train, fb.width);
  for (std::size_t i = 0; i < n_train; ++i) {
    fb.fill_row(table, normal_rows[i], split.train.row(i));
  }
  const std::size_t n_val = (normal_rows.size() - n_train) + anomaly_rows.size();
  split.val = Matrix(n_val, fb.width);
  split.val_labels.assign(n_val, 0);
  std::size_t vrow = 0;
  for (std::size_t i = n_train; i < normal_rows.size(); ++i, ++vrow) {
    fb.fill_row(table, normal_rows[i], split.val.row(vrow));
  }
  for (std::size_t idx : anomaly_rows) {
    fb.fill_row(table, idx, split.val.row(vrow));
    split.val_labels[vrow] = 1;
    ++vrow;
  }
  split.contamination =
      static_cast<double>(anomaly_rows.size()) / static_cast<double>(n_val);

  // z-score from train statistics; one-hot columns stay 0/1, constant
  // columns end up exactly 0.
  split.feature_mean.assign(fb.width, 0.0);
  split.feature_std.assign(fb.width, 1.0);
  const double inv_n = 1.0 / static_cast<double>(n_train);
  for (std::size_t j = 0; j < fb.width; ++j) {
    if (split.onehot_mask[j]) continue;
    double mean = 0.0;
    for (std::size_t r = 0; r < n_train; ++r) mean += split.train.at(r, j);
    mean *= inv_n;
    double var = 0.0;
    for (std::size_t r = 0; r < n_train; ++r) {
      const double d = split.train.at(r, j) - mean;
      var += d * d;
    }
    var *= inv_n;
    double sd = std::sqrt(var);
    if (sd == 0.0) sd = 1.0;
    split.feature_mean[j] = mean;
    split.feature_std[j] = sd;
    for (std::size_t r = 0; r < n_train; ++r) {
      split.train.at(r, j) = (split.train.at(r, j) - mean) / sd;
    }
    for (std::size_t r = 0; r < n_val; ++r) {
      split.val.at(r, j) = (split.val.at(r, j) - mean) / sd;
    }
  }
  return split;
}

// ---- split serialization ---------------------------------------------------

namespace {

constexpr char kSplitMagic[4] = {'T', 'I', 'D', 'S'};
constexpr std::uint32_t kSplitVersion = 1;

static_assert(std::endian::native == std::endian::little);

void write_u32(std::ofstream& f, std::uint32_t v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_u64(std::ofstream& f, std::uint64_t v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_f64(std::ofstream& f, double v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_bytes(std::ofstream& f, const void* p, std::size_t n) {
  f.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

struct SplitReader {
  std::ifstream in;
  std::string path;

  void bytes(void* dst, std::size_t n) {
    in.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n) {
      throw DataError("corrupt split file (truncated): " + path);
    }
  }
  std::uint32_t u32() {
    std::uint32_t v;
    bytes(&v, sizeof(v));
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    bytes(&v, sizeof(v));
    return v;
  }
  double f64() {
    double v;
    bytes(&v, sizeof(v));
    return v;
  }
};

void write_matrix(std::ofstream& f, const Matrix& m) {
  write_u64(f, m.rows());
  write_u64(f, m.cols());
  write_bytes(f, m.data(), m.size() * sizeof(double));
}

Matrix read_matrix(SplitReader& r) {
  const std::uint64_t rows = r.u64();
  const std::uint64_t cols = r.u64();
  Matrix m(rows, cols);
  r.bytes(m.data(), m.size() * sizeof(double));
  return m;
}

}  // namespace

void save_split(const DatasetSplit& split, const std::filesystem::path& path) {
  if (!path.parent_path().empty()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot write split file: " + path.string());
  f.write(kSplitMagic, 4);
  write_u32(f, kSplitVersion);
  write_u64(f, split.recipe_name.size());
  write_bytes(f, split.recipe_name.data(), split.recipe_name.size());
  write_u64(f, split.seed);
  write_matrix(f, split.train);
  write_matrix(f, split.val);
  write_u64(f, split.val_labels.size());
  write_bytes(f, split.val_labels.data(), split.val_labels.size());
  write_u64(f, split.feature_mean.size());
  write_bytes(f, split.feature_mean.data(), split.feature_mean.size() * sizeof(double));
  write_bytes(f, split.feature_std.data(), split.feature_std.size() * sizeof(double));
  write_u64(f, split.onehot_mask.size());
  write_bytes(f, split.onehot_mask.data(), split.onehot_mask.size());
  write_f64(f, split.contamination);
  if (!f) throw DataError("failed writing split file: " + path.string());
}

DatasetSplit load_split(const std::filesystem::path& path) {
  SplitReader r;
  r.in.open(path, std::ios::binary);
  r.path = path.string();
  if (!r.in) throw DataError("cannot open split file: " + path.string());
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kSplitMagic, 4) != 0) {
    throw DataError("corrupt split file (bad magic bytes): " + path.string());
  }
  const std::uint32_t version = r.u32();
  if (version != kSplitVersion) {
    throw DataError("unsupported split file version: " + path.string());
  }
  DatasetSplit split;
  const std::uint64_t name_len = r.u64();
  split.recipe_name.resize(name_len);
  r.bytes(split.recipe_name.data(), name_len);
  split.seed = r.u64();
  split.train = read_matrix(r);
  split.val = read_matrix(r);
  split.val_labels.resize(r.u64());
  r.bytes(split.val_labels.data(), split.val_labels.size());
  const std::uint64_t width = r.u64();
  split.feature_mean.resize(width);
  r.bytes(split.feature_mean.data(), width * sizeof(double));
  split.feature_std.resize(width);
  r.bytes(split.feature_std.data(), width * sizeof(double));
  split.onehot_mask.resize(r.u64());
  r.bytes(split.onehot_mask.data(), split.onehot_mask.size());
  split.contamination = r.f64();
  return split;
}

}  // namespace iad
