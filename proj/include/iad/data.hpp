#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "iad/matrix.hpp"
#include "iad/rng.hpp"

namespace iad {

// `key = value` file with '#' comments; shared by recipes and run configs.
std::map<std::string, std::string> read_key_value_file(const std::filesystem::path& path,
                                                       const char* what);

enum class ColumnRole { Continuous, Categorical, Label, Dropped };

// Key-value recipe describing one benchmark source file: which columns are
// features, which are one-hot targets, what counts as an anomaly.
struct DatasetRecipe {
  std::string name;
  std::filesystem::path source;          // CSV path, relative to the recipe's dir
  char delimiter = ',';
  std::size_t expected_columns = 0;      // schema width incl. label
  std::size_t label_column = 0;
  std::set<std::string> anomaly_labels;  // label values defining the anomaly class
  std::set<std::size_t> categorical_columns;
  std::set<std::size_t> drop_columns;
  bool continuous_rest = true;           // "continuous_columns = rest"
  std::set<std::size_t> continuous_columns;
  std::string missing_token = "?";
  bool reverse = false;                  // KDDRev-style anomaly subsampling
  double reverse_fraction = 0.25;        // anomalies kept per normal sample

  void validate() const;  // disjointness / coverage; throws DataError
  ColumnRole role_of(std::size_t col) const;
};

DatasetRecipe load_recipe(const std::filesystem::path& path);

struct Column {
  ColumnRole role = ColumnRole::Dropped;
  Vector numeric;                    // Continuous
  std::vector<std::uint32_t> codes;  // Categorical / Label
  std::vector<std::string> dict;     // sorted distinct values for codes
};

struct RawTable {
  std::size_t rows = 0;
  std::vector<Column> columns;
  std::size_t missing_rows_dropped = 0;
  std::vector<std::size_t> missing_columns_dropped;

  std::size_t feature_width() const;  // columns expanded one-hot
};

// Parse the recipe's CSV into typed columns. Columns with > 50% missing
// entries are dropped (recorded), then rows with any remaining missing
// value are dropped (counted). Schema problems carry the offending line.
RawTable load_table(const DatasetRecipe& recipe,
                    const std::filesystem::path& base_dir = {});

struct DatasetSplit {
  std::string recipe_name;
  std::uint64_t seed = 0;
  Matrix train;               // normal rows only
  Matrix val;
  std::vector<std::uint8_t> val_labels;  // 1 = anomaly
  Vector feature_mean;        // z-score stats fitted on train
  Vector feature_std;
  std::vector<std::uint8_t> onehot_mask;  // 1 = one-hot column, left as 0/1
  double contamination = 0.0;             // rho

  std::size_t dim() const { return train.cols(); }
};

// The split protocol: seeded random half of the normal rows trains, the
// other half plus every anomaly validates. One-hot expansion precedes
// normalization; one-hot columns are not z-scored. For reverse recipes the
// anomaly class is first subsampled to reverse_fraction * #normals.
DatasetSplit make_split(const RawTable& table, const DatasetRecipe& recipe,
                        std::uint64_t seed);

void save_split(const DatasetSplit& split, const std::filesystem::path& path);
DatasetSplit load_split(const std::filesystem::path& path);

}  // namespace iad
