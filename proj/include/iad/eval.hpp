#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "iad/matrix.hpp"

namespace iad {

struct Thresholded {
  double threshold = 0.0;
  std::vector<std::uint8_t> predicted;  // 1 = flagged anomaly
  std::size_t flagged = 0;
};

// Flag the top ceil(rho * N) scores; equal scores at the cut are resolved
// by ascending sample index. 0 < rho < 1.
Thresholded threshold_by_ratio(std::span<const double> scores, double rho);

struct F1Stats {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
};

// Binary precision/recall/F1 with anomaly as the positive class and the
// 0/0 -> 0 convention.
F1Stats f1_score(std::span<const std::uint8_t> predicted,
                 std::span<const std::uint8_t> labels);

struct RunAggregate {
  std::vector<double> per_run;
  double mean = 0.0;
  double stddev = 0.0;  // sample std (n-1); 0 for a single run
  bool single_run = false;
};

RunAggregate aggregate_runs(std::span<const double> f1_per_run);

// One scored evaluation run, ready for CSV/JSON emission.
struct ScoreReport {
  Vector scores;                          // higher = more anomalous
  std::vector<std::uint8_t> labels;
  double threshold = 0.0;
  F1Stats stats;
  double contamination = 0.0;
  std::uint64_t run_seed = 0;
};

ScoreReport score_report(Vector scores, std::vector<std::uint8_t> labels,
                         double contamination, std::uint64_t run_seed);

// Columns: sample_index,score,label
void write_scores_csv(const ScoreReport& report, const std::filesystem::path& path);

// One-sided paired test that mean(a - b) > 0; returns the p-value of the
// paired t statistic (Student-t via the regularized incomplete beta).
struct PairedTest {
  double mean_diff = 0.0;
  double t = 0.0;
  std::size_t dof = 0;
  double p_one_sided = 1.0;
};
PairedTest paired_t_greater(std::span<const double> a, std::span<const double> b);

double student_t_one_sided_p(double t, std::size_t dof);

}  // namespace iad
