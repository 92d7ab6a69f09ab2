#include "iad/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

#include "iad/errors.hpp"

namespace iad {

Thresholded threshold_by_ratio(std::span<const double> scores, double rho) {
  if (!(rho > 0.0 && rho < 1.0)) {
    throw ConfigError("threshold_by_ratio: rho must be in (0, 1), got " +
                      std::to_string(rho));
  }
  const std::size_t n = scores.size();
  if (n == 0) throw ConfigError("threshold_by_ratio: empty score vector");

  std::size_t k = static_cast<std::size_t>(
      std::ceil(rho * static_cast<double>(n)));
  k = std::clamp<std::size_t>(k, 1, n);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });

  Thresholded out;
  out.predicted.assign(n, 0);
  for (std::size_t i = 0; i < k; ++i) out.predicted[order[i]] = 1;
  out.threshold = scores[order[k - 1]];
  out.flagged = k;
  return out;
}

F1Stats f1_score(std::span<const std::uint8_t> predicted,
                 std::span<const std::uint8_t> labels) {
  if (predicted.size() != labels.size()) {
    throw ConfigError("f1_score: prediction and label lengths differ (" +
                      std::to_string(predicted.size()) + " vs " +
                      std::to_string(labels.size()) + ")");
  }
  F1Stats s;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const bool p = predicted[i] != 0;
    const bool y = labels[i] != 0;
    if (p && y) ++s.tp;
    else if (p && !y) ++s.fp;
    else if (!p && y) ++s.fn;
    else ++s.tn;
  }
  s.precision = (s.tp + s.fp) ? static_cast<double>(s.tp) / static_cast<double>(s.tp + s.fp) : 0.0;
  s.recall = (s.tp + s.fn) ? static_cast<double>(s.tp) / static_cast<double>(s.tp + s.fn) : 0.0;
  s.f1 = (s.precision + s.recall > 0.0)
             ? 2.0 * s.precision * s.recall / (s.precision + s.recall)
             : 0.0;
  return s;
}

RunAggregate aggregate_runs(std::span<const double> f1_per_run) {
  if (f1_per_run.empty()) {
    throw ConfigError("aggregate_runs: need at least one run");
  }
  RunAggregate agg;
  agg.per_run.assign(f1_per_run.begin(), f1_per_run.end());
  const double n = static_cast<double>(f1_per_run.size());
  agg.mean = std::accumulate(f1_per_run.begin(), f1_per_run.end(), 0.0) / n;
  if (f1_per_run.size() == 1) {
    agg.stddev = 0.0;
    agg.single_run = true;
  } else {
    double ss = 0.0;
    for (double v : f1_per_run) ss += (v - agg.mean) * (v - agg.mean);
    agg.stddev = std::sqrt(ss / (n - 1.0));
  }
  return agg;
}

ScoreReport score_report(Vector scores, std::vector<std::uint8_t> labels,
                         double contamination, std::uint64_t run_seed) {
  if (scores.size() != labels.size()) {
    throw ConfigError("score_report: score and label lengths differ");
  }
  ScoreReport report;
  report.scores = std::move(scores);
  report.labels = std::move(labels);
  report.contamination = contamination;
  report.run_seed = run_seed;
  const Thresholded th = threshold_by_ratio(report.scores, contamination);
  report.threshold = th.threshold;
  report.stats = f1_score(th.predicted, report.labels);
  return report;
}

void write_scores_csv(const ScoreReport& report, const std::filesystem::path& path) {
  if (!path.parent_path().empty()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw DataError("cannot write scores csv: " + path.string());
  f << "sample_index,score,label\n";
  char buf[64];
  for (std::size_t i = 0; i < report.scores.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g", report.scores[i]);
    f << i << ',' << buf << ',' << int(report.labels[i]) << '\n';
  }
}

namespace {

// Continued fraction for the regularized incomplete beta (Lentz's method).
double betacf(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 3e-14;
  constexpr double kTiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) break;
  }
  return h;
}

double reg_incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_bt = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                       a * std::log(x) + b * std::log(1.0 - x);
  const double bt = std::exp(ln_bt);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return bt * betacf(a, b, x) / a;
  }
  return 1.0 - bt * betacf(b, a, 1.0 - x) / b;
}

}  // namespace

double student_t_one_sided_p(double t, std::size_t dof) {
  if (dof == 0) throw ConfigError("student_t_one_sided_p: dof must be >= 1");
  const double v = static_cast<double>(dof);
  const double tail = 0.5 * reg_incomplete_beta(0.5 * v, 0.5, v / (v + t * t));
  return t >= 0.0 ? tail : 1.0 - tail;
}

PairedTest paired_t_greater(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) {
    throw ConfigError("paired_t_greater: needs two equal-length samples, n >= 2");
  }
  const std::size_t n = a.size();
  Vector diff(n);
  for (std::size_t i = 0; i < n; ++i) diff[i] = a[i] - b[i];
  const double mean = std::accumulate(diff.begin(), diff.end(), 0.0) /
                      static_cast<double>(n);
  double ss = 0.0;
  for (double d : diff) ss += (d - mean) * (d - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));

  PairedTest out;
  out.mean_diff = mean;
  out.dof = n - 1;
  if (sd == 0.0) {
    out.t = mean > 0.0 ? std::numeric_limits<double>::infinity()
                       : (mean < 0.0 ? -std::numeric_limits<double>::infinity() : 0.0);
    out.p_one_sided = mean > 0.0 ? 0.0 : (mean < 0.0 ? 1.0 : 0.5);
    return out;
  }
  out.t = mean / (sd / std::sqrt(static_cast<double>(n)));
  out.p_one_sided = student_t_one_sided_p(out.t, out.dof);
  return out;
}

}  // namespace iad
