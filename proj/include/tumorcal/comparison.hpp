#pragma once

// ECDF area validation metric, Bayes factors from evidence traces and the metric ratio table.

#include <algorithm>
#include <cmath>
#include <map>
#include <functional>
#include <numeric>
#include <set>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tumorcal/dataset.hpp"
#include "tumorcal/error.hpp"
#include "tumorcal/smc.hpp"

namespace tumorcal {

/// Two discrete distributions as sorted atoms with masses summing to one.
struct EcdfPair {
  std::vector<double> data_points;
  std::vector<double> data_masses;
  std::vector<double> prediction_points;
  std::vector<double> prediction_masses;
};

namespace detail {

inline void sort_atoms(std::vector<double>& points, std::vector<double>& masses) {
  std::vector<std::size_t> order(points.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return points[a] < points[b]; });
  std::vector<double> p(points.size()), m(points.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    p[i] = points[order[i]];
    m[i] = masses[order[i]];
  }
  points = std::move(p);
  masses = std::move(m);
}

inline void normalize(std::vector<double>& masses, const char* what) {
  const double total = std::accumulate(masses.begin(), masses.end(), 0.0);
  if (!(total > 0.0) || !std::isfinite(total)) throw DomainError(std::string("EcdfPair: ") + what + " masses must have a positive sum");
  for (double& m : masses) {
    if (m < 0.0) throw DomainError(std::string("EcdfPair: negative ") + what + " mass");
    m /= total;
  }
}

}  // namespace detail

/// Data atoms carry mass 1/M each; prediction masses are renormalized to sum to one.
inline EcdfPair make_ecdf_pair(std::vector<double> data, std::vector<double> predictions, std::vector<double> prediction_weights = {}) {
  if (data.empty() || predictions.empty()) throw DomainError("EcdfPair: both point sets must be non-empty");
  if (prediction_weights.empty()) prediction_weights.assign(predictions.size(), 1.0);
  if (prediction_weights.size() != predictions.size()) throw DomainError("EcdfPair: weights not aligned with predictions");
  EcdfPair pair;
  pair.data_points = std::move(data);
  pair.data_masses.assign(pair.data_points.size(), 1.0);
  pair.prediction_points = std::move(predictions);
  pair.prediction_masses = std::move(prediction_weights);
  detail::normalize(pair.data_masses, "data");
  detail::normalize(pair.prediction_masses, "prediction");
  detail::sort_atoms(pair.data_points, pair.data_masses);
  detail::sort_atoms(pair.prediction_points, pair.prediction_masses);
  return pair;
}

/// Exact area between the two step ECDFs. Both functions are constant between consecutive merged
/// breakpoints, so the integral is a finite sum.
inline double validation_metric(const EcdfPair& pair) {
  const auto& xa = pair.data_points;
  const auto& wa = pair.data_masses;
  const auto& xb = pair.prediction_points;
  const auto& wb = pair.prediction_masses;
  if (xa.empty() || xb.empty()) throw DomainError("validation_metric: both point sets must be non-empty");
  std::size_t i = 0, j = 0;
  double fa = 0.0, fb = 0.0;
  double area = 0.0;
  double x = std::min(xa.front(), xb.front());
  while (i < xa.size() || j < xb.size()) {
    const double next = std::min(i < xa.size() ? xa[i] : INFINITY, j < xb.size() ? xb[j] : INFINITY);
    area += std::abs(fa - fb) * (next - x);
    x = next;
    while (i < xa.size() && xa[i] == x) fa += wa[i++];
    while (j < xb.size() && xb[j] == x) fb += wb[j++];
  }
  return area;
}

enum class EvidenceStrength { none, barely_worth_mentioning, substantial, strong, decisive };

inline std::string to_string(EvidenceStrength s) {
  switch (s) {
    case EvidenceStrength::none: return "none";
    case EvidenceStrength::barely_worth_mentioning: return "barely worth mentioning";
    case EvidenceStrength::substantial: return "substantial";
    case EvidenceStrength::strong: return "strong";
    case EvidenceStrength::decisive: return "decisive";
  }
  return "none";
}

/// Strength of |log10 Z|: (0,1/2] barely worth mentioning, (1/2,1] substantial, (1,2] strong, > 2 decisive.
inline EvidenceStrength classify_evidence(double log10_factor) {
  const double v = std::abs(log10_factor);
  if (v == 0.0) return EvidenceStrength::none;
  if (v <= 0.5) return EvidenceStrength::barely_worth_mentioning;
  if (v <= 1.0) return EvidenceStrength::substantial;
  if (v <= 2.0) return EvidenceStrength::strong;
  return EvidenceStrength::decisive;
}

struct BayesFactorStep {
  std::size_t step = 0;
  double log10_factor = 0.0;
  EvidenceStrength strength = EvidenceStrength::none;
  int favored = 0;  // 1 or 2; 0 on a tie

  std::string label() const {
    if (favored == 0) return "no preference";
    return to_string(strength) + " support for model " + std::to_string(favored);
  }
};

/// log10(Z_1/Z_2) after every step.
inline std::vector<BayesFactorStep> bayes_factor(const EvidenceTrace& m1, const EvidenceTrace& m2) {
  if (m1.size() != m2.size()) throw DomainError("bayes_factor: evidence traces have different lengths");
  std::vector<BayesFactorStep> out;
  out.reserve(m1.size());
  for (std::size_t k = 0; k < m1.size(); ++k) {
    BayesFactorStep s;
    s.step = k + 1;
    s.log10_factor = (m1.cumulative[k] - m2.cumulative[k]) / std::log(10.0);
    s.strength = classify_evidence(s.log10_factor);
    s.favored = s.log10_factor > 0.0 ? 1 : (s.log10_factor < 0.0 ? 2 : 0);
    out.push_back(s);
  }
  return out;
}

/// Per-time validation metrics of one model, keyed by (data set, V0).
using MetricGrid = std::map<std::pair<DatasetId, double>, std::vector<double>>;

/// d_eta / d_S per (data set, V0) with row and column averages. Absent cells stay empty.
struct RatioTable {
  std::vector<DatasetId> rows;
  std::vector<double> columns;
  std::vector<std::vector<std::optional<double>>> cells;
  std::vector<std::optional<double>> row_average;
  std::vector<std::optional<double>> column_average;
  std::optional<double> overall;
};

namespace detail {

inline std::optional<double> mean_of(std::span<const std::optional<double>> xs) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& x : xs) {
    if (x) {
      sum += *x;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

}  // namespace detail

/// Each cell is the ratio of time-averaged metrics; a cell where both averages vanish is 1.
inline RatioTable metric_ratio_table(const MetricGrid& eta, const MetricGrid& s) {
  RatioTable t;
  std::set<DatasetId> rows;
  std::set<double, std::greater<>> columns;
  for (const auto* grid : {&eta, &s}) {
    for (const auto& [key, _] : *grid) {
      rows.insert(key.first);
      columns.insert(key.second);
    }
  }
  t.rows.assign(rows.begin(), rows.end());
  t.columns.assign(columns.begin(), columns.end());
  auto average = [](const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); };
  t.cells.assign(t.rows.size(), std::vector<std::optional<double>>(t.columns.size()));
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    for (std::size_t c = 0; c < t.columns.size(); ++c) {
      const auto key = std::make_pair(t.rows[r], t.columns[c]);
      const auto ie = eta.find(key);
      const auto is = s.find(key);
      if (ie == eta.end() || is == s.end() || ie->second.empty() || is->second.empty()) continue;
      const double de = average(ie->second);
      const double ds = average(is->second);
      if (de == 0.0 && ds == 0.0) {
        t.cells[r][c] = 1.0;
      } else if (ds > 0.0) {
        t.cells[r][c] = de / ds;
      }
    }
    t.row_average.push_back(detail::mean_of(t.cells[r]));
  }
  std::vector<std::optional<double>> all;
  for (std::size_t c = 0; c < t.columns.size(); ++c) {
    std::vector<std::optional<double>> col;
    for (std::size_t r = 0; r < t.rows.size(); ++r) col.push_back(t.cells[r][c]);
    t.column_average.push_back(detail::mean_of(col));
    all.insert(all.end(), col.begin(), col.end());
  }
  t.overall = detail::mean_of(all);
  return t;
}

}  // namespace tumorcal
