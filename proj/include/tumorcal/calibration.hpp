#pragma once

// Binds growth models, the observation model and a batch schedule into the likelihood callable
// the SMC engine consumes, plus posterior post-processing.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "tumorcal/dataset.hpp"
#include "tumorcal/growth_models.hpp"
#include "tumorcal/noise_model.hpp"
#include "tumorcal/parallel.hpp"
#include "tumorcal/priors.hpp"
#include "tumorcal/random.hpp"
#include "tumorcal/smc.hpp"

namespace tumorcal {

/// Solves `model` once per distinct (S0, V0) among `measurements` and returns V at each
/// measurement, aligned with the input order.
inline std::vector<double> predict_density(ModelId model, const ModelParams& params, std::span<const Measurement> measurements,
                                           const SolverConfig& solver = {}) {
  std::map<std::pair<double, double>, std::map<double, double>> grid;
  for (const auto& m : measurements) grid[{m.s0, m.v0}][m.t] = 0.0;
  for (auto& [key, values] : grid) {
    std::vector<double> times;
    for (const auto& [t, _] : values) times.push_back(t);
    const Trajectory tr = solve(model, params, ExperimentCondition{key.first, key.second, 0.0, times.back()}, times, solver);
    for (std::size_t i = 0; i < times.size(); ++i) values[times[i]] = tr.v_values[i];
  }
  std::vector<double> out;
  out.reserve(measurements.size());
  for (const auto& m : measurements) out.push_back(grid[{m.s0, m.v0}][m.t]);
  return out;
}

/// Data log-likelihood of a calibration vector over ranges of scheduled batches.
class TumorLikelihood {
 public:
  TumorLikelihood(CalibrationLayout layout, std::vector<DataBatch> schedule, SolverConfig solver = {})
      : layout_(std::move(layout)), schedule_(std::move(schedule)), solver_(solver) {
    for (std::size_t k = 0; k < schedule_.size(); ++k) {
      single_.push_back(build(k, k + 1));
      prefix_.push_back(build(0, k + 1));
    }
  }

  const CalibrationLayout& layout() const { return layout_; }
  const std::vector<DataBatch>& schedule() const { return schedule_; }
  std::size_t num_batches() const { return schedule_.size(); }

  double operator()(std::span<const double> theta, std::size_t begin, std::size_t end) const {
    if (begin >= end) return 0.0;
    if (end > schedule_.size()) throw DomainError("TumorLikelihood: batch range past the schedule");
    if (end == begin + 1) return evaluate(single_[begin], theta);
    if (begin == 0) return evaluate(prefix_[end - 1], theta);
    return evaluate(build(begin, end), theta);
  }

  /// Log-likelihood for a realized parameter set rather than a calibration vector.
  double evaluate_realization(const Realization& r, std::size_t begin, std::size_t end) const {
    return evaluate_plan(begin == 0 && end > 0 ? prefix_[end - 1] : build(begin, end), r);
  }

 private:
  struct Point {
    std::size_t time_index;
    double intensity;
  };
  struct ConditionPlan {
    double s0 = 0.0;
    double v0 = 0.0;
    bool d5_group = false;
    std::vector<double> times;
    std::vector<Point> points;
  };
  using RangePlan = std::vector<ConditionPlan>;

  RangePlan build(std::size_t begin, std::size_t end) const {
    std::map<std::tuple<double, double, bool>, std::vector<const Measurement*>> groups;
    for (std::size_t k = begin; k < end; ++k) {
      for (const auto& m : schedule_[k].measurements) groups[{m.s0, m.v0, uses_d5_group(m.dataset)}].push_back(&m);
    }
    RangePlan plan;
    for (const auto& [key, ms] : groups) {
      ConditionPlan c;
      std::tie(c.s0, c.v0, c.d5_group) = key;
      for (const auto* m : ms) c.times.push_back(m->t);
      std::sort(c.times.begin(), c.times.end());
      c.times.erase(std::unique(c.times.begin(), c.times.end()), c.times.end());
      for (const auto* m : ms) {
        const auto it = std::lower_bound(c.times.begin(), c.times.end(), m->t);
        c.points.push_back({static_cast<std::size_t>(it - c.times.begin()), m->intensity});
      }
      plan.push_back(std::move(c));
    }
    return plan;
  }

  double evaluate(const RangePlan& plan, std::span<const double> theta) const {
    if (!layout_.in_support(theta)) return -std::numeric_limits<double>::infinity();
    return evaluate_plan(plan, realize(layout_.expand(theta)));
  }

  double evaluate_plan(const RangePlan& plan, const Realization& r) const {
    try {
      r.params.validate();
      r.d14.noise.validate();
      r.d5.noise.validate();
    } catch (const DomainError&) {
      return -std::numeric_limits<double>::infinity();
    }
    double sum = 0.0;
    for (const auto& c : plan) {
      const ObservationGroup& g = c.d5_group ? r.d5 : r.d14;
      const Trajectory tr = solve(layout_.model, r.params, ExperimentCondition{c.s0, c.v0, 0.0, c.times.back()}, c.times, solver_);
      for (const auto& pt : c.points) {
        sum += log_likelihood_point(pt.intensity, tr.v_values[pt.time_index], g.map, g.noise);
      }
      if (sum == -std::numeric_limits<double>::infinity()) return sum;
    }
    return sum;
  }

  CalibrationLayout layout_;
  std::vector<DataBatch> schedule_;
  SolverConfig solver_;
  std::vector<RangePlan> single_;
  std::vector<RangePlan> prefix_;
};

struct CoverageCounts {
  std::size_t below = 0;
  std::size_t within = 0;
  std::size_t above = 0;

  std::size_t total() const { return below + within + above; }
  double percent_below() const { return 100.0 * static_cast<double>(below) / static_cast<double>(total()); }
  double percent_within() const { return 100.0 * static_cast<double>(within) / static_cast<double>(total()); }
  double percent_above() const { return 100.0 * static_cast<double>(above) / static_cast<double>(total()); }

  void add(const CoverageCounts& o) {
    below += o.below;
    within += o.within;
    above += o.above;
  }
};

struct CoverageReport {
  std::map<std::tuple<DatasetId, double, double>, CoverageCounts> cells;  // (data set, V0, t)
  std::map<DatasetId, CoverageCounts> per_dataset;
  CoverageCounts overall;
};

/// Counts measurements below / within / above the uncertainty range around their predictions.
inline CoverageReport coverage_report(const Dataset& ds, std::span<const double> predicted_v, const ObservationGroup& d14,
                                      const ObservationGroup& d5, double coverage = 0.90) {
  if (ds.measurements.empty()) throw DataError("coverage_report: empty dataset");
  if (predicted_v.size() != ds.measurements.size()) throw DataError("coverage_report: predictions not aligned with measurements");
  CoverageReport report;
  for (std::size_t i = 0; i < ds.measurements.size(); ++i) {
    const auto& m = ds.measurements[i];
    const ObservationGroup& g = uses_d5_group(m.dataset) ? d5 : d14;
    const Interval range = uncertainty_range(predicted_v[i], g.map, g.noise, coverage);
    CoverageCounts c;
    if (m.intensity < range.lower) {
      c.below = 1;
    } else if (m.intensity > range.upper) {
      c.above = 1;
    } else {
      c.within = 1;
    }
    report.cells[{m.dataset, m.v0, m.t}].add(c);
    report.per_dataset[m.dataset].add(c);
    report.overall.add(c);
  }
  return report;
}

struct PosteriorSummary {
  std::vector<std::string> names;
  std::vector<double> mean;
  std::vector<double> variance;
  double ess = 0.0;
};

/// Weighted means and variances of the free components plus the derived lambda, lambda_st, n_d5.
inline PosteriorSummary summarize(const CalibrationLayout& layout, const ParticleEnsemble& e) {
  PosteriorSummary s;
  s.ess = effective_sample_size(e);
  const auto w = e.weights();
  auto add = [&](const std::string& name, auto&& value_of) {
    double mean = 0.0;
    for (std::size_t p = 0; p < e.count; ++p) mean += w[p] * value_of(p);
    double var = 0.0;
    for (std::size_t p = 0; p < e.count; ++p) {
      const double d = value_of(p) - mean;
      var += w[p] * d * d;
    }
    s.names.push_back(name);
    s.mean.push_back(mean);
    s.variance.push_back(var);
  };
  for (std::size_t j = 0; j < layout.dim(); ++j) {
    add(std::string(param_name(layout.free[j].id)), [&](std::size_t p) { return e.position(p)[j]; });
  }
  auto realized = [&](std::size_t p) { return realize(layout.expand(e.position(p))); };
  add("lambda", [&](std::size_t p) { return realized(p).params.lambda; });
  add("lambda_st", [&](std::size_t p) { return realized(p).params.lambda_st; });
  add("n_d5", [&](std::size_t p) { return realized(p).d5.map.n_scale; });
  return s;
}

inline double summary_value(const PosteriorSummary& s, std::string_view name) {
  for (std::size_t i = 0; i < s.names.size(); ++i) {
    if (s.names[i] == name) return s.mean[i];
  }
  throw std::invalid_argument("summary has no entry '" + std::string(name) + "'");
}

/// Posterior mean in model space: weighted means of beta, lambda, lambda_st, K, m, s_thr,
/// alpha_s and of the observation parameters of both groups.
inline Realization posterior_mean_realization(const CalibrationLayout& layout, const ParticleEnsemble& e) {
  const auto w = e.weights();
  Realization mean{};
  mean.params = {0, 0, 0, 0, 0, 0, 0};
  mean.d14 = {{0.0}, {0.0}};
  mean.d5 = {{0.0}, {0.0}};
  for (std::size_t p = 0; p < e.count; ++p) {
    const Realization r = realize(layout.expand(e.position(p)));
    mean.params.beta += w[p] * r.params.beta;
    mean.params.lambda += w[p] * r.params.lambda;
    mean.params.lambda_st += w[p] * r.params.lambda_st;
    mean.params.capacity += w[p] * r.params.capacity;
    mean.params.shape_m += w[p] * r.params.shape_m;
    mean.params.s_thr += w[p] * r.params.s_thr;
    mean.params.alpha_s += w[p] * r.params.alpha_s;
    mean.d14.map.n_scale += w[p] * r.d14.map.n_scale;
    mean.d5.map.n_scale += w[p] * r.d5.map.n_scale;
    mean.d14.noise.sigma_sq += w[p] * r.d14.noise.sigma_sq;
    mean.d5.noise.sigma_sq += w[p] * r.d5.noise.sigma_sq;
  }
  return mean;
}

/// Noise-free predicted intensities n_p V_p(t) of each particle at `times`, with particle weights.
/// `values[i][p]` belongs to times[i]. With 0 < max_particles < count a uniformly weighted
/// subsample drawn by weight replaces the full ensemble.
struct PredictiveSample {
  std::vector<std::vector<double>> values;
  std::vector<double> weights;
};

inline PredictiveSample posterior_predictive(const CalibrationLayout& layout, const ParticleEnsemble& e, ModelId model,
                                             DatasetId dataset, double v0, std::span<const double> times,
                                             const SolverConfig& solver = {}, std::size_t max_particles = 0,
                                             std::size_t workers = 1, bool noisy = false) {
  std::vector<std::size_t> idx;
  std::vector<double> weights;
  if (max_particles > 0 && max_particles < e.count) {
    Rng rng = make_stream(e.seed, e.step, 0, StreamTag::predictive);
    idx = resample_indices(e.weights(), max_particles, ResamplingScheme::systematic, rng);
    weights.assign(max_particles, 1.0 / static_cast<double>(max_particles));
  } else {
    idx.resize(e.count);
    for (std::size_t p = 0; p < e.count; ++p) idx[p] = p;
    weights = e.weights();
  }
  const double s0 = design_row(dataset).s0;
  PredictiveSample out;
  out.weights = weights;
  out.values.assign(times.size(), std::vector<double>(idx.size()));
  parallel_for(idx.size(), workers, [&](std::size_t i) {
    const Realization r = realize(layout.expand(e.position(idx[i])));
    const ObservationGroup& g = uses_d5_group(dataset) ? r.d5 : r.d14;
    const Trajectory tr = solve(model, r.params, ExperimentCondition{s0, v0, 0.0, times.back()}, times, solver);
    Rng rng = make_stream(e.seed, e.step + 1, idx[i], StreamTag::predictive);
    for (std::size_t k = 0; k < times.size(); ++k) {
      double value = g.map.n_scale * tr.v_values[k];
      if (noisy) value *= sample_noise(g.noise, rng);
      out.values[k][i] = value;
    }
  });
  return out;
}

}  // namespace tumorcal
