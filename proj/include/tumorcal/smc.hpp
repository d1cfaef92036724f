#pragma once

// Sequential Monte Carlo over incrementally added data batches:
//   reweight by the new batch likelihood -> resample when ESS < tau P -> adaptive reflective
//   random-walk Metropolis-Hastings moves targeting prior x likelihood of all batches so far.
// The log evidence is accumulated from the reweighting normalizers.
//
// A likelihood is any callable `double(std::span<const double> theta, std::size_t begin,
// std::size_t end)` returning the log-likelihood of batches [begin, end) of the schedule. It is
// called concurrently and must be thread-safe.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "tumorcal/error.hpp"
#include "tumorcal/parallel.hpp"
#include "tumorcal/priors.hpp"
#include "tumorcal/random.hpp"

namespace tumorcal {

enum class ResamplingScheme { multinomial, systematic };

struct SmcConfig {
  std::size_t particle_count = 50'000;
  double resample_fraction = 0.75;
  std::size_t mcmc_updates_per_step = 5;
  double rho_initial = 1.0;
  double acceptance_high = 0.30;
  double acceptance_low = 0.15;
  std::uint64_t seed = 1;
  std::size_t workers = 1;
  ResamplingScheme resampling = ResamplingScheme::multinomial;

  void validate() const {
    if (particle_count < 2) throw DomainError("SMC needs at least two particles");
    if (!(resample_fraction > 0.0 && resample_fraction < 1.0)) throw DomainError("resample fraction must lie in (0,1)");
    if (mcmc_updates_per_step < 1) throw DomainError("at least one MCMC update per step is required");
    if (!(rho_initial > 0.0)) throw DomainError("initial scaling parameter must be positive");
    if (!(acceptance_low <= acceptance_high)) throw DomainError("acceptance band is inverted");
  }
};

/// Proposal scale used for a component whose weighted variance has collapsed, relative to the
/// prior support width.
inline constexpr double kScaleFloorFraction = 1e-8;

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// Weighted particle swarm. Positions are row-major (count x dim). `log_weights` are normalized
/// (their exponentials sum to one). `log_likelihood` caches each particle's data log-likelihood
/// over every batch included so far.
struct ParticleEnsemble {
  std::size_t count = 0;
  std::size_t dim = 0;
  std::vector<double> positions;
  std::vector<double> log_weights;
  std::vector<double> log_likelihood;
  std::vector<double> scales;
  double rho = 1.0;
  std::optional<double> last_acceptance;
  std::size_t step = 0;
  std::uint64_t seed = 0;

  std::span<const double> position(std::size_t p) const { return {positions.data() + p * dim, dim}; }
  std::span<double> position(std::size_t p) { return {positions.data() + p * dim, dim}; }

  std::vector<double> weights() const {
    std::vector<double> w(count);
    for (std::size_t p = 0; p < count; ++p) w[p] = std::exp(log_weights[p]);
    return w;
  }
};

struct EvidenceTrace {
  std::vector<double> increments;
  std::vector<double> cumulative;

  void push(double increment) {
    increments.push_back(increment);
    cumulative.push_back(log_evidence() + increment);
  }
  /// log Z_k of the last completed step; log Z_0 = 0.
  double log_evidence() const { return cumulative.empty() ? 0.0 : cumulative.back(); }
  std::size_t size() const { return increments.size(); }
};

struct StepDiagnostics {
  std::size_t step = 0;
  double ess = 0.0;
  bool resampled = false;
  double acceptance = 0.0;
  double rho = 0.0;
  double log_evidence_increment = 0.0;
  double log_evidence = 0.0;
};

struct SmcRun {
  ParticleEnsemble ensemble;
  EvidenceTrace evidence;
  std::vector<StepDiagnostics> diagnostics;
};

inline ParticleEnsemble initialize(std::span<const MarginalPrior> priors, const SmcConfig& cfg) {
  cfg.validate();
  ParticleEnsemble e;
  e.count = cfg.particle_count;
  e.dim = priors.size();
  e.positions.resize(e.count * e.dim);
  e.log_weights.assign(e.count, -std::log(static_cast<double>(e.count)));
  e.log_likelihood.assign(e.count, 0.0);
  e.scales.assign(e.dim, 0.0);
  e.rho = cfg.rho_initial;
  e.seed = cfg.seed;
  parallel_for(e.count, cfg.workers, [&](std::size_t p) {
    Rng rng = make_stream(cfg.seed, 0, p, StreamTag::initialize);
    auto row = e.position(p);
    for (std::size_t j = 0; j < e.dim; ++j) row[j] = priors[j].sample(rng);
  });
  return e;
}

/// Removes component j from every particle (used to start a smaller model from a shared sample).
inline ParticleEnsemble drop_component(const ParticleEnsemble& e, std::size_t j) {
  if (j >= e.dim) throw DomainError("drop_component: index out of range");
  ParticleEnsemble out = e;
  out.dim = e.dim - 1;
  out.positions.clear();
  out.positions.reserve(e.count * out.dim);
  for (std::size_t p = 0; p < e.count; ++p) {
    const auto row = e.position(p);
    for (std::size_t k = 0; k < e.dim; ++k) {
      if (k != j) out.positions.push_back(row[k]);
    }
  }
  out.scales.assign(out.dim, 0.0);
  return out;
}

inline double effective_sample_size(const ParticleEnsemble& e) {
  double sum_sq = 0.0;
  for (double lw : e.log_weights) {
    const double w = std::exp(lw);
    sum_sq += w * w;
  }
  return 1.0 / sum_sq;
}

/// Multiplies weights by the batch likelihood and renormalizes in log space.
/// Returns the log evidence increment log sum_p W_p L(batch | theta_p).
template <class BatchLikelihood>
double reweight(ParticleEnsemble& e, const BatchLikelihood& batch_log_likelihood, std::size_t workers = 1) {
  std::vector<double> ll(e.count);
  parallel_for(e.count, workers, [&](std::size_t p) {
    const double v = batch_log_likelihood(e.position(p));
    ll[p] = std::isnan(v) ? kNegInf : v;
  });
  std::vector<double> lw(e.count);
  double max_lw = kNegInf;
  for (std::size_t p = 0; p < e.count; ++p) {
    lw[p] = e.log_weights[p] + ll[p];
    if (std::isnan(lw[p])) lw[p] = kNegInf;
    max_lw = std::max(max_lw, lw[p]);
  }
  if (max_lw == kNegInf) throw DegeneracyError("reweight: every particle has zero likelihood for this batch");
  double sum = 0.0;
  for (double v : lw) sum += std::exp(v - max_lw);
  const double increment = max_lw + std::log(sum);
  for (std::size_t p = 0; p < e.count; ++p) {
    e.log_weights[p] = lw[p] - increment;
    e.log_likelihood[p] += ll[p];
  }
  return increment;
}

/// Draws `count` ancestor indices from the normalized weights using the given scheme.
inline std::vector<std::size_t> resample_indices(std::span<const double> weights, std::size_t count, ResamplingScheme scheme, Rng& rng) {
  std::vector<double> cdf(weights.size());
  std::partial_sum(weights.begin(), weights.end(), cdf.begin());
  const double total = cdf.back();
  std::vector<std::size_t> idx(count);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto locate = [&](double u) {
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), u * total);
    return std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), weights.size() - 1);
  };
  if (scheme == ResamplingScheme::multinomial) {
    for (std::size_t i = 0; i < count; ++i) idx[i] = locate(unit(rng));
  } else {
    const double u0 = unit(rng) / static_cast<double>(count);
    for (std::size_t i = 0; i < count; ++i) idx[i] = locate(u0 + static_cast<double>(i) / static_cast<double>(count));
  }
  return idx;
}

/// Resamples when ESS < tau P and resets weights to 1/P. Returns whether resampling happened.
inline bool resample_if_needed(ParticleEnsemble& e, const SmcConfig& cfg) {
  const double ess = effective_sample_size(e);
  if (!(ess < cfg.resample_fraction * static_cast<double>(e.count))) return false;
  Rng rng = make_stream(e.seed, e.step, 0, StreamTag::resample);
  const auto w = e.weights();
  const auto idx = resample_indices(w, e.count, cfg.resampling, rng);
  std::vector<double> positions(e.count * e.dim);
  std::vector<double> ll(e.count);
  for (std::size_t p = 0; p < e.count; ++p) {
    const auto src = e.position(idx[p]);
    std::copy(src.begin(), src.end(), positions.begin() + static_cast<std::ptrdiff_t>(p * e.dim));
    ll[p] = e.log_likelihood[idx[p]];
  }
  e.positions = std::move(positions);
  e.log_likelihood = std::move(ll);
  e.log_weights.assign(e.count, -std::log(static_cast<double>(e.count)));
  return true;
}

/// Weighted mean and variance of component j under the current normalized weights.
inline std::pair<double, double> weighted_moments(const ParticleEnsemble& e, std::size_t j) {
  double mean = 0.0;
  for (std::size_t p = 0; p < e.count; ++p) mean += std::exp(e.log_weights[p]) * e.positions[p * e.dim + j];
  double var = 0.0;
  for (std::size_t p = 0; p < e.count; ++p) {
    const double d = e.positions[p * e.dim + j] - mean;
    var += std::exp(e.log_weights[p]) * d * d;
  }
  return {mean, var};
}

/// rho_k = 2 rho_{k-1} if a_{k-1} > high, rho_{k-1}/2 if a_{k-1} < low, unchanged otherwise.
inline double next_rho(double rho, std::optional<double> last_acceptance, const SmcConfig& cfg) {
  if (!last_acceptance) return rho;
  if (*last_acceptance > cfg.acceptance_high) return rho * 2.0;
  if (*last_acceptance < cfg.acceptance_low) return rho / 2.0;
  return rho;
}

/// Updates rho from the previous acceptance rate and sets eps_j = rho sqrt(Var_j).
inline void adapt_scales(ParticleEnsemble& e, std::span<const MarginalPrior> priors, const SmcConfig& cfg) {
  e.rho = next_rho(e.rho, e.last_acceptance, cfg);
  e.scales.assign(e.dim, 0.0);
  for (std::size_t j = 0; j < e.dim; ++j) {
    const double sd = std::sqrt(weighted_moments(e, j).second);
    const double floor = kScaleFloorFraction * priors[j].width();
    e.scales[j] = std::max(e.rho * sd, floor);
  }
}

/// Folds x back into [lower, upper] by repeated reflection at the bounds.
inline double reflect_into(double x, double lower, double upper) {
  if (x >= lower && x <= upper) return x;
  const double w = upper - lower;
  double y = std::fmod(x - lower, 2.0 * w);
  if (y < 0.0) y += 2.0 * w;
  if (y > w) y = 2.0 * w - y;
  return lower + y;
}

/// `updates` sweeps of component-wise reflective Gaussian random-walk proposals with the given
/// scales, each accepted with probability min{pi(q)/pi(theta), 1} where
/// log pi = log prior + target_log_likelihood. Returns the acceptance rate over all proposals.
template <class TargetLikelihood>
double mutate_with_scales(ParticleEnsemble& e, std::span<const MarginalPrior> priors, std::span<const double> scales,
                          const TargetLikelihood& target_log_likelihood, std::size_t updates, std::size_t workers = 1) {
  std::vector<std::size_t> accepted(e.count, 0);
  parallel_for(e.count, workers, [&](std::size_t p) {
    Rng rng = make_stream(e.seed, e.step, p, StreamTag::mutate);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto row = e.position(p);
    std::vector<double> q(e.dim);
    double cur_ll = e.log_likelihood[p];
    double cur_lp = prior_log_density(priors, row);
    for (std::size_t u = 0; u < updates; ++u) {
      bool inside = true;
      bool same = true;
      for (std::size_t j = 0; j < e.dim; ++j) {
        const double step = scales[j] * normal(rng);
        q[j] = reflect_into(row[j] + step, priors[j].lower, priors[j].upper);
        inside = inside && priors[j].in_support(q[j]);
        same = same && q[j] == row[j];
      }
      const double log_u = std::log(unit(rng));
      if (same) {
        ++accepted[p];
        continue;
      }
      if (!inside) continue;
      const double q_lp = prior_log_density(priors, q);
      const double q_ll = target_log_likelihood(std::span<const double>(q));
      const double q_target = q_lp + q_ll;
      if (std::isnan(q_target) || q_target == kNegInf) continue;
      const double cur_target = cur_lp + cur_ll;
      if (cur_target == kNegInf || log_u < q_target - cur_target) {
        std::copy(q.begin(), q.end(), row.begin());
        cur_ll = q_ll;
        cur_lp = q_lp;
        ++accepted[p];
      }
    }
    e.log_likelihood[p] = cur_ll;
  });
  std::size_t total = 0;
  for (auto a : accepted) total += a;
  return static_cast<double>(total) / static_cast<double>(e.count * updates);
}

/// Adaptive mutation step: adapt scales, run the MCMC sweeps, record the acceptance rate.
template <class TargetLikelihood>
double mutate(ParticleEnsemble& e, std::span<const MarginalPrior> priors, const TargetLikelihood& target_log_likelihood,
              const SmcConfig& cfg) {
  adapt_scales(e, priors, cfg);
  const double rate = mutate_with_scales(e, priors, e.scales, target_log_likelihood, cfg.mcmc_updates_per_step, cfg.workers);
  e.last_acceptance = rate;
  return rate;
}

/// One full SMC step k = e.step + 1 over batch index k - 1.
template <class Likelihood>
StepDiagnostics smc_step(SmcRun& state, std::span<const MarginalPrior> priors, const Likelihood& likelihood, const SmcConfig& cfg) {
  ParticleEnsemble& e = state.ensemble;
  const std::size_t k = e.step + 1;
  const double increment = reweight(
      e, [&](std::span<const double> theta) { return likelihood(theta, k - 1, k); }, cfg.workers);
  e.step = k;
  StepDiagnostics d;
  d.step = k;
  d.ess = effective_sample_size(e);
  d.resampled = resample_if_needed(e, cfg);
  d.acceptance = mutate(e, priors, [&](std::span<const double> theta) { return likelihood(theta, 0, k); }, cfg);
  d.rho = e.rho;
  state.evidence.push(increment);
  d.log_evidence_increment = increment;
  d.log_evidence = state.evidence.log_evidence();
  state.diagnostics.push_back(d);
  return d;
}

/// Runs steps until `num_batches` batches are included. Starts from a fresh prior sample unless
/// `resume` holds a partially completed run (from a checkpoint or a shared initial ensemble).
template <class Likelihood>
SmcRun run(std::span<const MarginalPrior> priors, const Likelihood& likelihood, std::size_t num_batches, const SmcConfig& cfg,
           std::optional<SmcRun> resume = std::nullopt, const std::function<void(const SmcRun&)>& on_step = {}) {
  cfg.validate();
  SmcRun state;
  if (resume) {
    state = std::move(*resume);
    if (state.ensemble.dim != priors.size()) throw DomainError("run: resumed ensemble has wrong dimension");
    if (state.ensemble.step > num_batches) throw DomainError("run: resumed ensemble is past the end of the schedule");
  } else {
    state.ensemble = initialize(priors, cfg);
  }
  while (state.ensemble.step < num_batches) {
    smc_step(state, priors, likelihood, cfg);
    if (on_step) on_step(state);
  }
  return state;
}

}  // namespace tumorcal
