#pragma once

// Tumor growth ODE models under constant nutrient supply.
//
//   m_opt : V' = beta V (1 - (V/K)^m) - lambda V                      (optimal nutrients)
//   m_s   : V' = beta_S V (1 - (V/K)^m) - lambda_S V                  (nutrient-scaled rates)
//           beta_S = d+(S0) beta,  lambda_S = lambda + d-(S0) lambda_st
//   m_eta : V' = (1 - eta) beta V (1 - (V/K)^m) - (lambda + eta lambda_st) V
//           eta' = alpha_S (d-(S0) - eta)                             (environmental stress level)
//
// d+(S) = S^2 / (S_thr^2 + S^2) and d- = 1 - d+ are Hill-type influence functions with Hill
// coefficient 2. The stress equation is the single-nutrient instance of the general form
//   eta' = (sum_j a-_j d-_j(E_j)) (1 - eta) - (sum_j a+_j d+_j(E_j)) eta
// with one environmental input E_1 = S held constant; only that instance is implemented.

#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tumorcal/error.hpp"
#include "tumorcal/ode_solver.hpp"

namespace tumorcal {

enum class ModelId { m_opt, m_s, m_eta };

inline std::string_view to_string(ModelId id) {
  switch (id) {
    case ModelId::m_opt: return "m_opt";
    case ModelId::m_s: return "m_s";
    case ModelId::m_eta: return "m_eta";
  }
  return "unknown";
}

inline ModelId parse_model_id(std::string_view name) {
  if (name == "m_opt") return ModelId::m_opt;
  if (name == "m_s") return ModelId::m_s;
  if (name == "m_eta") return ModelId::m_eta;
  throw std::invalid_argument("unknown model id '" + std::string(name) + "' (expected m_opt, m_s or m_eta)");
}

/// Biological parameters. Rates in 1/day; capacity in the same normalized density unit as V
/// (10^5 cells/mL); s_thr as a fraction of optimal (10% FBS) supply.
struct ModelParams {
  double beta = 0.0;
  double lambda = 0.0;
  double lambda_st = 0.0;
  double capacity = 0.0;
  double shape_m = 0.0;
  double s_thr = 0.0;
  double alpha_s = 0.0;

  void validate() const {
    if (!(beta > 0.0 && lambda > 0.0 && lambda_st > 0.0 && capacity > 0.0 && alpha_s > 0.0)) {
      throw DomainError("model parameters must be strictly positive");
    }
    if (!(beta > lambda)) throw DomainError("growth rate beta must exceed natural death rate lambda");
    if (!(lambda_st > lambda)) throw DomainError("starvation rate lambda_st must exceed lambda");
    if (!(shape_m > 1.0)) throw DomainError("contact inhibition exponent m must exceed 1");
    if (!(s_thr > 0.0 && s_thr < 1.0)) throw DomainError("nutrient threshold s_thr must lie in (0,1)");
  }
};

struct ExperimentCondition {
  double s0 = 1.0;
  double v0 = 1.0;
  double eta0 = 0.0;
  double horizon = 7.0;

  void validate() const {
    if (!(s0 >= 0.0 && s0 <= 1.0)) throw DomainError("nutrient saturation s0 must lie in [0,1]");
    if (!(eta0 >= 0.0 && eta0 <= 1.0)) throw DomainError("initial stress eta0 must lie in [0,1]");
    if (!(v0 > 0.0)) throw DomainError("initial density v0 must be positive");
    if (!(horizon >= 0.0)) throw DomainError("horizon must be non-negative");
  }
};

struct Trajectory {
  std::vector<double> times;
  std::vector<double> v_values;
  std::optional<std::vector<double>> eta_values;
};

enum class Stability { stable, unstable };

struct SteadyState {
  double v_bar = 0.0;
  std::optional<double> eta_bar;
  Stability stability = Stability::unstable;
};

struct SteadyStateReport {
  std::vector<SteadyState> states;
};

/// Relative gap |beta_S - lambda_S| / (beta_S + lambda_S) below which the degenerate
/// (l'Hospital) closed form is used.
inline constexpr double kBranchEpsilon = 1e-9;

inline double influence_plus(double s, double s_thr) {
  if (!(s_thr > 0.0)) throw DomainError("influence_plus: s_thr must be positive");
  if (!(s >= 0.0 && s <= 1.0)) throw DomainError("influence_plus: saturation must lie in [0,1]");
  const double s2 = s * s;
  return s2 / (s_thr * s_thr + s2);
}

inline double influence_minus(double s, double s_thr) {
  if (!(s_thr > 0.0)) throw DomainError("influence_minus: s_thr must be positive");
  if (!(s >= 0.0 && s <= 1.0)) throw DomainError("influence_minus: saturation must lie in [0,1]");
  const double t2 = s_thr * s_thr;
  return t2 / (t2 + s * s);
}

/// Effective constant growth and death rates of m_s at saturation s0.
struct NetRates {
  double growth = 0.0;
  double death = 0.0;
};

inline NetRates nutrient_rates(const ModelParams& p, double s0) {
  return {influence_plus(s0, p.s_thr) * p.beta, p.lambda + influence_minus(s0, p.s_thr) * p.lambda_st};
}

/// K (1 - death/growth)^(1/m); requires growth > death.
inline double net_capacity(double growth, double death, double capacity, double shape_m) {
  return capacity * std::pow(1.0 - death / growth, 1.0 / shape_m);
}

/// Upper envelope max{V0, K (1 - lambda/beta)^(1/m)} valid for all three models.
inline double density_bound(const ModelParams& p, double v0) {
  return std::max(v0, net_capacity(p.beta, p.lambda, p.capacity, p.shape_m));
}

/// Closed-form solution of V' = b V (1 - (V/K)^m) - d V, V(0) = v0, for constant b >= 0, d > 0.
///
/// Evaluated in log space with the exponential factored so that no intermediate overflows for
/// large t; the degenerate case b == d uses V0 K (m t b V0^m + K^m)^(-1/m).
inline double logistic_closed_form(double growth, double death, double capacity, double shape_m, double v0, double t) {
  if (t == 0.0) return v0;
  const double m = shape_m;
  const double log_x = m * (std::log(v0) - std::log(capacity));  // log (V0/K)^m
  const double x = std::exp(log_x);
  const double r = growth - death;
  double log_ratio;  // log of (V/K)^m
  if (std::abs(r) < kBranchEpsilon * (growth + death)) {
    log_ratio = log_x - std::log1p(growth * x * m * t);
  } else if (r > 0.0) {
    const double tau = r * m * t;
    const double denom = growth * x * (-std::expm1(-tau)) + r * std::exp(-tau);
    log_ratio = log_x + std::log(r) - std::log(denom);
  } else {
    const double g = -r;
    const double tau = g * m * t;
    const double denom = growth * x * (-std::expm1(-tau)) + g;
    log_ratio = log_x + std::log(g) - tau - std::log(denom);
  }
  return std::exp(std::log(capacity) + log_ratio / m);
}

/// eta(t) = d-(S0) (1 - e^{-alpha t}) + eta0 e^{-alpha t}.
inline double stress_level(const ModelParams& p, const ExperimentCondition& c, double t) {
  const double target = influence_minus(c.s0, p.s_thr);
  const double decay = std::exp(-p.alpha_s * t);
  return target * (-std::expm1(-p.alpha_s * t)) + c.eta0 * decay;
}

/// Right-hand side dV/dt of the given model at (t, V). V below zero is treated as zero inside the
/// power term so that non-integer m stays real.
inline double growth_rhs(ModelId model, const ModelParams& p, const ExperimentCondition& c, double t, double v) {
  const double vp = std::max(v, 0.0);
  const double crowding = 1.0 - std::pow(vp / p.capacity, p.shape_m);
  switch (model) {
    case ModelId::m_opt:
      return p.beta * v * crowding - p.lambda * v;
    case ModelId::m_s: {
      const NetRates r = nutrient_rates(p, c.s0);
      return r.growth * v * crowding - r.death * v;
    }
    case ModelId::m_eta: {
      const double eta = stress_level(p, c, t);
      return (1.0 - eta) * p.beta * v * crowding - (p.lambda + eta * p.lambda_st) * v;
    }
  }
  return 0.0;
}

namespace detail {

inline void check_times(std::span<const double> times) {
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (!(times[i] >= 0.0)) throw DomainError("evaluation times must be non-negative");
    if (i > 0 && !(times[i] > times[i - 1])) throw DomainError("evaluation times must be strictly increasing");
  }
}

}  // namespace detail

inline Trajectory solve_opt(const ModelParams& p, const ExperimentCondition& c, std::span<const double> times) {
  if (!(p.beta > p.lambda)) throw DomainError("solve_opt: requires beta > lambda");
  if (!(c.v0 > 0.0)) throw DomainError("solve_opt: v0 must be positive");
  detail::check_times(times);
  Trajectory tr;
  tr.times.assign(times.begin(), times.end());
  tr.v_values.reserve(times.size());
  for (double t : times) tr.v_values.push_back(logistic_closed_form(p.beta, p.lambda, p.capacity, p.shape_m, c.v0, t));
  return tr;
}

inline Trajectory solve_ms(const ModelParams& p, const ExperimentCondition& c, std::span<const double> times) {
  p.validate();
  c.validate();
  detail::check_times(times);
  const NetRates r = nutrient_rates(p, c.s0);
  Trajectory tr;
  tr.times.assign(times.begin(), times.end());
  tr.v_values.reserve(times.size());
  for (double t : times) tr.v_values.push_back(logistic_closed_form(r.growth, r.death, p.capacity, p.shape_m, c.v0, t));
  return tr;
}

/// Per-capita rate V'/V of the given model; finite for every V >= 0.
inline double per_capita_rate(ModelId model, const ModelParams& p, const ExperimentCondition& c, double t, double v) {
  const double crowding = 1.0 - std::pow(std::max(v, 0.0) / p.capacity, p.shape_m);
  switch (model) {
    case ModelId::m_opt:
      return p.beta * crowding - p.lambda;
    case ModelId::m_s: {
      const NetRates r = nutrient_rates(p, c.s0);
      return r.growth * crowding - r.death;
    }
    case ModelId::m_eta: {
      const double eta = stress_level(p, c, t);
      return (1.0 - eta) * p.beta * crowding - (p.lambda + eta * p.lambda_st);
    }
  }
  return 0.0;
}

/// m_eta: stress level in closed form, density by adaptive Runge-Kutta integration of
/// u = log V, u' = V'/V. Positivity holds exactly; tolerances apply to log V.
inline Trajectory solve_eta(const ModelParams& p, const ExperimentCondition& c, std::span<const double> times,
                            const SolverConfig& cfg = {}) {
  p.validate();
  c.validate();
  detail::check_times(times);
  auto rhs = [&](double t, const OdeState<1>& u, OdeState<1>& du) {
    du[0] = per_capita_rate(ModelId::m_eta, p, c, t, std::exp(u[0]));
  };
  const auto states = integrate_dense<1>(rhs, 0.0, OdeState<1>{std::log(c.v0)}, times, cfg);
  Trajectory tr;
  tr.times.assign(times.begin(), times.end());
  tr.v_values.reserve(times.size());
  std::vector<double> eta;
  eta.reserve(times.size());
  for (std::size_t i = 0; i < states.size(); ++i) {
    tr.v_values.push_back(std::exp(states[i][0]));
    eta.push_back(stress_level(p, c, times[i]));
  }
  tr.eta_values = std::move(eta);
  return tr;
}

inline Trajectory solve(ModelId model, const ModelParams& p, const ExperimentCondition& c, std::span<const double> times,
                        const SolverConfig& cfg = {}) {
  switch (model) {
    case ModelId::m_opt: return solve_opt(p, c, times);
    case ModelId::m_s: return solve_ms(p, c, times);
    case ModelId::m_eta: return solve_eta(p, c, times, cfg);
  }
  throw DomainError("solve: unknown model");
}

/// Steady states with local stability. In the boundary case lambda_S == beta_S the trivial state is
/// stable (algebraic decay of perturbations).
inline SteadyStateReport steady_states(ModelId model, const ModelParams& p, const ExperimentCondition& c) {
  SteadyStateReport report;
  NetRates r{p.beta, p.lambda};
  if (model != ModelId::m_opt) r = nutrient_rates(p, c.s0);
  std::optional<double> eta_bar;
  if (model == ModelId::m_eta) eta_bar = influence_minus(c.s0, p.s_thr);

  const bool degenerate = std::abs(r.growth - r.death) < kBranchEpsilon * (r.growth + r.death);
  if (r.death < r.growth && !degenerate) {
    report.states.push_back({0.0, eta_bar, Stability::unstable});
    report.states.push_back({net_capacity(r.growth, r.death, p.capacity, p.shape_m), eta_bar, Stability::stable});
  } else {
    report.states.push_back({0.0, eta_bar, Stability::stable});
  }
  return report;
}

}  // namespace tumorcal
