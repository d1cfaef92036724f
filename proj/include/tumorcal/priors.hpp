#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tumorcal/error.hpp"
#include "tumorcal/growth_models.hpp"
#include "tumorcal/noise_model.hpp"

namespace tumorcal {

/// Uniform or triangular marginal on the open interval (lower, upper).
struct MarginalPrior {
  enum class Kind { uniform, triangular };

  Kind kind = Kind::uniform;
  double lower = 0.0;
  double upper = 1.0;
  double mode = 0.5;

  static MarginalPrior uniform(double a, double b) {
    MarginalPrior p{Kind::uniform, a, b, 0.5 * (a + b)};
    p.validate();
    return p;
  }
  static MarginalPrior triangular(double a, double h, double b) {
    MarginalPrior p{Kind::triangular, a, b, h};
    p.validate();
    return p;
  }

  void validate() const {
    if (!(lower < upper)) throw DomainError("prior: lower bound must be below upper bound");
    if (kind == Kind::triangular && !(mode >= lower && mode <= upper)) throw DomainError("prior: mode outside bounds");
  }

  double width() const { return upper - lower; }
  bool in_support(double x) const { return x > lower && x < upper; }

  double log_density(double x) const {
    if (!in_support(x)) return -std::numeric_limits<double>::infinity();
    const double w = width();
    if (kind == Kind::uniform) return -std::log(w);
    if (x <= mode) return std::log(2.0 * (x - lower) / (w * (mode - lower)));
    return std::log(2.0 * (upper - x) / (w * (upper - mode)));
  }

  double cdf(double x) const {
    if (x <= lower) return 0.0;
    if (x >= upper) return 1.0;
    const double w = width();
    if (kind == Kind::uniform) return (x - lower) / w;
    if (x <= mode) return (x - lower) * (x - lower) / (w * (mode - lower));
    return 1.0 - (upper - x) * (upper - x) / (w * (upper - mode));
  }

  /// Inverse CDF; the triangular case uses the two-branch square-root form.
  double quantile(double u) const {
    const double w = width();
    if (kind == Kind::uniform) return lower + u * w;
    const double split = (mode - lower) / w;
    if (u < split) return lower + std::sqrt(u * w * (mode - lower));
    return upper - std::sqrt((1.0 - u) * w * (upper - mode));
  }

  double mean() const {
    if (kind == Kind::uniform) return 0.5 * (lower + upper);
    return (lower + mode + upper) / 3.0;
  }

  double variance() const {
    if (kind == Kind::uniform) return width() * width() / 12.0;
    const double a = lower, b = upper, c = mode;
    return (a * a + b * b + c * c - a * b - a * c - b * c) / 18.0;
  }

  /// Draws until the sample falls strictly inside the support.
  template <class Rng>
  double sample(Rng& rng) const {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (;;) {
      const double x = quantile(unit(rng));
      if (in_support(x)) return x;
    }
  }
};

/// Components a calibration vector may contain, in canonical order.
enum class Param : std::uint8_t { beta, c1, c2, capacity, shape_m, s_thr, alpha_s, n_d14, c_n, sigma2_d14, sigma2_d5 };

inline constexpr std::size_t kParamCount = 11;

inline constexpr std::array<std::string_view, kParamCount> kParamNames = {
    "beta", "c1", "c2", "K", "m", "s_thr", "alpha_s", "n_d14", "c_n", "sigma2_d14", "sigma2_d5"};

inline std::string_view param_name(Param p) { return kParamNames[static_cast<std::size_t>(p)]; }

inline Param parse_param(std::string_view name) {
  for (std::size_t i = 0; i < kParamCount; ++i) {
    if (kParamNames[i] == name) return static_cast<Param>(i);
  }
  throw std::invalid_argument("unknown calibration parameter '" + std::string(name) + "'");
}

struct FreeParameter {
  Param id;
  MarginalPrior prior;
};

/// Values of every component in calibration coordinates (c1, c2, c_n instead of lambda, lambda_st, n_D5).
using ParamValues = std::array<double, kParamCount>;

/// Observation parameters for one dataset group (D1-D4 share one, D5 has its own).
struct ObservationGroup {
  ObservationMap map;
  NoiseModel noise;
};

struct Realization {
  ModelParams params;
  ObservationGroup d14;
  ObservationGroup d5;
};

/// Which parameters are calibrated (with priors, in order) and the fixed value of every other one.
struct CalibrationLayout {
  ModelId model = ModelId::m_s;
  std::vector<FreeParameter> free;
  ParamValues fixed{};

  std::size_t dim() const { return free.size(); }

  std::vector<MarginalPrior> priors() const {
    std::vector<MarginalPrior> out;
    out.reserve(free.size());
    for (const auto& f : free) out.push_back(f.prior);
    return out;
  }

  std::optional<std::size_t> index_of(Param p) const {
    for (std::size_t i = 0; i < free.size(); ++i) {
      if (free[i].id == p) return i;
    }
    return std::nullopt;
  }

  ParamValues expand(std::span<const double> theta) const {
    if (theta.size() != free.size()) throw DomainError("calibration vector has wrong dimension");
    ParamValues v = fixed;
    for (std::size_t i = 0; i < free.size(); ++i) v[static_cast<std::size_t>(free[i].id)] = theta[i];
    return v;
  }

  bool in_support(std::span<const double> theta) const {
    if (theta.size() != free.size()) return false;
    for (std::size_t i = 0; i < free.size(); ++i) {
      if (!free[i].prior.in_support(theta[i])) return false;
    }
    return true;
  }
};

/// Prior list in calibration-vector order:
/// (beta, c1, c2, K, m, s_thr, [alpha_s], n_d14, c_n, [sigma2_d14, sigma2_d5]).
inline std::vector<FreeParameter> default_priors(ModelId model, bool precalibration) {
  if (model == ModelId::m_opt) throw std::invalid_argument("default_priors: m_opt is not calibrated directly");
  using MP = MarginalPrior;
  std::vector<FreeParameter> out = {
      {Param::beta, MP::uniform(0.0, 1.0)},
      {Param::c1, MP::triangular(0.0, 0.5, 1.0)},
      {Param::c2, MP::triangular(0.0, 0.5, 1.0)},
      {Param::capacity, MP::uniform(1.0, 3.0)},
      {Param::shape_m, MP::uniform(1.0, 12.0)},
      {Param::s_thr, MP::triangular(0.0, 0.0, 1.0)},
  };
  if (model == ModelId::m_eta) out.push_back({Param::alpha_s, MP::uniform(0.0, 12.0)});
  out.push_back({Param::n_d14, MP::uniform(0.0, 0.5)});
  out.push_back({Param::c_n, MP::triangular(0.0, 1.0, 1.0)});
  if (precalibration) {
    out.push_back({Param::sigma2_d14, MP::triangular(0.0, 0.0, 0.5)});
    out.push_back({Param::sigma2_d5, MP::triangular(0.0, 0.0, 0.5)});
  }
  return out;
}

/// Placeholder for components that the model does not use; keeps ModelParams valid.
inline constexpr double kUnusedAlpha = 1.0;

/// Layout with default priors. Outside precalibration mode the noise variances are fixed to `sigma2`.
inline CalibrationLayout default_layout(ModelId model, bool precalibration, std::pair<double, double> sigma2 = {0.0355, 0.2410}) {
  CalibrationLayout layout;
  layout.model = model;
  layout.free = default_priors(model, precalibration);
  layout.fixed.fill(0.0);
  layout.fixed[static_cast<std::size_t>(Param::alpha_s)] = kUnusedAlpha;
  layout.fixed[static_cast<std::size_t>(Param::sigma2_d14)] = sigma2.first;
  layout.fixed[static_cast<std::size_t>(Param::sigma2_d5)] = sigma2.second;
  return layout;
}

/// Maps calibration coordinates to model space: lambda = c1 beta, lambda_st = (c1/c2) beta,
/// n_D5 = c_n n_D1:4.
inline Realization realize(const ParamValues& v) {
  auto at = [&](Param p) { return v[static_cast<std::size_t>(p)]; };
  Realization r;
  const double beta = at(Param::beta);
  const double c1 = at(Param::c1);
  const double c2 = at(Param::c2);
  r.params.beta = beta;
  r.params.lambda = c1 * beta;
  r.params.lambda_st = c1 / c2 * beta;
  r.params.capacity = at(Param::capacity);
  r.params.shape_m = at(Param::shape_m);
  r.params.s_thr = at(Param::s_thr);
  r.params.alpha_s = at(Param::alpha_s);
  r.d14.map.n_scale = at(Param::n_d14);
  r.d5.map.n_scale = at(Param::c_n) * at(Param::n_d14);
  r.d14.noise.sigma_sq = at(Param::sigma2_d14);
  r.d5.noise.sigma_sq = at(Param::sigma2_d5);
  return r;
}

inline Realization to_model_params(const CalibrationLayout& layout, std::span<const double> theta) {
  if (!layout.in_support(theta)) throw DomainError("to_model_params: calibration vector outside prior support");
  return realize(layout.expand(theta));
}

/// Inverse of `realize`: model-space quantities back to calibration coordinates.
inline ParamValues calibration_coordinates(const ModelParams& p, double n_d14, double n_d5, double sigma2_d14, double sigma2_d5) {
  ParamValues v{};
  auto set = [&](Param k, double x) { v[static_cast<std::size_t>(k)] = x; };
  set(Param::beta, p.beta);
  set(Param::c1, p.lambda / p.beta);
  set(Param::c2, p.lambda / p.lambda_st);
  set(Param::capacity, p.capacity);
  set(Param::shape_m, p.shape_m);
  set(Param::s_thr, p.s_thr);
  set(Param::alpha_s, p.alpha_s);
  set(Param::n_d14, n_d14);
  set(Param::c_n, n_d5 / n_d14);
  set(Param::sigma2_d14, sigma2_d14);
  set(Param::sigma2_d5, sigma2_d5);
  return v;
}

inline double prior_log_density(std::span<const MarginalPrior> priors, std::span<const double> theta) {
  if (theta.size() != priors.size()) throw DomainError("prior_log_density: dimension mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < priors.size(); ++i) {
    const double l = priors[i].log_density(theta[i]);
    if (l == -std::numeric_limits<double>::infinity()) return l;
    sum += l;
  }
  return sum;
}

/// `count` i.i.d. draws, row-major (count x priors.size()).
template <class Rng>
std::vector<double> sample_prior(std::span<const MarginalPrior> priors, Rng& rng, std::size_t count) {
  std::vector<double> out;
  out.reserve(count * priors.size());
  for (std::size_t p = 0; p < count; ++p) {
    for (const auto& prior : priors) out.push_back(prior.sample(rng));
  }
  return out;
}

}  // namespace tumorcal
