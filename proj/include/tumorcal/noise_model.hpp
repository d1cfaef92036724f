#pragma once

// Multiplicative Gamma observation model I = n V eps, eps ~ Gamma(1/sigma^2, rate 1/sigma^2).

#include <cmath>
#include <limits>
#include <random>
#include <span>
#include <utility>

#include "tumorcal/error.hpp"
#include "tumorcal/special_functions.hpp"

namespace tumorcal {

/// Predicted intensities at or below this value have likelihood zero.
inline constexpr double kUnderflowFloor = 1e-300;

struct NoiseModel {
  double sigma_sq = 0.05;

  void validate() const {
    if (!(sigma_sq > 0.0 && sigma_sq < 1.0)) throw DomainError("noise variance sigma^2 must lie in (0,1)");
  }
  /// Shape and rate of the Gamma distribution of eps.
  double shape() const { return 1.0 / sigma_sq; }
};

struct ObservationMap {
  double n_scale = 0.25;

  void validate() const {
    if (!(n_scale > 0.0 && n_scale < 1.0)) throw DomainError("proportionality constant n must lie in (0,1)");
  }
};

template <class Rng>
double sample_noise(const NoiseModel& noise, Rng& rng) {
  const double a = noise.shape();
  std::gamma_distribution<double> dist(a, 1.0 / a);
  return dist(rng);
}

/// Fully normalized log density of an intensity given predicted density V:
/// log f_eps(I / G) - log G with G = n V.
inline double log_likelihood_point(double intensity, double predicted_v, const ObservationMap& map, const NoiseModel& noise) {
  if (!(intensity > 0.0)) throw DomainError("log_likelihood_point: intensity must be positive");
  const double g = map.n_scale * predicted_v;
  if (!(g > kUnderflowFloor)) return -std::numeric_limits<double>::infinity();
  const double a = noise.shape();
  const double ratio = intensity / g;
  return special::gamma_log_pdf(ratio, a, a) - std::log(g);
}

inline double log_likelihood_batch(std::span<const double> intensities, std::span<const double> predicted_v,
                                   const ObservationMap& map, const NoiseModel& noise) {
  if (intensities.size() != predicted_v.size()) throw DomainError("log_likelihood_batch: size mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < intensities.size(); ++i) sum += log_likelihood_point(intensities[i], predicted_v[i], map, noise);
  return sum;
}

/// q-quantile of eps ~ Gamma(a, a).
inline double noise_quantile(const NoiseModel& noise, double q) {
  const double a = noise.shape();
  return special::gamma_p_inverse(a, q) / a;
}

struct Interval {
  double lower = 0.0;
  double upper = 0.0;

  bool contains(double x) const { return x >= lower && x <= upper; }
};

/// Central `coverage` range of intensities around n V; [n V P_5%, n V P_95%] by default.
inline Interval uncertainty_range(double predicted_v, const ObservationMap& map, const NoiseModel& noise, double coverage = 0.90) {
  if (!(predicted_v >= 0.0)) throw DomainError("uncertainty_range: predicted density must be non-negative");
  if (!(coverage > 0.0 && coverage < 1.0)) throw DomainError("uncertainty_range: coverage must lie in (0,1)");
  const double tail = 0.5 * (1.0 - coverage);
  const double g = map.n_scale * predicted_v;
  return {g * noise_quantile(noise, tail), g * noise_quantile(noise, 1.0 - tail)};
}

}  // namespace tumorcal
