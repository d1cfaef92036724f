#pragma once

#include <algorithm>
#include <cmath>
#include <limits>

#include "tumorcal/error.hpp"

namespace tumorcal::special {

namespace detail {

inline constexpr int kMaxIterations = 1000;
inline constexpr double kEps = std::numeric_limits<double>::epsilon();
inline constexpr double kTiny = 1e-300;

// x^a e^{-x} / Gamma(a), evaluated in log space.
inline double gamma_prefactor(double a, double x) {
  return std::exp(a * std::log(x) - x - std::lgamma(a));
}

inline double lower_series(double a, double x) {
  double ap = a;
  double term = 1.0 / a;
  double sum = term;
  for (int i = 0; i < kMaxIterations; ++i) {
    ap += 1.0;
    term *= x / ap;
    sum += term;
    if (std::abs(term) < std::abs(sum) * kEps) break;
  }
  return sum * gamma_prefactor(a, x);
}

// Modified Lentz evaluation of the continued fraction for Q(a, x).
inline double upper_fraction(double a, double x) {
  double b = x + 1.0 - a;
  double c = 1.0 / kTiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= kMaxIterations; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < kTiny) d = kTiny;
    c = b + an / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < kEps) break;
  }
  return gamma_prefactor(a, x) * h;
}

}  // namespace detail

/// Regularized lower incomplete gamma function P(a, x).
inline double gamma_p(double a, double x) {
  if (!(a > 0.0)) throw DomainError("gamma_p: shape must be positive");
  if (x < 0.0) throw DomainError("gamma_p: argument must be non-negative");
  if (x == 0.0) return 0.0;
  if (x < a + 1.0) return detail::lower_series(a, x);
  return 1.0 - detail::upper_fraction(a, x);
}

/// Regularized upper incomplete gamma function Q(a, x) = 1 - P(a, x).
inline double gamma_q(double a, double x) {
  if (!(a > 0.0)) throw DomainError("gamma_q: shape must be positive");
  if (x < 0.0) throw DomainError("gamma_q: argument must be non-negative");
  if (x == 0.0) return 1.0;
  if (x < a + 1.0) return 1.0 - detail::lower_series(a, x);
  return detail::upper_fraction(a, x);
}

/// Inverse of P(a, .): the x with P(a, x) = p. Newton iteration safeguarded by a bisection bracket.
inline double gamma_p_inverse(double a, double p) {
  if (!(a > 0.0)) throw DomainError("gamma_p_inverse: shape must be positive");
  if (!(p >= 0.0 && p <= 1.0)) throw DomainError("gamma_p_inverse: probability outside [0,1]");
  if (p == 0.0) return 0.0;
  if (p == 1.0) return std::numeric_limits<double>::infinity();

  double lo = 0.0;
  double hi = std::max(1.0, a);
  while (gamma_p(a, hi) < p) {
    lo = hi;
    hi *= 2.0;
  }

  double x = std::clamp(a, lo, hi);
  if (x <= lo || x >= hi) x = 0.5 * (lo + hi);
  for (int i = 0; i < 200; ++i) {
    const double f = gamma_p(a, x) - p;
    if (f == 0.0) return x;
    if (f < 0.0) {
      lo = x;
    } else {
      hi = x;
    }
    const double density = std::exp((a - 1.0) * std::log(x) - x - std::lgamma(a));
    double next = density > 0.0 ? x - f / density : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - x) <= 4.0 * detail::kEps * std::abs(next)) return next;
    x = next;
  }
  return x;
}

/// Log density of Gamma(shape, rate) at x > 0, fully normalized.
inline double gamma_log_pdf(double x, double shape, double rate) {
  if (!(x > 0.0)) return -std::numeric_limits<double>::infinity();
  return shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * std::log(x) - rate * x;
}

}  // namespace tumorcal::special
