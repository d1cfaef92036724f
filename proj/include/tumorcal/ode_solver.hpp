#pragma once

// Explicit Dormand-Prince 5(4) integrator with adaptive step size and the
// fourth-order continuous extension for output at arbitrary times.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "tumorcal/error.hpp"

namespace tumorcal {

struct SolverConfig {
  double rel_tol = 1e-8;
  double abs_tol = 1e-10;
  double max_step = std::numeric_limits<double>::infinity();
  std::size_t max_steps = 1'000'000;
};

template <std::size_t N>
using OdeState = std::array<double, N>;

namespace detail::dopri {

inline constexpr double c2 = 1.0 / 5.0, c3 = 3.0 / 10.0, c4 = 4.0 / 5.0, c5 = 8.0 / 9.0;
inline constexpr double a21 = 1.0 / 5.0;
inline constexpr double a31 = 3.0 / 40.0, a32 = 9.0 / 40.0;
inline constexpr double a41 = 44.0 / 45.0, a42 = -56.0 / 15.0, a43 = 32.0 / 9.0;
inline constexpr double a51 = 19372.0 / 6561.0, a52 = -25360.0 / 2187.0, a53 = 64448.0 / 6561.0,
                        a54 = -212.0 / 729.0;
inline constexpr double a61 = 9017.0 / 3168.0, a62 = -355.0 / 33.0, a63 = 46732.0 / 5247.0,
                        a64 = 49.0 / 176.0, a65 = -5103.0 / 18656.0;
inline constexpr double a71 = 35.0 / 384.0, a73 = 500.0 / 1113.0, a74 = 125.0 / 192.0,
                        a75 = -2187.0 / 6784.0, a76 = 11.0 / 84.0;
inline constexpr double e1 = 71.0 / 57600.0, e3 = -71.0 / 16695.0, e4 = 71.0 / 1920.0,
                        e5 = -17253.0 / 339200.0, e6 = 22.0 / 525.0, e7 = -1.0 / 40.0;
inline constexpr double d1 = -12715105075.0 / 11282082432.0, d3 = 87487479700.0 / 32700410799.0,
                        d4 = -10690763975.0 / 1880347072.0, d5 = 701980252875.0 / 199316789632.0,
                        d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;

}  // namespace detail::dopri

/// Integrates y' = rhs(t, y) from (t0, y0) and returns the state at each entry of `times`.
///
/// `times` must be non-decreasing and not earlier than t0. Output points falling inside an accepted
/// step are evaluated with the dense-output polynomial, so the step sequence does not depend on the
/// requested grid. `rhs` is called as `rhs(t, y, dydt)` with `const OdeState<N>&` / `OdeState<N>&`.
template <std::size_t N, class Rhs>
std::vector<OdeState<N>> integrate_dense(Rhs&& rhs, double t0, const OdeState<N>& y0,
                                         std::span<const double> times, const SolverConfig& cfg = {}) {
  namespace dp = detail::dopri;
  std::vector<OdeState<N>> out;
  out.reserve(times.size());
  if (times.empty()) return out;
  if (times.front() < t0) throw DomainError("integrate_dense: output time precedes initial time");
  for (std::size_t i = 1; i < times.size(); ++i) {
    if (times[i] < times[i - 1]) throw DomainError("integrate_dense: output times must be sorted");
  }
  if (!(cfg.rel_tol > 0.0) || !(cfg.abs_tol > 0.0)) throw DomainError("integrate_dense: tolerances must be positive");

  const double t_end = times.back();
  std::size_t next_out = 0;
  while (next_out < times.size() && times[next_out] == t0) {
    out.push_back(y0);
    ++next_out;
  }
  if (next_out == times.size()) return out;

  auto axpy = [](OdeState<N>& r, const OdeState<N>& y, double h, std::initializer_list<std::pair<double, const OdeState<N>*>> terms) {
    for (std::size_t i = 0; i < N; ++i) {
      double s = 0.0;
      for (const auto& [c, k] : terms) s += c * (*k)[i];
      r[i] = y[i] + h * s;
    }
  };

  auto error_norm = [&](const OdeState<N>& a, const OdeState<N>& b, const OdeState<N>& err) {
    double sum = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
      const double sk = cfg.abs_tol + cfg.rel_tol * std::max(std::abs(a[i]), std::abs(b[i]));
      const double r = err[i] / sk;
      sum += r * r;
    }
    return std::sqrt(sum / static_cast<double>(N));
  };

  double t = t0;
  OdeState<N> y = y0;
  OdeState<N> k1{}, k2{}, k3{}, k4{}, k5{}, k6{}, k7{}, ytmp{}, ynew{}, err{};
  rhs(t, y, k1);

  // Initial step guess (Hairer, Norsett & Wanner, II.4).
  double h;
  {
    double d0 = 0.0, d1n = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
      const double sk = cfg.abs_tol + cfg.rel_tol * std::abs(y[i]);
      d0 += (y[i] / sk) * (y[i] / sk);
      d1n += (k1[i] / sk) * (k1[i] / sk);
    }
    d0 = std::sqrt(d0 / N);
    d1n = std::sqrt(d1n / N);
    double h0 = (d0 < 1e-5 || d1n < 1e-5) ? 1e-6 : 0.01 * d0 / d1n;
    h0 = std::min({h0, t_end - t0, cfg.max_step});
    for (std::size_t i = 0; i < N; ++i) ytmp[i] = y[i] + h0 * k1[i];
    rhs(t + h0, ytmp, k2);
    double d2 = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
      const double sk = cfg.abs_tol + cfg.rel_tol * std::abs(y[i]);
      d2 += ((k2[i] - k1[i]) / sk) * ((k2[i] - k1[i]) / sk);
    }
    d2 = std::sqrt(d2 / N) / h0;
    const double dm = std::max(d1n, d2);
    const double h1 = dm <= 1e-15 ? std::max(1e-6, h0 * 1e-3) : std::pow(0.01 / dm, 0.2);
    h = std::min({100.0 * h0, h1, t_end - t0, cfg.max_step});
  }

  std::size_t steps = 0;
  bool rejected_last = false;
  while (next_out < times.size()) {
    if (steps >= cfg.max_steps) throw SolverError("integrate_dense: maximum number of steps exceeded", t, h, steps);
    if (!(h > 0.0) || t + h == t) throw SolverError("integrate_dense: step size underflow", t, h, steps);
    ++steps;
    const bool last = t + h >= t_end;
    if (last) h = t_end - t;

    axpy(ytmp, y, h, {{dp::a21, &k1}});
    rhs(t + dp::c2 * h, ytmp, k2);
    axpy(ytmp, y, h, {{dp::a31, &k1}, {dp::a32, &k2}});
    rhs(t + dp::c3 * h, ytmp, k3);
    axpy(ytmp, y, h, {{dp::a41, &k1}, {dp::a42, &k2}, {dp::a43, &k3}});
    rhs(t + dp::c4 * h, ytmp, k4);
    axpy(ytmp, y, h, {{dp::a51, &k1}, {dp::a52, &k2}, {dp::a53, &k3}, {dp::a54, &k4}});
    rhs(t + dp::c5 * h, ytmp, k5);
    axpy(ytmp, y, h, {{dp::a61, &k1}, {dp::a62, &k2}, {dp::a63, &k3}, {dp::a64, &k4}, {dp::a65, &k5}});
    const double t_new = last ? t_end : t + h;
    rhs(t_new, ytmp, k6);
    axpy(ynew, y, h, {{dp::a71, &k1}, {dp::a73, &k3}, {dp::a74, &k4}, {dp::a75, &k5}, {dp::a76, &k6}});
    rhs(t_new, ynew, k7);
    for (std::size_t i = 0; i < N; ++i) {
      err[i] = h * (dp::e1 * k1[i] + dp::e3 * k3[i] + dp::e4 * k4[i] + dp::e5 * k5[i] + dp::e6 * k6[i] + dp::e7 * k7[i]);
    }
    const double en = error_norm(y, ynew, err);
    if (!std::isfinite(en)) {
      h *= 0.1;
      rejected_last = true;
      continue;
    }

    double factor = en == 0.0 ? 10.0 : 0.9 * std::pow(en, -0.2);
    factor = std::clamp(factor, 0.2, 10.0);
    if (en > 1.0) {
      h *= std::max(0.2, factor);
      rejected_last = true;
      continue;
    }

    // Accepted: emit every requested time inside (t, t_new].
    while (next_out < times.size() && times[next_out] <= t_new) {
      const double tq = times[next_out];
      if (tq == t_new) {
        out.push_back(ynew);
      } else {
        const double theta = (tq - t) / h;
        const double theta1 = 1.0 - theta;
        OdeState<N> yq{};
        for (std::size_t i = 0; i < N; ++i) {
          const double ydiff = ynew[i] - y[i];
          const double bspl = h * k1[i] - ydiff;
          const double r4 = ydiff - h * k7[i] - bspl;
          const double r5 = h * (dp::d1 * k1[i] + dp::d3 * k3[i] + dp::d4 * k4[i] + dp::d5 * k5[i] +
                                 dp::d6 * k6[i] + dp::d7 * k7[i]);
          yq[i] = y[i] + theta * (ydiff + theta1 * (bspl + theta * (r4 + theta1 * r5)));
        }
        out.push_back(yq);
      }
      ++next_out;
    }

    t = t_new;
    y = ynew;
    k1 = k7;
    if (rejected_last) factor = std::min(factor, 1.0);
    rejected_last = false;
    h = std::min(h * factor, cfg.max_step);
  }
  return out;
}

}  // namespace tumorcal
