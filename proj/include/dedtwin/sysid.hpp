#pragma once

// Parameter -> signature dynamics: first-order-plus-delay, second-order,
// ARX and Hammerstein-Wiener structures, plus the multi-layer composite
// (laser-power transfer function + static layer gain).
//
// Conventions shared by every continuous-time structure here:
//  * discretization is exact zero-order hold on the series' own step;
//  * transport delay is an integer number of samples, round(td / dt), applied
//    as a shift of the undelayed response, padded with its initial value;
//  * fitting starts the model at the equilibrium of the first input sample.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "dedtwin/errors.hpp"
#include "dedtwin/optimize.hpp"
#include "dedtwin/signals.hpp"

namespace dedtwin::sysid {

using signals::FitMetrics;
using signals::TimeSeries;

struct FirstOrderDelayModel {
  double k_gain = 1.0;  // output unit per input unit
  double tw = 1.0;      // s
  double td = 0.0;      // s

  void validate() const {
    if (!std::isfinite(k_gain)) throw InvalidArgument("FirstOrderDelayModel: gain must be finite");
    if (!(tw > 0.0) || !std::isfinite(tw)) throw InvalidArgument("FirstOrderDelayModel: tw must be > 0");
    if (!(td >= 0.0) || !std::isfinite(td)) throw InvalidArgument("FirstOrderDelayModel: td must be >= 0");
  }
};

/// G(s) = (b1 s + b0) / (s^2 + a1 s + a2) * exp(-td s)
struct SecondOrderDelayModel {
  double b0 = 1.0, b1 = 0.0;
  double a1 = 2.0, a2 = 1.0;
  double td = 0.0;

  bool stable() const { return a1 > 0.0 && a2 > 0.0; }
  double dc_gain() const { return b0 / a2; }
};

/// y[k] + a1 y[k-1] + ... + a_na y[k-na] = b1 u[k-nk] + ... + b_nb u[k-nk-nb+1]
struct ArxModel {
  int na = 1, nb = 1, nk = 1;
  std::vector<double> a, b;
};

/// Piecewise-linear static map, extrapolated linearly past either end.
struct PiecewiseLinear {
  std::vector<double> breakpoints;  // strictly increasing
  std::vector<double> values;

  static PiecewiseLinear identity(double lo, double hi, std::size_t count) {
    if (count < 2) throw InvalidArgument("PiecewiseLinear: need at least two breakpoints");
    if (!(hi > lo)) hi = lo + 1.0;
    PiecewiseLinear p;
    for (std::size_t i = 0; i < count; ++i) {
      const double x = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1);
      p.breakpoints.push_back(x);
      p.values.push_back(x);
    }
    return p;
  }

  void validate() const {
    if (breakpoints.size() < 2 || breakpoints.size() != values.size())
      throw InvalidArgument("PiecewiseLinear: need >= 2 breakpoints with matching values");
    for (std::size_t i = 1; i < breakpoints.size(); ++i)
      if (!(breakpoints[i] > breakpoints[i - 1]))
        throw InvalidArgument("PiecewiseLinear: breakpoints must be strictly increasing");
  }

  std::size_t segment(double x) const {
    const auto it = std::upper_bound(breakpoints.begin() + 1, breakpoints.end() - 1, x);
    return static_cast<std::size_t>(it - breakpoints.begin()) - 1;
  }

  double operator()(double x) const {
    const std::size_t i = segment(x);
    const double t = (x - breakpoints[i]) / (breakpoints[i + 1] - breakpoints[i]);
    return values[i] + t * (values[i + 1] - values[i]);
  }

  // Hat-function weights: operator()(x) == sum_j basis(x)[j] * values[j].
  std::vector<double> basis(double x) const {
    std::vector<double> w(breakpoints.size(), 0.0);
    const std::size_t i = segment(x);
    const double t = (x - breakpoints[i]) / (breakpoints[i + 1] - breakpoints[i]);
    w[i] = 1.0 - t;
    w[i + 1] = t;
    return w;
  }

  /// Inverse of a non-decreasing map; flat stretches resolve to their midpoint.
  double inverse(double y) const {
    const std::size_t n = values.size();
    auto extrapolate = [&](std::size_t i) {
      const double dv = values[i + 1] - values[i];
      if (dv <= 0.0) return y < values[i] ? breakpoints[i] : breakpoints[i + 1];
      return breakpoints[i] + (y - values[i]) / dv * (breakpoints[i + 1] - breakpoints[i]);
    };
    if (y <= values.front()) return extrapolate(0);
    if (y >= values.back()) return extrapolate(n - 2);
    for (std::size_t i = 0; i + 1 < n; ++i) {
      if (y >= values[i] && y <= values[i + 1]) {
        const double dv = values[i + 1] - values[i];
        if (dv <= 0.0) return 0.5 * (breakpoints[i] + breakpoints[i + 1]);
        return breakpoints[i] + (y - values[i]) / dv * (breakpoints[i + 1] - breakpoints[i]);
      }
    }
    return breakpoints.back();
  }
};

struct HammersteinWienerModel {
  PiecewiseLinear input_nl;
  FirstOrderDelayModel linear_block;
  PiecewiseLinear output_nl;
};

/// MPW = G_LP(s) LP + g_n n (+ offset). The offset restores absolute units when
/// the model was identified on mean-removed signals; it is 0 for deviation data.
struct CompositeF1 {
  FirstOrderDelayModel g_lp;
  double g_n = 0.0;  // mm per layer
  double offset = 0.0;
};

template <class Model>
struct Fit {
  Model model;
  FitMetrics metrics;
};

inline std::size_t delay_samples(double td, double dt) {
  return static_cast<std::size_t>(std::llround(td / dt));
}

namespace detail {

inline void require_same_grid(const TimeSeries& u, const TimeSeries& y, const char* who) {
  if (u.size() != y.size() || u.dt() != y.dt())
    throw InvalidArgument(std::string(who) + ": input and output must be synchronized");
}

inline void require_varying(const TimeSeries& u, const char* who) {
  const auto [lo, hi] = std::minmax_element(u.values().begin(), u.values().end());
  if (!(*hi > *lo)) throw Unidentifiable(std::string(who) + ": input is constant, model is unidentifiable");
}

inline std::vector<double> shift(const std::vector<double>& z, std::size_t d, double pad) {
  std::vector<double> y(z.size(), pad);
  for (std::size_t k = d; k < z.size(); ++k) y[k] = z[k - d];
  return y;
}

inline double sse(const std::vector<double>& a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  return s;
}

inline double sse(const std::vector<double>& a, const std::vector<double>& b) {
  return sse(a, std::span<const double>(b));
}

// Undelayed unit-gain ZOH response, started at equilibrium with u[0].
inline std::vector<double> unit_first_order(std::span<const double> u, double tw, double dt) {
  const double a = std::exp(-dt / tw);
  std::vector<double> z(u.size());
  z[0] = u[0];
  for (std::size_t k = 0; k + 1 < u.size(); ++k) z[k + 1] = a * z[k] + (1.0 - a) * u[k];
  return z;
}

inline std::size_t default_max_delay(std::size_t n) {
  return std::min<std::size_t>((n - 1) / 4, 200);
}

}  // namespace detail

/// Exact ZOH simulation of K e^{-td s} / (1 + tw s) starting from y0.
inline TimeSeries simulate_first_order(const FirstOrderDelayModel& m, const TimeSeries& u, double y0) {
  m.validate();
  const double a = std::exp(-u.dt() / m.tw);
  const double b = (1.0 - a) * m.k_gain;
  std::vector<double> z(u.size());
  z[0] = y0;
  for (std::size_t k = 0; k + 1 < u.size(); ++k) z[k + 1] = a * z[k] + b * u[k];
  return u.with_values(detail::shift(z, delay_samples(m.td, u.dt()), y0));
}

/// Simulation started at rest with the first input sample (y0 = K u[0]).
inline TimeSeries simulate_from_equilibrium(const FirstOrderDelayModel& m, const TimeSeries& u) {
  return simulate_first_order(m, u, m.k_gain * u[0]);
}

inline TimeSeries simulate_composite_f1(const CompositeF1& m, const TimeSeries& lp, const TimeSeries& layer) {
  if (!lp.same_grid(layer))
    throw InvalidArgument("simulate_composite_f1: laser power and layer series must share a grid");
  auto y = simulate_from_equilibrium(m.g_lp, lp).values();
  for (std::size_t k = 0; k < y.size(); ++k) y[k] += m.g_n * layer[k] + m.offset;
  return lp.with_values(std::move(y));
}

struct FirstOrderFitOptions {
  std::optional<std::size_t> min_delay_samples;
  std::optional<std::size_t> max_delay_samples;
};

/// Rough (K, tw, td) from the largest input step: steady-state ratio and the
/// 63.2 % crossing of the response after it.
inline FirstOrderDelayModel step_response_heuristic(const TimeSeries& u, const TimeSeries& y) {
  const std::size_t n = u.size();
  const double dt = u.dt();
  std::size_t step = 1;
  double best = -1.0;
  for (std::size_t k = 1; k < n; ++k)
    if (std::abs(u[k] - u[k - 1]) > best) {
      best = std::abs(u[k] - u[k - 1]);
      step = k;
    }
  std::size_t next = n;
  for (std::size_t k = step + 1; k < n; ++k)
    if (std::abs(u[k] - u[k - 1]) > 0.5 * best) {
      next = k;
      break;
    }
  auto avg = [&](std::size_t lo, std::size_t hi) {
    double s = 0.0;
    for (std::size_t k = lo; k < hi; ++k) s += y[k];
    return s / static_cast<double>(std::max<std::size_t>(1, hi - lo));
  };
  const std::size_t pre = std::max<std::size_t>(1, std::min<std::size_t>(step, 10));
  const std::size_t span = next - step;
  const std::size_t tail = std::max<std::size_t>(1, span / 5);
  const double y_before = avg(step - pre, step);
  const double y_after = avg(next - tail, next);
  const double du = u[step] - u[step - 1];
  FirstOrderDelayModel m;
  m.k_gain = du != 0.0 ? (y_after - y_before) / du : 1.0;
  m.tw = 10.0 * dt;
  m.td = 0.0;
  const double dy = y_after - y_before;
  if (dy == 0.0) return m;
  std::optional<std::size_t> t10, t63;
  for (std::size_t k = step; k < next; ++k) {
    const double frac = (y[k] - y_before) / dy;
    if (!t10 && frac >= 0.1) t10 = k;
    if (!t63 && frac >= 0.632) {
      t63 = k;
      break;
    }
  }
  if (t10 && t63) {
    // 10 % of a first-order rise happens 0.105 tw after the dead time
    const double t63s = static_cast<double>(*t63 - step) * dt;
    const double t10s = static_cast<double>(*t10 - step) * dt;
    const double tw = std::max(dt, (t63s - t10s) / (1.0 - 0.105));
    m.tw = tw;
    m.td = std::max(0.0, t63s - tw);
  }
  return m;
}

/// Least-squares first-order-plus-delay fit on the free-run simulation error.
/// Every integer delay in the search window gets its own simplex refinement
/// of (K, ln tw) from the step-response heuristic.
inline Fit<FirstOrderDelayModel> fit_first_order(const TimeSeries& u, const TimeSeries& y,
                                                 const FirstOrderFitOptions& opt = {}) {
  detail::require_same_grid(u, y, "fit_first_order");
  detail::require_varying(u, "fit_first_order");
  const std::size_t n = u.size();
  if (n < 4) throw InvalidArgument("fit_first_order: need at least four samples");
  const double dt = u.dt();
  const auto guess = step_response_heuristic(u, y);
  const std::size_t dmax = std::min(opt.max_delay_samples.value_or(detail::default_max_delay(n)), n - 2);
  const std::size_t dmin = std::min(opt.min_delay_samples.value_or(0), dmax);
  const auto yv = y.view();

  FirstOrderDelayModel best_model = guess;
  double best_sse = std::numeric_limits<double>::infinity();
  for (std::size_t d = dmin; d <= dmax; ++d) {
    auto objective = [&](const std::vector<double>& p) {
      const double tw = std::exp(p[1]);
      if (!(tw > 1e-6 * dt) || !(tw < 1e6 * dt * static_cast<double>(n))) return std::numeric_limits<double>::infinity();
      const auto z = detail::unit_first_order(u.view(), tw, dt);
      double s = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        const double yk = p[0] * (k < d ? z[0] : z[k - d]);
        s += (yk - yv[k]) * (yk - yv[k]);
      }
      return s;
    };
    // start gain: projection of y onto the heuristic unit response
    const auto z0 = detail::shift(detail::unit_first_order(u.view(), guess.tw, dt), d, u[0]);
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      num += z0[k] * yv[k];
      den += z0[k] * z0[k];
    }
    const double k0 = den > 0.0 ? num / den : guess.k_gain;
    const auto r = optimize::nelder_mead_restarted(objective, {k0, std::log(guess.tw)});
    if (r.value < best_sse) {
      best_sse = r.value;
      best_model = {r.x[0], std::exp(r.x[1]), static_cast<double>(d) * dt};
    }
  }
  const auto fitted = simulate_from_equilibrium(best_model, u);
  return {best_model, signals::fit_metrics(fitted, y)};
}

// ---- second order -----------------------------------------------------------

namespace detail {

struct Zoh2 {
  Eigen::Matrix2d ad;
  Eigen::Vector2d bd;
};

inline Zoh2 discretize_second_order(double a1, double a2, double dt) {
  Eigen::Matrix3d m = Eigen::Matrix3d::Zero();
  m(0, 1) = 1.0;
  m(1, 0) = -a2;
  m(1, 1) = -a1;
  m(1, 2) = 1.0;
  const Eigen::Matrix3d e = (m * dt).exp();
  return {e.topLeftCorner<2, 2>(), e.topRightCorner<2, 1>()};
}

// State trajectory of 1/(s^2 + a1 s + a2) in controllable form from the
// equilibrium of u[0]; output = b0 x1 + b1 x2.
inline std::pair<std::vector<double>, std::vector<double>> second_order_states(std::span<const double> u,
                                                                               double a1, double a2, double dt) {
  const auto z = discretize_second_order(a1, a2, dt);
  std::vector<double> x1(u.size()), x2(u.size());
  Eigen::Vector2d x(u[0] / a2, 0.0);
  for (std::size_t k = 0; k < u.size(); ++k) {
    x1[k] = x(0);
    x2[k] = x(1);
    x = z.ad * x + z.bd * u[k];
  }
  return {std::move(x1), std::move(x2)};
}

}  // namespace detail

inline TimeSeries simulate_second_order(const SecondOrderDelayModel& m, const TimeSeries& u) {
  if (!(m.a2 != 0.0)) throw InvalidArgument("simulate_second_order: a2 must be nonzero");
  const auto [x1, x2] = detail::second_order_states(u.view(), m.a1, m.a2, u.dt());
  std::vector<double> z(u.size());
  for (std::size_t k = 0; k < z.size(); ++k) z[k] = m.b0 * x1[k] + m.b1 * x2[k];
  return u.with_values(detail::shift(z, delay_samples(m.td, u.dt()), z[0]));
}

/// Second-order fit: simplex over the log denominator coefficients, with the
/// numerator solved by linear least squares at every evaluation. One start
/// reproduces the first-order optimum exactly (pole-zero cancellation), so the
/// result is never worse than fit_first_order on the same data.
inline Fit<SecondOrderDelayModel> fit_second_order(const TimeSeries& u, const TimeSeries& y,
                                                   const FirstOrderFitOptions& opt = {}) {
  detail::require_same_grid(u, y, "fit_second_order");
  detail::require_varying(u, "fit_second_order");
  const std::size_t n = u.size();
  const double dt = u.dt();
  const auto first = fit_first_order(u, y, opt);
  const auto yv = y.view();
  const std::size_t dmax = std::min(opt.max_delay_samples.value_or(detail::default_max_delay(n)), n - 2);
  const std::size_t dmin = std::min(opt.min_delay_samples.value_or(0), dmax);

  struct Candidate {
    double a1, a2, b0, b1, sse;
  };
  auto solve_numerator = [&](double a1, double a2, std::size_t d) -> Candidate {
    const auto [x1, x2] = detail::second_order_states(u.view(), a1, a2, dt);
    auto at = [&](const std::vector<double>& x, std::size_t k) { return k < d ? x[0] : x[k - d]; };
    Eigen::Matrix2d ata = Eigen::Matrix2d::Zero();
    Eigen::Vector2d aty = Eigen::Vector2d::Zero();
    for (std::size_t k = 0; k < n; ++k) {
      const Eigen::Vector2d r(at(x1, k), at(x2, k));
      ata += r * r.transpose();
      aty += r * yv[k];
    }
    const Eigen::Vector2d b = ata.completeOrthogonalDecomposition().solve(aty);
    double s = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const double e = b(0) * at(x1, k) + b(1) * at(x2, k) - yv[k];
      s += e * e;
    }
    return {a1, a2, b(0), b(1), std::isfinite(s) ? s : std::numeric_limits<double>::infinity()};
  };

  const double p = 1.0 / first.model.tw;
  const std::vector<std::pair<double, double>> starts = {
      {p + 5.0 * p, 5.0 * p * p},            // cancellation start
      {2.0 * 0.7 * p, p * p},                // critically-ish damped
      {2.0 * 0.3 * 2.0 * p, 4.0 * p * p},    // underdamped, faster
  };
  Candidate best{1.0, 1.0, 0.0, 0.0, std::numeric_limits<double>::infinity()};
  std::size_t best_d = 0;
  for (std::size_t d = dmin; d <= dmax; ++d) {
    auto objective = [&](const std::vector<double>& q) {
      const double a1 = std::exp(q[0]), a2 = std::exp(q[1]);
      if (!(a1 < 1e6 / dt) || !(a2 < 1e12 / (dt * dt)) || !(a2 > 0.0)) return std::numeric_limits<double>::infinity();
      return solve_numerator(a1, a2, d).sse;
    };
    std::vector<double> start;
    double start_val = std::numeric_limits<double>::infinity();
    for (auto [a1, a2] : starts) {
      const double v = objective({std::log(a1), std::log(a2)});
      if (v < start_val) {
        start_val = v;
        start = {std::log(a1), std::log(a2)};
      }
    }
    if (!std::isfinite(start_val)) continue;
    const auto r = optimize::nelder_mead_restarted(objective, start);
    if (r.value < best.sse) {
      best = solve_numerator(std::exp(r.x[0]), std::exp(r.x[1]), d);
      best_d = d;
    }
  }
  SecondOrderDelayModel m{best.b0, best.b1, best.a1, best.a2, static_cast<double>(best_d) * dt};
  const auto fitted = simulate_second_order(m, u);
  return {m, signals::fit_metrics(fitted, y)};
}

// ---- ARX --------------------------------------------------------------------

inline std::size_t arx_first_row(const ArxModel& m) {
  return static_cast<std::size_t>(std::max(m.na, m.nk + m.nb - 1));
}

/// Free-run simulation; the first rows reuse measured output as initial state.
inline TimeSeries simulate_arx(const ArxModel& m, const TimeSeries& u, const TimeSeries& y_init) {
  const std::size_t n = u.size();
  const std::size_t k0 = std::min(arx_first_row(m), n);
  std::vector<double> y(n, 0.0);
  for (std::size_t k = 0; k < k0; ++k) y[k] = y_init[k];
  for (std::size_t k = k0; k < n; ++k) {
    double v = 0.0;
    for (int i = 1; i <= m.na; ++i) v -= m.a[i - 1] * y[k - i];
    for (int j = 0; j < m.nb; ++j) v += m.b[j] * u[k - m.nk - j];
    y[k] = v;
  }
  return u.with_values(std::move(y));
}

/// Regressor matrix and target of the one-step-ahead ARX regression.
inline std::pair<Eigen::MatrixXd, Eigen::VectorXd> arx_regression(const TimeSeries& u, const TimeSeries& y,
                                                                  int na, int nb, int nk) {
  ArxModel shape{na, nb, nk, {}, {}};
  const std::size_t k0 = arx_first_row(shape);
  const std::size_t rows = u.size() - k0;
  Eigen::MatrixXd phi(rows, na + nb);
  Eigen::VectorXd target(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t k = k0 + r;
    for (int i = 1; i <= na; ++i) phi(r, i - 1) = -y[k - i];
    for (int j = 0; j < nb; ++j) phi(r, na + j) = u[k - nk - j];
    target(r) = y[k];
  }
  return {std::move(phi), std::move(target)};
}

/// One-step least squares (minimum-norm solution). Only a rank-deficient
/// input block makes the model unidentifiable; degenerate output lags (e.g.
/// y identically zero) resolve to zero a-coefficients.
inline Fit<ArxModel> fit_arx(const TimeSeries& u, const TimeSeries& y, int na, int nb, int nk) {
  detail::require_same_grid(u, y, "fit_arx");
  if (na < 1 || nb < 1 || nk < 0) throw InvalidArgument("fit_arx: need na, nb >= 1 and nk >= 0");
  if (u.size() <= static_cast<std::size_t>(na + nb + nk + 1))
    throw InvalidArgument("fit_arx: series too short for the requested orders");
  auto [phi, target] = arx_regression(u, y, na, nb, nk);
  const Eigen::MatrixXd input_block = phi.rightCols(nb);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> input_qr(input_block);
  input_qr.setThreshold(1e-10);
  if (input_qr.rank() < nb)
    throw Unidentifiable("fit_arx: input regressors are rank deficient (input not persistently exciting)");
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(phi);
  cod.setThreshold(1e-10);
  const Eigen::VectorXd theta = cod.solve(target);
  ArxModel m{na, nb, nk, std::vector<double>(theta.data(), theta.data() + na),
             std::vector<double>(theta.data() + na, theta.data() + na + nb)};
  const auto sim = simulate_arx(m, u, y);
  return {m, signals::fit_metrics(sim, y)};
}

// ---- Hammerstein-Wiener ------------------------------------------------------

inline TimeSeries simulate_hammerstein_wiener(const HammersteinWienerModel& m, const TimeSeries& u) {
  std::vector<double> w(u.size());
  for (std::size_t k = 0; k < w.size(); ++k) w[k] = m.input_nl(u[k]);
  auto x = simulate_from_equilibrium(m.linear_block, u.with_values(std::move(w))).values();
  for (auto& v : x) v = m.output_nl(v);
  return u.with_values(std::move(x));
}

struct HammersteinWienerOptions {
  std::size_t breakpoint_count = 5;
  bool freeze_nonlinearities = false;  // identity maps; reduces to fit_first_order
  int max_rounds = 50;
  double tolerance = 1e-6;  // relative loss improvement that ends the alternation
};

namespace detail {

// Pool-adjacent-violators projection onto non-decreasing sequences.
inline std::vector<double> isotonic(const std::vector<double>& v) {
  std::vector<double> level;
  std::vector<std::size_t> count;
  for (double x : v) {
    level.push_back(x);
    count.push_back(1);
    while (level.size() > 1 && level[level.size() - 2] > level.back()) {
      const std::size_t c = count.back() + count[count.size() - 2];
      const double l = (level.back() * count.back() + level[level.size() - 2] * count[count.size() - 2]) / c;
      level.pop_back();
      count.pop_back();
      level.back() = l;
      count.back() = c;
    }
  }
  std::vector<double> out;
  for (std::size_t i = 0; i < level.size(); ++i) out.insert(out.end(), count[i], level[i]);
  return out;
}

inline Eigen::VectorXd ridge_solve(const Eigen::MatrixXd& a, const Eigen::VectorXd& b) {
  Eigen::MatrixXd ata = a.transpose() * a;
  const double scale = std::max(1e-300, ata.diagonal().maxCoeff());
  ata.diagonal().array() += 1e-10 * scale;
  return ata.ldlt().solve(a.transpose() * b);
}

}  // namespace detail

/// Alternating least squares: nonlinearities fixed -> refit linear block;
/// linear block fixed -> refit each piecewise-linear map. Throws
/// NonConvergence (carrying the best iterate) if the loss rises three rounds
/// in a row.
inline Fit<HammersteinWienerModel> fit_hammerstein_wiener(const TimeSeries& u, const TimeSeries& y,
                                                          const HammersteinWienerOptions& opt = {}) {
  detail::require_same_grid(u, y, "fit_hammerstein_wiener");
  detail::require_varying(u, "fit_hammerstein_wiener");
  if (opt.breakpoint_count < 2) throw InvalidArgument("fit_hammerstein_wiener: breakpoint_count must be >= 2");
  const auto [ulo, uhi] = std::minmax_element(u.values().begin(), u.values().end());
  const auto [ylo, yhi] = std::minmax_element(y.values().begin(), y.values().end());

  HammersteinWienerModel model;
  model.input_nl = PiecewiseLinear::identity(*ulo, *uhi, opt.breakpoint_count);
  model.output_nl = PiecewiseLinear::identity(*ylo, *yhi, opt.breakpoint_count);
  model.linear_block = fit_first_order(u, y).model;
  auto loss_of = [&](const HammersteinWienerModel& m) {
    return detail::sse(simulate_hammerstein_wiener(m, u).values(), y.view());
  };
  double loss = loss_of(model);
  HammersteinWienerModel best = model;
  double best_loss = loss;

  if (!opt.freeze_nonlinearities) {
    const std::size_t n = u.size();
    const double dt = u.dt();
    int rises = 0;
    for (int round = 0; round < opt.max_rounds; ++round) {
      const double prev = loss;
      // input map, output map held
      std::vector<double> z(n);
      for (std::size_t k = 0; k < n; ++k) z[k] = model.output_nl.inverse(y[k]);
      {
        const std::size_t m = model.input_nl.breakpoints.size();
        Eigen::MatrixXd cols(n, m);
        for (std::size_t j = 0; j < m; ++j) {
          std::vector<double> phi(n);
          for (std::size_t k = 0; k < n; ++k) phi[k] = model.input_nl.basis(u[k])[j];
          const auto r = simulate_from_equilibrium(model.linear_block, u.with_values(std::move(phi)));
          for (std::size_t k = 0; k < n; ++k) cols(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) = r[k];
        }
        const Eigen::VectorXd v = detail::ridge_solve(cols, Eigen::Map<const Eigen::VectorXd>(z.data(), static_cast<Eigen::Index>(n)));
        auto values = detail::isotonic(std::vector<double>(v.data(), v.data() + v.size()));
        // keep the map's span equal to its breakpoint span; gain absorbs scale
        const double span = values.back() - values.front();
        const double bspan = model.input_nl.breakpoints.back() - model.input_nl.breakpoints.front();
        if (span > 0.0) {
          const double s = span / bspan;
          for (auto& x : values) x /= s;
          model.linear_block.k_gain *= s;
        }
        model.input_nl.values = std::move(values);
      }
      // linear block
      std::vector<double> w(n);
      for (std::size_t k = 0; k < n; ++k) w[k] = model.input_nl(u[k]);
      const TimeSeries ws = u.with_values(w);
      if (std::all_of(w.begin(), w.end(), [&](double v) { return v == w[0]; })) break;
      FirstOrderFitOptions fo;
      const std::size_t d = delay_samples(model.linear_block.td, dt);
      fo.min_delay_samples = d >= 3 ? d - 3 : 0;
      fo.max_delay_samples = d + 3;
      model.linear_block = fit_first_order(ws, u.with_values(z), fo).model;
      // output map
      {
        const auto x = simulate_from_equilibrium(model.linear_block, ws).values();
        const auto [xlo, xhi] = std::minmax_element(x.begin(), x.end());
        PiecewiseLinear out = PiecewiseLinear::identity(*xlo, *xhi, opt.breakpoint_count);
        const std::size_t m = out.breakpoints.size();
        Eigen::MatrixXd cols(n, m);
        for (std::size_t k = 0; k < n; ++k) {
          const auto bk = out.basis(x[k]);
          for (std::size_t j = 0; j < m; ++j) cols(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) = bk[j];
        }
        const Eigen::VectorXd v = detail::ridge_solve(cols, Eigen::Map<const Eigen::VectorXd>(y.values().data(), static_cast<Eigen::Index>(n)));
        out.values = detail::isotonic(std::vector<double>(v.data(), v.data() + v.size()));
        model.output_nl = std::move(out);
      }
      loss = loss_of(model);
      if (loss < best_loss) {
        best_loss = loss;
        best = model;
      }
      if (loss > prev) {
        if (++rises >= 3) {
          Fit<HammersteinWienerModel> partial{best, signals::fit_metrics(simulate_hammerstein_wiener(best, u), y)};
          throw NonConvergence<Fit<HammersteinWienerModel>>(
              "fit_hammerstein_wiener: loss increased three consecutive rounds", partial);
        }
      } else {
        rises = 0;
        if (prev - loss < opt.tolerance * prev) break;
      }
    }
  }
  return {best, signals::fit_metrics(simulate_hammerstein_wiener(best, u), y)};
}

// ---- composite multi-layer model ----------------------------------------------

/// Joint fit of (K, tw, td, g_n). For each delay on the integer grid the
/// simplex searches ln tw while (K, g_n) follow by linear least squares.
/// Expects preprocessed signals (concatenated, low-passed, mean-removed).
inline Fit<CompositeF1> fit_composite_f1(const TimeSeries& lp, const TimeSeries& layer, const TimeSeries& mpw,
                                         const FirstOrderFitOptions& opt = {}) {
  if (!lp.same_grid(layer) || lp.size() != mpw.size() || lp.dt() != mpw.dt())
    throw InvalidArgument("fit_composite_f1: series must be synchronized");
  detail::require_varying(lp, "fit_composite_f1");
  {
    const auto [lo, hi] = std::minmax_element(layer.values().begin(), layer.values().end());
    if (!(*hi > *lo)) throw Unidentifiable("fit_composite_f1: a single layer value leaves g_n unidentifiable");
  }
  const std::size_t n = lp.size();
  const double dt = lp.dt();
  const auto yv = mpw.view();
  const auto nv = layer.view();
  const auto guess = step_response_heuristic(lp, mpw);
  const std::size_t dmax = std::min(opt.max_delay_samples.value_or(detail::default_max_delay(n)), n - 2);
  const std::size_t dmin = std::min(opt.min_delay_samples.value_or(0), dmax);

  auto project = [&](double tw, std::size_t d, double& k_out, double& g_out) {
    const auto z = detail::unit_first_order(lp.view(), tw, dt);
    Eigen::Matrix2d ata = Eigen::Matrix2d::Zero();
    Eigen::Vector2d aty = Eigen::Vector2d::Zero();
    for (std::size_t k = 0; k < n; ++k) {
      const Eigen::Vector2d r(k < d ? z[0] : z[k - d], nv[k]);
      ata += r * r.transpose();
      aty += r * yv[k];
    }
    const Eigen::Vector2d c = ata.ldlt().solve(aty);
    k_out = c(0);
    g_out = c(1);
    double s = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const double e = c(0) * (k < d ? z[0] : z[k - d]) + c(1) * nv[k] - yv[k];
      s += e * e;
    }
    return std::isfinite(s) ? s : std::numeric_limits<double>::infinity();
  };

  CompositeF1 best;
  double best_sse = std::numeric_limits<double>::infinity();
  for (std::size_t d = dmin; d <= dmax; ++d) {
    double kk = 0.0, gg = 0.0;
    auto objective = [&](const std::vector<double>& p) {
      const double tw = std::exp(p[0]);
      if (!(tw > 1e-6 * dt) || !(tw < 1e6 * dt * static_cast<double>(n))) return std::numeric_limits<double>::infinity();
      return project(tw, d, kk, gg);
    };
    const auto r = optimize::nelder_mead_restarted(objective, {std::log(std::max(guess.tw, dt))});
    if (r.value < best_sse) {
      best_sse = r.value;
      const double tw = std::exp(r.x[0]);
      project(tw, d, kk, gg);
      best = {{kk, tw, static_cast<double>(d) * dt}, gg, 0.0};
    }
  }
  return {best, signals::fit_metrics(simulate_composite_f1(best, lp, layer), mpw)};
}

struct CompositePreprocessing {
  double lowpass_hz = signals::kDefaultLowpassCutoff;
  double lp_mean = 0.0, layer_mean = 0.0, mpw_mean = 0.0;
};

struct PreparedComposite {
  TimeSeries lp, layer, mpw;
  CompositePreprocessing applied;
};

/// Multi-layer preprocessing in order: drop samples with no melt pool and
/// splice, low-pass, remove means.
inline PreparedComposite prepare_composite(const TimeSeries& lp, const TimeSeries& layer, const TimeSeries& mpw,
                                           double cutoff_hz = signals::kDefaultLowpassCutoff) {
  auto spliced = signals::concatenate_nonzero({lp, layer, mpw}, 2);
  for (auto& s : spliced) s = signals::lowpass(s, cutoff_hz);
  auto c_lp = signals::remove_mean(spliced[0]);
  auto c_n = signals::remove_mean(spliced[1]);
  auto c_w = signals::remove_mean(spliced[2]);
  return {c_lp.series, c_n.series, c_w.series, {cutoff_hz, c_lp.mean, c_n.mean, c_w.mean}};
}

/// Composite model in absolute units from one fitted on prepared data.
inline CompositeF1 restore_offset(CompositeF1 m, const CompositePreprocessing& p) {
  m.offset = p.mpw_mean - m.g_lp.k_gain * p.lp_mean - m.g_n * p.layer_mean;
  return m;
}

// ---- model comparison ---------------------------------------------------------

enum class Structure { FirstOrder, SecondOrder, Arx, HammersteinWiener };

inline const char* structure_name(Structure s) {
  switch (s) {
    case Structure::FirstOrder: return "first-order";
    case Structure::SecondOrder: return "second-order";
    case Structure::Arx: return "arx";
    case Structure::HammersteinWiener: return "hammerstein-wiener";
  }
  return "?";
}

struct ComparisonEntry {
  Structure structure;
  bool ok = false;
  double bf_validation = -std::numeric_limits<double>::infinity();
  FitMetrics training;
  FitMetrics validation;
  std::string error;
};

struct ComparisonOptions {
  int arx_na = 2;
  int arx_nb = 2;
  std::size_t hw_breakpoints = 5;
};

/// Fits every structure on the leading (1 - validation_fraction) of the data
/// and ranks them by best fit on the trailing part, highest first. A failing
/// structure is reported, not propagated.
inline std::vector<ComparisonEntry> compare_models(const TimeSeries& u, const TimeSeries& y,
                                                   double validation_fraction = 0.5,
                                                   const ComparisonOptions& opt = {}) {
  detail::require_same_grid(u, y, "compare_models");
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
    throw InvalidArgument("compare_models: validation_fraction must lie in (0, 1)");
  const std::size_t n = u.size();
  const auto split = static_cast<std::size_t>(std::llround(static_cast<double>(n) * (1.0 - validation_fraction)));
  if (split < 8 || n - split < 2) throw InvalidArgument("compare_models: not enough data for the split");
  const auto u_tr = u.slice(0, split), y_tr = y.slice(0, split);
  auto validate = [&](const TimeSeries& full_prediction) {
    return signals::fit_metrics(full_prediction.view().subspan(split), y.view().subspan(split));
  };

  std::vector<ComparisonEntry> out;
  std::size_t first_delay = 1;
  auto attempt = [&](Structure s, auto&& body) {
    ComparisonEntry e{s};
    try {
      body(e);
      e.bf_validation = e.validation.bf_percent;
      e.ok = true;
    } catch (const std::exception& ex) {
      e.error = ex.what();
    }
    out.push_back(e);
  };
  attempt(Structure::FirstOrder, [&](ComparisonEntry& e) {
    const auto f = fit_first_order(u_tr, y_tr);
    first_delay = std::max<std::size_t>(1, delay_samples(f.model.td, u.dt()));
    e.training = f.metrics;
    e.validation = validate(simulate_from_equilibrium(f.model, u));
  });
  attempt(Structure::SecondOrder, [&](ComparisonEntry& e) {
    const auto f = fit_second_order(u_tr, y_tr);
    e.training = f.metrics;
    e.validation = validate(simulate_second_order(f.model, u));
  });
  attempt(Structure::Arx, [&](ComparisonEntry& e) {
    const auto f = fit_arx(u_tr, y_tr, opt.arx_na, opt.arx_nb, static_cast<int>(first_delay));
    e.training = f.metrics;
    e.validation = validate(simulate_arx(f.model, u, y));
  });
  attempt(Structure::HammersteinWiener, [&](ComparisonEntry& e) {
    HammersteinWienerOptions ho;
    ho.breakpoint_count = opt.hw_breakpoints;
    const auto f = fit_hammerstein_wiener(u_tr, y_tr, ho);
    e.training = f.metrics;
    e.validation = validate(simulate_hammerstein_wiener(f.model, u));
  });
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.bf_validation > b.bf_validation; });
  return out;
}

}  // namespace dedtwin::sysid
