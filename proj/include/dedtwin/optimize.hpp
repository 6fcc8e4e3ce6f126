#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

namespace dedtwin::optimize {

struct SimplexOptions {
  int max_evaluations = 400;
  double x_tolerance = 1e-10;  // simplex diameter, relative
  double f_tolerance = 1e-14;  // spread of vertex values, relative
  double initial_step = 0.1;   // per coordinate; absolute when the coordinate is 0
};

struct SimplexResult {
  std::vector<double> x;
  double value = std::numeric_limits<double>::infinity();
  int evaluations = 0;
};

/// Nelder-Mead downhill simplex with the standard coefficients
/// (reflection 1, expansion 2, contraction 1/2, shrink 1/2).
/// Non-finite objective values are treated as +inf.
inline SimplexResult nelder_mead(const std::function<double(const std::vector<double>&)>& f,
                                 std::vector<double> x0, const SimplexOptions& opt = {}) {
  const std::size_t n = x0.size();
  int evals = 0;
  auto eval = [&](const std::vector<double>& x) {
    ++evals;
    const double v = f(x);
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  };

  std::vector<std::vector<double>> pts(n + 1, x0);
  for (std::size_t i = 0; i < n; ++i) {
    const double step = x0[i] != 0.0 ? opt.initial_step * std::abs(x0[i]) : opt.initial_step;
    pts[i + 1][i] += step;
  }
  std::vector<double> vals(n + 1);
  for (std::size_t i = 0; i <= n; ++i) vals[i] = eval(pts[i]);

  std::vector<std::size_t> order(n + 1);
  std::vector<double> centroid(n), trial(n), trial2(n);
  while (evals < opt.max_evaluations) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return vals[a] < vals[b]; });
    const std::size_t best = order.front(), worst = order.back(), second = order[n - 1];

    double diam = 0.0, scale = 0.0;
    for (std::size_t i = 0; i <= n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        diam = std::max(diam, std::abs(pts[i][j] - pts[best][j]));
        scale = std::max(scale, std::abs(pts[best][j]));
      }
    const double spread = std::abs(vals[worst] - vals[best]);
    if (diam <= opt.x_tolerance * std::max(1.0, scale) &&
        spread <= opt.f_tolerance * std::max(1.0, std::abs(vals[best])))
      break;

    std::fill(centroid.begin(), centroid.end(), 0.0);
    for (std::size_t i = 0; i <= n; ++i)
      if (i != worst)
        for (std::size_t j = 0; j < n; ++j) centroid[j] += pts[i][j] / static_cast<double>(n);

    for (std::size_t j = 0; j < n; ++j) trial[j] = centroid[j] + (centroid[j] - pts[worst][j]);
    const double fr = eval(trial);
    if (fr < vals[best]) {
      for (std::size_t j = 0; j < n; ++j) trial2[j] = centroid[j] + 2.0 * (centroid[j] - pts[worst][j]);
      const double fe = eval(trial2);
      if (fe < fr) {
        pts[worst] = trial2;
        vals[worst] = fe;
      } else {
        pts[worst] = trial;
        vals[worst] = fr;
      }
      continue;
    }
    if (fr < vals[second]) {
      pts[worst] = trial;
      vals[worst] = fr;
      continue;
    }
    const bool outside = fr < vals[worst];
    for (std::size_t j = 0; j < n; ++j)
      trial2[j] = outside ? centroid[j] + 0.5 * (trial[j] - centroid[j])
                          : centroid[j] + 0.5 * (pts[worst][j] - centroid[j]);
    const double fc = eval(trial2);
    if (fc < (outside ? fr : vals[worst])) {
      pts[worst] = trial2;
      vals[worst] = fc;
      continue;
    }
    for (std::size_t i = 0; i <= n; ++i) {
      if (i == best) continue;
      for (std::size_t j = 0; j < n; ++j) pts[i][j] = pts[best][j] + 0.5 * (pts[i][j] - pts[best][j]);
      vals[i] = eval(pts[i]);
    }
  }
  const auto it = std::min_element(vals.begin(), vals.end());
  return {pts[static_cast<std::size_t>(it - vals.begin())], *it, evals};
}

/// Restarts the simplex from its own optimum until a restart stops helping.
/// Guards against the premature collapse plain Nelder-Mead is prone to.
inline SimplexResult nelder_mead_restarted(const std::function<double(const std::vector<double>&)>& f,
                                           std::vector<double> x0, const SimplexOptions& opt = {},
                                           int max_restarts = 3) {
  SimplexResult best = nelder_mead(f, std::move(x0), opt);
  for (int r = 0; r < max_restarts; ++r) {
    SimplexResult next = nelder_mead(f, best.x, opt);
    next.evaluations += best.evaluations;
    const bool improved = next.value < best.value - 1e-15 * std::max(1.0, std::abs(best.value));
    if (next.value <= best.value) best = next;
    else best.evaluations = next.evaluations;
    if (!improved) break;
  }
  return best;
}

}  // namespace dedtwin::optimize
