#pragma once

// Independent reference computations used by the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "dedtwin/rng.hpp"
#include "dedtwin/surrogate.hpp"
#include "dedtwin/vision.hpp"

namespace oracle {

/// Largest inscribed circle diameter by checking every foreground pixel
/// against every background pixel, including a one-pixel frame outside.
inline double inscribed_diameter(const dedtwin::vision::Mask& m) {
  std::vector<std::pair<int, int>> bg;
  for (int y = -1; y <= m.height; ++y)
    for (int x = -1; x <= m.width; ++x) {
      const bool inside = x >= 0 && y >= 0 && x < m.width && y < m.height;
      if (!inside || !m.at(x, y)) bg.emplace_back(x, y);
    }
  double best = 0.0;
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x) {
      if (!m.at(x, y)) continue;
      double d2 = std::numeric_limits<double>::infinity();
      for (auto [bx, by] : bg) d2 = std::min(d2, double(bx - x) * (bx - x) + double(by - y) * (by - y));
      best = std::max(best, d2);
    }
  return 2.0 * std::sqrt(best);
}

/// Smallest enclosing circle diameter over every circle through two or
/// three candidate points. Only the leftmost and rightmost pixel of each row
/// can be a hull vertex, so those are the candidates.
inline double enclosing_diameter(const dedtwin::vision::Mask& m) {
  std::vector<std::pair<double, double>> pts;
  for (int y = 0; y < m.height; ++y) {
    int lo = -1, hi = -1;
    for (int x = 0; x < m.width; ++x)
      if (m.at(x, y)) {
        if (lo < 0) lo = x;
        hi = x;
      }
    if (lo >= 0) {
      pts.emplace_back(lo, y);
      if (hi != lo) pts.emplace_back(hi, y);
    }
  }
  if (pts.size() == 1) return 0.0;
  double best = std::numeric_limits<double>::infinity();
  auto consider = [&](double cx, double cy, double r) {
    if (!(r < best / 2.0)) return;
    for (auto [x, y] : pts)
      if (std::hypot(x - cx, y - cy) > r * (1.0 + 1e-12) + 1e-9) return;
    best = 2.0 * r;
  };
  const std::size_t n = pts.size();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const auto [ax, ay] = pts[i];
      const auto [bx, by] = pts[j];
      consider(0.5 * (ax + bx), 0.5 * (ay + by), 0.5 * std::hypot(ax - bx, ay - by));
      for (std::size_t k = j + 1; k < n; ++k) {
        const auto [qx, qy] = pts[k];
        const double d = 2.0 * (ax * (by - qy) + bx * (qy - ay) + qx * (ay - by));
        if (d == 0.0) continue;
        const double a2 = ax * ax + ay * ay, b2 = bx * bx + by * by, q2 = qx * qx + qy * qy;
        const double ux = (a2 * (by - qy) + b2 * (qy - ay) + q2 * (ay - by)) / d;
        const double uy = (a2 * (qx - bx) + b2 * (ax - qx) + q2 * (bx - ax)) / d;
        consider(ux, uy, std::hypot(ax - ux, ay - uy));
      }
    }
  return best;
}

/// Random mask: a few overlapping ellipses plus sparse speckle.
inline dedtwin::vision::Mask random_mask(std::uint64_t seed) {
  const dedtwin::CounterRng rng(seed);
  const int w = 8 + static_cast<int>(rng.uniform(0, 0) * 57);
  const int h = 8 + static_cast<int>(rng.uniform(0, 1) * 57);
  dedtwin::vision::Mask m(w, h);
  const int blobs = 1 + static_cast<int>(rng.uniform(0, 2) * 3);
  for (int b = 0; b < blobs; ++b) {
    const auto k = static_cast<std::uint64_t>(b);
    const double cx = rng.uniform(1, k) * w, cy = rng.uniform(2, k) * h;
    const double ax = 1.0 + rng.uniform(3, k) * w / 2.0, ay = 1.0 + rng.uniform(4, k) * h / 2.0;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double u = (x - cx) / ax, v = (y - cy) / ay;
        if (u * u + v * v <= 1.0) m.set(x, y);
      }
  }
  for (int i = 0; i < w * h / 40; ++i) {
    const auto k = static_cast<std::uint64_t>(i);
    m.set(static_cast<int>(rng.uniform(5, k) * w), static_cast<int>(rng.uniform(6, k) * h));
  }
  return m;
}

/// Step response of K exp(-td s)/(tw s + 1) to a unit step at t = 0.
inline double first_order_step(double k, double tw, double td, double t) {
  return t < td ? 0.0 : k * (1.0 - std::exp(-(t - td) / tw));
}

/// Least-squares coefficients through the Moore-Penrose pseudo-inverse
/// computed from a full SVD.
inline Eigen::VectorXd pinv_solve(const Eigen::MatrixXd& a, const Eigen::VectorXd& y) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& s = svd.singularValues();
  const double tol = std::max(a.rows(), a.cols()) * s(0) * std::numeric_limits<double>::epsilon();
  Eigen::VectorXd inv = s;
  for (Eigen::Index i = 0; i < s.size(); ++i) inv(i) = s(i) > tol ? 1.0 / s(i) : 0.0;
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose() * y;
}

/// Central-difference Jacobian of the raw network output with respect to
/// every parameter.
inline Eigen::MatrixXd mlp_jacobian_fd(const dedtwin::surrogate::MlpModel& m, const Eigen::MatrixXd& xn,
                                       double h = 1e-6) {
  auto work = m;
  const Eigen::VectorXd theta = m.parameters();
  Eigen::MatrixXd j(xn.rows(), theta.size());
  for (Eigen::Index p = 0; p < theta.size(); ++p) {
    Eigen::VectorXd t = theta;
    t(p) += h;
    work.set_parameters(t);
    const Eigen::VectorXd up = dedtwin::surrogate::mlp_raw_output(work, xn);
    t(p) -= 2.0 * h;
    work.set_parameters(t);
    const Eigen::VectorXd down = dedtwin::surrogate::mlp_raw_output(work, xn);
    j.col(p) = (up - down) / (2.0 * h);
  }
  return j;
}

}  // namespace oracle
