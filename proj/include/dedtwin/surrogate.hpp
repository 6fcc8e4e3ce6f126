#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dedtwin/dataset.hpp"
#include "dedtwin/errors.hpp"
#include "dedtwin/rng.hpp"
#include "dedtwin/signals.hpp"
#include "dedtwin/sysid.hpp"

namespace dedtwin::surrogate {

using signals::FitMetrics;

enum class Activation { Relu, Sigmoid, Linear };
enum class OutputTransform { Log, Identity };

inline const char* activation_name(Activation a) {
  switch (a) {
    case Activation::Relu: return "relu";
    case Activation::Sigmoid: return "sigmoid";
    case Activation::Linear: return "linear";
  }
  return "?";
}

inline const char* transform_name(OutputTransform t) { return t == OutputTransform::Log ? "log" : "identity"; }

/// Per-feature min-max map onto [0, 1]. A constant feature maps to 0.
struct MinMax {
  std::vector<double> lo, hi;

  static MinMax fit(const Eigen::MatrixXd& x) {
    MinMax m;
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      m.lo.push_back(x.col(j).minCoeff());
      m.hi.push_back(x.col(j).maxCoeff());
    }
    return m;
  }

  static MinMax identity(std::size_t d) { return {std::vector<double>(d, 0.0), std::vector<double>(d, 1.0)}; }

  double apply(std::size_t j, double v) const {
    const double span = hi[j] - lo[j];
    return span > 0.0 ? (v - lo[j]) / span : 0.0;
  }

  double span(std::size_t j) const { return hi[j] - lo[j]; }

  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const {
    Eigen::MatrixXd out(x.rows(), x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j)
      for (Eigen::Index i = 0; i < x.rows(); ++i) out(i, j) = apply(static_cast<std::size_t>(j), x(i, j));
    return out;
  }

  bool covers(std::span<const double> x, double slack = 0.0) const {
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double s = slack * std::max(span(j), 0.0);
      if (x[j] < lo[j] - s || x[j] > hi[j] + s) return false;
    }
    return true;
  }
};

inline double forward_transform(OutputTransform t, double y) { return t == OutputTransform::Log ? std::log(y) : y; }
inline double inverse_transform(OutputTransform t, double z) { return t == OutputTransform::Log ? std::exp(z) : z; }

// ---- MLP ----------------------------------------------------------------------

struct DenseLayer {
  Eigen::MatrixXd w;  // out x in
  Eigen::VectorXd b;
  Activation act = Activation::Linear;
};

struct MlpModel {
  std::vector<std::string> features;
  std::vector<DenseLayer> layers;
  MinMax normalizer;
  OutputTransform transform = OutputTransform::Log;
  std::uint64_t seed = 0;

  std::vector<int> layer_sizes() const {
    std::vector<int> s;
    if (layers.empty()) return s;
    s.push_back(static_cast<int>(layers.front().w.cols()));
    for (const auto& l : layers) s.push_back(static_cast<int>(l.w.rows()));
    return s;
  }

  Eigen::Index parameter_count() const {
    Eigen::Index p = 0;
    for (const auto& l : layers) p += l.w.size() + l.b.size();
    return p;
  }

  // Flattened as, per layer, row-major weights then biases.
  Eigen::VectorXd parameters() const {
    Eigen::VectorXd p(parameter_count());
    Eigen::Index o = 0;
    for (const auto& l : layers) {
      for (Eigen::Index r = 0; r < l.w.rows(); ++r)
        for (Eigen::Index c = 0; c < l.w.cols(); ++c) p(o++) = l.w(r, c);
      for (Eigen::Index r = 0; r < l.b.size(); ++r) p(o++) = l.b(r);
    }
    return p;
  }

  void set_parameters(const Eigen::VectorXd& p) {
    if (p.size() != parameter_count()) throw InvalidArgument("mlp: parameter vector has the wrong length");
    Eigen::Index o = 0;
    for (auto& l : layers) {
      for (Eigen::Index r = 0; r < l.w.rows(); ++r)
        for (Eigen::Index c = 0; c < l.w.cols(); ++c) l.w(r, c) = p(o++);
      for (Eigen::Index r = 0; r < l.b.size(); ++r) l.b(r) = p(o++);
    }
  }

  void validate() const {
    if (layers.empty()) throw InvalidArgument("mlp: no layers");
    for (std::size_t i = 0; i < layers.size(); ++i) {
      if (layers[i].b.size() != layers[i].w.rows()) throw InvalidArgument("mlp: bias/weight shape mismatch");
      if (i > 0 && layers[i].w.cols() != layers[i - 1].w.rows())
        throw InvalidArgument("mlp: weight shapes do not chain");
    }
    if (layers.back().w.rows() != 1) throw InvalidArgument("mlp: output layer must have one unit");
    const auto d = static_cast<std::size_t>(layers.front().w.cols());
    if (normalizer.lo.size() != d || normalizer.hi.size() != d)
      throw InvalidArgument("mlp: normalizer dimension mismatch");
  }
};

namespace detail {

inline void activate(Activation a, Eigen::Ref<Eigen::MatrixXd> z) {
  switch (a) {
    case Activation::Relu: z = z.array().max(0.0); break;
    case Activation::Sigmoid: z = (1.0 + (-z.array()).exp()).inverse(); break;
    case Activation::Linear: break;
  }
}

// Derivative expressed through the activation output.
inline Eigen::MatrixXd activation_slope(Activation a, const Eigen::MatrixXd& out) {
  switch (a) {
    case Activation::Relu: return (out.array() > 0.0).cast<double>();
    case Activation::Sigmoid: return out.array() * (1.0 - out.array());
    case Activation::Linear: return Eigen::MatrixXd::Ones(out.rows(), out.cols());
  }
  return {};
}

// Activations per layer for a batch; columns are samples. acts[0] = input.
inline std::vector<Eigen::MatrixXd> forward_all(const MlpModel& m, const Eigen::MatrixXd& xn_cols) {
  std::vector<Eigen::MatrixXd> acts{xn_cols};
  for (const auto& l : m.layers) {
    Eigen::MatrixXd z = l.w * acts.back();
    z.colwise() += l.b;
    activate(l.act, z);
    acts.push_back(std::move(z));
  }
  return acts;
}

}  // namespace detail

/// Network output on the transformed scale for pre-normalized rows.
inline Eigen::VectorXd mlp_raw_output(const MlpModel& m, const Eigen::MatrixXd& xn_rows) {
  return detail::forward_all(m, xn_rows.transpose()).back().row(0).transpose();
}

/// Jacobian of the raw output with respect to the flattened parameters, one
/// row per (normalized) sample, by reverse-mode accumulation.
inline Eigen::MatrixXd mlp_jacobian(const MlpModel& m, const Eigen::MatrixXd& xn_rows) {
  const auto acts = detail::forward_all(m, xn_rows.transpose());
  const Eigen::Index n = xn_rows.rows();
  Eigen::MatrixXd jac(n, m.parameter_count());
  std::vector<Eigen::Index> offset;
  Eigen::Index o = 0;
  for (const auto& l : m.layers) {
    offset.push_back(o);
    o += l.w.size() + l.b.size();
  }
  // delta: d output / d pre-activation of the layer, units x samples
  Eigen::MatrixXd delta = detail::activation_slope(m.layers.back().act, acts.back());
  for (std::size_t li = m.layers.size(); li-- > 0;) {
    const auto& l = m.layers[li];
    const Eigen::MatrixXd& in = acts[li];
    const Eigen::Index rows = l.w.rows(), cols = l.w.cols();
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c)
        jac.col(offset[li] + r * cols + c) = (delta.row(r).array() * in.row(c).array()).transpose();
      jac.col(offset[li] + rows * cols + r) = delta.row(r).transpose();
    }
    if (li > 0) delta = (l.w.transpose() * delta).cwiseProduct(detail::activation_slope(m.layers[li - 1].act, acts[li]));
  }
  return jac;
}

inline double mlp_forward(const MlpModel& m, std::span<const double> x) {
  if (x.size() != m.normalizer.lo.size())
    throw InvalidArgument("mlp_forward: expected " + std::to_string(m.normalizer.lo.size()) + " features, got " +
                          std::to_string(x.size()));
  Eigen::MatrixXd xn(1, static_cast<Eigen::Index>(x.size()));
  for (std::size_t j = 0; j < x.size(); ++j) xn(0, static_cast<Eigen::Index>(j)) = m.normalizer.apply(j, x[j]);
  return inverse_transform(m.transform, mlp_raw_output(m, xn)(0));
}

/// Predictions in target units for raw feature rows.
inline Eigen::VectorXd mlp_predict(const MlpModel& m, const Eigen::MatrixXd& x_rows) {
  if (x_rows.cols() != static_cast<Eigen::Index>(m.normalizer.lo.size()))
    throw InvalidArgument("mlp_predict: feature dimension mismatch");
  Eigen::VectorXd z = mlp_raw_output(m, m.normalizer.apply(x_rows));
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = inverse_transform(m.transform, z(i));
  return z;
}

inline Eigen::VectorXd mlp_predict(const MlpModel& m, const Dataset& d) {
  return mlp_predict(m, d.features(m.features));
}

inline const std::vector<int>& default_hidden_sizes() {
  static const std::vector<int> h{8, 16, 32, 16, 8, 4};
  return h;
}

inline std::vector<Activation> default_activations() {
  return {Activation::Relu, Activation::Sigmoid, Activation::Sigmoid, Activation::Sigmoid,
          Activation::Sigmoid, Activation::Sigmoid, Activation::Linear};
}

/// Glorot-uniform weights from the seed, zero biases.
inline MlpModel mlp_init(const std::vector<int>& sizes, const std::vector<Activation>& acts, std::uint64_t seed) {
  if (sizes.size() < 2 || acts.size() != sizes.size() - 1)
    throw InvalidArgument("mlp_init: need one activation per weight layer");
  MlpModel m;
  m.seed = seed;
  const CounterRng rng(seed);
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    DenseLayer layer;
    layer.w.resize(sizes[l + 1], sizes[l]);
    layer.b = Eigen::VectorXd::Zero(sizes[l + 1]);
    layer.act = acts[l];
    const double bound = std::sqrt(6.0 / (sizes[l] + sizes[l + 1]));
    std::uint64_t idx = 0;
    for (Eigen::Index r = 0; r < layer.w.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.w.cols(); ++c)
        layer.w(r, c) = bound * (2.0 * rng.uniform(0x1000 + l, idx++) - 1.0);
    m.layers.push_back(std::move(layer));
  }
  m.normalizer = MinMax::identity(static_cast<std::size_t>(sizes.front()));
  return m;
}

struct MlpConfig {
  std::vector<std::string> features{"mpw", "mpl", "mpt", "n"};
  std::vector<int> hidden = default_hidden_sizes();
  std::vector<Activation> activations = default_activations();
  OutputTransform transform = OutputTransform::Log;
  bool normalize = true;
  double train_fraction = 0.8;
  int max_epochs = 200;
  double lambda0 = 1e-3;
  double lambda_max = 1e10;
  std::uint64_t seed = 1;
};

struct TrainReport {
  FitMetrics metrics;            // validation split, target units
  FitMetrics training_metrics;   // training split, target units
  int epochs_run = 0;
  double final_loss = 0.0;       // half sum of squares, transformed scale
  std::uint64_t split_seed = 0;
  std::vector<double> loss_history;  // initial loss, then one entry per accepted step
  std::string stop_reason;

  friend bool operator==(const TrainReport&, const TrainReport&) = default;
};

struct TrainResult {
  MlpModel model;
  TrainReport report;
};

class TrainingFailure : public NonConvergence<MlpModel> {
public:
  using NonConvergence<MlpModel>::NonConvergence;
};

/// Full-batch Levenberg-Marquardt on 1/2 sum of squared residuals of the
/// transformed target: solve (J'J + lambda I) delta = -J'r; accept when the
/// loss drops (lambda /= 10, one epoch), otherwise lambda *= 10.
inline TrainResult mlp_train_lm(const Dataset& train, const MlpConfig& cfg, const Dataset* validation = nullptr) {
  const bool log_target = cfg.transform == OutputTransform::Log;
  train.validate(cfg.features, log_target);
  const Eigen::MatrixXd x = train.features(cfg.features);
  std::vector<int> sizes{static_cast<int>(cfg.features.size())};
  sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
  sizes.push_back(1);
  MlpModel m = mlp_init(sizes, cfg.activations, cfg.seed);
  m.features = cfg.features;
  m.transform = cfg.transform;
  m.normalizer = cfg.normalize ? MinMax::fit(x) : MinMax::identity(cfg.features.size());
  const Eigen::MatrixXd xn = m.normalizer.apply(x);
  Eigen::VectorXd y(train.rows());
  for (Eigen::Index i = 0; i < y.size(); ++i) y(i) = forward_transform(cfg.transform, train.target(i));

  const Eigen::Index p = m.parameter_count();
  auto loss_of = [&](const MlpModel& mm) { return 0.5 * (mlp_raw_output(mm, xn) - y).squaredNorm(); };
  Eigen::VectorXd theta = m.parameters();
  double loss = loss_of(m);
  TrainReport rep;
  rep.split_seed = cfg.seed;
  rep.loss_history.push_back(loss);
  double lambda = cfg.lambda0;
  rep.stop_reason = "max-epochs";

  Eigen::MatrixXd h(p, p);
  while (rep.epochs_run < cfg.max_epochs) {
    const Eigen::MatrixXd jac = mlp_jacobian(m, xn);
    const Eigen::VectorXd r = mlp_raw_output(m, xn) - y;
    h.setZero();
    h.selfadjointView<Eigen::Lower>().rankUpdate(jac.transpose());
    const Eigen::VectorXd g = jac.transpose() * r;
    bool accepted = false;
    while (!accepted) {
      if (lambda > cfg.lambda_max) break;
      Eigen::MatrixXd a = h;
      a.diagonal().array() += lambda;
      Eigen::LLT<Eigen::MatrixXd, Eigen::Lower> llt(a);
      if (llt.info() != Eigen::Success) {
        throw TrainingFailure("mlp_train_lm: normal equations are singular at lambda = " + std::to_string(lambda), m);
      }
      const Eigen::VectorXd step = llt.solve(-g);
      if (!step.allFinite())
        throw TrainingFailure("mlp_train_lm: non-finite step at lambda = " + std::to_string(lambda), m);
      MlpModel trial = m;
      trial.set_parameters(theta + step);
      const double trial_loss = loss_of(trial);
      if (std::isfinite(trial_loss) && trial_loss < loss) {
        theta += step;
        m = std::move(trial);
        loss = trial_loss;
        lambda /= 10.0;
        accepted = true;
        ++rep.epochs_run;
        rep.loss_history.push_back(loss);
      } else {
        lambda *= 10.0;
      }
    }
    if (!accepted) {
      rep.stop_reason = "lambda-limit";
      break;
    }
  }
  rep.final_loss = loss;
  rep.training_metrics = signals::fit_metrics(
      std::span<const double>(mlp_predict(m, x).eval().data(), static_cast<std::size_t>(x.rows())),
      std::span<const double>(train.target.data(), static_cast<std::size_t>(train.rows())));
  if (validation) {
    const Eigen::VectorXd pred = mlp_predict(m, *validation);
    rep.metrics = signals::fit_metrics(std::span<const double>(pred.data(), static_cast<std::size_t>(pred.size())),
                                       std::span<const double>(validation->target.data(),
                                                               static_cast<std::size_t>(validation->rows())));
  } else {
    rep.metrics = rep.training_metrics;
  }
  return {std::move(m), std::move(rep)};
}

/// Splits with the config's seed and fraction, trains, reports on validation.
inline TrainResult mlp_train_lm_split(const Dataset& d, const MlpConfig& cfg) {
  const auto s = split_dataset(d, cfg.train_fraction, cfg.seed);
  return mlp_train_lm(s.train, cfg, &s.validation);
}

// ---- response surface ------------------------------------------------------------

struct RsmModel {
  std::vector<std::string> features;
  int degree = 3;
  std::vector<std::vector<int>> exponents;  // one row per monomial
  Eigen::VectorXd coefficients;
  MinMax normalizer;
  OutputTransform transform = OutputTransform::Log;

  double raw(std::span<const double> xn) const {
    double s = 0.0;
    for (std::size_t t = 0; t < exponents.size(); ++t) {
      double v = coefficients(static_cast<Eigen::Index>(t));
      for (std::size_t j = 0; j < xn.size(); ++j)
        for (int e = 0; e < exponents[t][j]; ++e) v *= xn[j];
      s += v;
    }
    return s;
  }

  double predict(std::span<const double> x) const {
    if (x.size() != features.size()) throw InvalidArgument("rsm: feature dimension mismatch");
    std::vector<double> xn(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) xn[j] = normalizer.apply(j, x[j]);
    return inverse_transform(transform, raw(xn));
  }

  Eigen::VectorXd predict(const Eigen::MatrixXd& rows) const {
    Eigen::VectorXd out(rows.rows());
    std::vector<double> x(static_cast<std::size_t>(rows.cols()));
    for (Eigen::Index i = 0; i < rows.rows(); ++i) {
      for (Eigen::Index j = 0; j < rows.cols(); ++j) x[static_cast<std::size_t>(j)] = rows(i, j);
      out(i) = predict(x);
    }
    return out;
  }
};

/// All monomials of total degree <= degree in d variables, graded then
/// lexicographic (constant first).
inline std::vector<std::vector<int>> monomial_exponents(std::size_t d, int degree) {
  std::vector<std::vector<int>> out;
  std::vector<int> e(d, 0);
  for (int total = 0; total <= degree; ++total) {
    // enumerate compositions of `total` into d parts, lexicographically descending
    std::function<void(std::size_t, int)> rec = [&](std::size_t j, int left) {
      if (j + 1 == d) {
        e[j] = left;
        out.push_back(e);
        return;
      }
      for (int v = left; v >= 0; --v) {
        e[j] = v;
        rec(j + 1, left - v);
      }
    };
    if (d == 0) {
      if (total == 0) out.push_back({});
      continue;
    }
    rec(0, total);
  }
  return out;
}

inline std::string monomial_name(const std::vector<int>& e, const std::vector<std::string>& names) {
  std::string s;
  for (std::size_t j = 0; j < e.size(); ++j) {
    if (e[j] == 0) continue;
    if (!s.empty()) s += "*";
    s += names[j];
    if (e[j] > 1) s += "^" + std::to_string(e[j]);
  }
  return s.empty() ? "1" : s;
}

inline Eigen::MatrixXd monomial_matrix(const Eigen::MatrixXd& xn, const std::vector<std::vector<int>>& ex) {
  Eigen::MatrixXd a(xn.rows(), static_cast<Eigen::Index>(ex.size()));
  for (std::size_t t = 0; t < ex.size(); ++t) {
    Eigen::VectorXd col = Eigen::VectorXd::Ones(xn.rows());
    for (std::size_t j = 0; j < ex[t].size(); ++j)
      for (int k = 0; k < ex[t][j]; ++k) col.array() *= xn.col(static_cast<Eigen::Index>(j)).array();
    a.col(static_cast<Eigen::Index>(t)) = col;
  }
  return a;
}

struct RsmConfig {
  std::vector<std::string> features{"mpw", "mpl", "n"};
  OutputTransform transform = OutputTransform::Log;
  double train_fraction = 0.8;
  std::uint64_t seed = 1;
};

struct RsmResult {
  RsmModel model;
  FitMetrics metrics;           // held-out split, target units
  FitMetrics training_metrics;
};

/// Least squares over the complete degree-3 monomial basis of the normalized
/// features (column-pivoted QR).
inline RsmResult rsm_fit(const Dataset& train, const Dataset& validation, const RsmConfig& cfg) {
  const bool log_target = cfg.transform == OutputTransform::Log;
  train.validate(cfg.features, log_target);
  RsmModel m;
  m.features = cfg.features;
  m.transform = cfg.transform;
  m.exponents = monomial_exponents(cfg.features.size(), 3);
  const Eigen::MatrixXd x = train.features(cfg.features);
  m.normalizer = MinMax::fit(x);
  const Eigen::MatrixXd a = monomial_matrix(m.normalizer.apply(x), m.exponents);
  if (a.rows() < a.cols())
    throw InvalidArgument("rsm_fit: " + std::to_string(a.rows()) + " rows for " + std::to_string(a.cols()) +
                          " monomials");
  Eigen::VectorXd y(train.rows());
  for (Eigen::Index i = 0; i < y.size(); ++i) y(i) = forward_transform(cfg.transform, train.target(i));
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
  qr.setThreshold(1e-12);
  if (qr.rank() < a.cols()) {
    std::string names;
    const auto perm = qr.colsPermutation().indices();
    for (Eigen::Index k = qr.rank(); k < a.cols(); ++k) {
      if (!names.empty()) names += ", ";
      names += monomial_name(m.exponents[static_cast<std::size_t>(perm(k))], cfg.features);
    }
    throw Unidentifiable("rsm_fit: monomial basis is rank deficient; collinear terms: " + names);
  }
  m.coefficients = qr.solve(y);
  auto metrics = [&](const Dataset& d) {
    const Eigen::VectorXd pred = m.predict(d.features(cfg.features));
    return signals::fit_metrics(std::span<const double>(pred.data(), static_cast<std::size_t>(pred.size())),
                                std::span<const double>(d.target.data(), static_cast<std::size_t>(d.rows())));
  };
  RsmResult r{m, {}, {}};
  r.training_metrics = metrics(train);
  r.metrics = metrics(validation);
  return r;
}

inline RsmResult rsm_fit(const Dataset& d, const RsmConfig& cfg = {}) {
  const auto s = split_dataset(d, cfg.train_fraction, cfg.seed);
  return rsm_fit(s.train, s.validation, cfg);
}

// ---- comparison harnesses --------------------------------------------------------

struct ComparisonRow {
  std::string name;
  std::vector<std::string> inputs;
  FitMetrics metrics;
  TrainReport report;
};

/// Three networks on (MPW, MPL, MPT, n), (MPW, MPL, n), (MPW, n), identical
/// seed and epoch budget, in that order.
inline std::vector<ComparisonRow> f2_ablation(const Dataset& d, MlpConfig cfg = {}) {
  const std::vector<std::vector<std::string>> sets{
      {"mpw", "mpl", "mpt", "n"}, {"mpw", "mpl", "n"}, {"mpw", "n"}};
  std::vector<ComparisonRow> rows;
  for (const auto& s : sets) {
    cfg.features = s;
    auto r = mlp_train_lm_split(d, cfg);
    std::string name = "F2(";
    for (std::size_t i = 0; i < s.size(); ++i) name += (i ? ", " : "") + s[i];
    rows.push_back({name + ")", s, r.report.metrics, r.report});
  }
  return rows;
}

struct ComposedComparison {
  std::vector<ComparisonRow> rows;  // F3 first, then F2(F1)
  MlpModel f3, f2;
};

/// F3 = MLP(TS, LP, n) against F2(F1(LP, n)): F1 is simulated per run on the
/// dataset's parameter columns (rows in time order), smoothed like the
/// measured signature, and fed to F2 = MLP(MPW, n). Both are scored on the
/// same validation rows.
inline ComposedComparison f3_vs_composed(const Dataset& d, const sysid::CompositeF1& f1, MlpConfig cfg = {}) {
  for (const char* c : {"t", "run", "lp", "ts", "n", "mpw"})
    if (!d.has(c)) throw InvalidArgument(std::string("f3_vs_composed: dataset lacks column '") + c + "'");
  const auto split = split_dataset(d, cfg.train_fraction, cfg.seed);

  cfg.features = {"ts", "lp", "n"};
  auto f3 = mlp_train_lm(split.train, cfg, &split.validation);
  cfg.features = {"mpw", "n"};
  auto f2 = mlp_train_lm(split.train, cfg, &split.validation);

  // F1 simulation per run on the full dataset.
  Dataset composed = d;
  const auto run = d.column("run");
  const auto t = d.column("t");
  const std::size_t mpw_col = d.index("mpw");
  Eigen::Index start = 0;
  while (start < d.rows()) {
    Eigen::Index end = start + 1;
    while (end < d.rows() && run(end) == run(start)) ++end;
    const Eigen::Index len = end - start;
    if (len < 2) throw InvalidArgument("f3_vs_composed: run shorter than two samples");
    const double dt = (t(end - 1) - t(start)) / static_cast<double>(len - 1);
    const Eigen::VectorXd lp = d.column("lp").segment(start, len);
    const Eigen::VectorXd n = d.column("n").segment(start, len);
    const signals::TimeSeries lps(t(start), dt, std::vector<double>(lp.data(), lp.data() + len));
    const signals::TimeSeries ns(t(start), dt, std::vector<double>(n.data(), n.data() + len));
    const auto sim = signals::moving_average(sysid::simulate_composite_f1(f1, lps, ns));
    for (Eigen::Index k = 0; k < len; ++k)
      composed.data(start + k, static_cast<Eigen::Index>(mpw_col)) = sim[static_cast<std::size_t>(k)];
    start = end;
  }
  const Dataset composed_val = composed.select_rows(split.validation_rows);
  const Eigen::VectorXd pred = mlp_predict(f2.model, composed_val);
  const auto m = signals::fit_metrics(std::span<const double>(pred.data(), static_cast<std::size_t>(pred.size())),
                                      std::span<const double>(composed_val.target.data(),
                                                              static_cast<std::size_t>(composed_val.rows())));
  ComposedComparison out;
  out.rows.push_back({"F3(ts, lp, n)", {"ts", "lp", "n"}, f3.report.metrics, f3.report});
  out.rows.push_back({"F2(F1(ts, lp, n))", {"lp", "n"}, m, f2.report});
  out.f3 = std::move(f3.model);
  out.f2 = std::move(f2.model);
  return out;
}

}  // namespace dedtwin::surrogate
