#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "dedtwin/csv.hpp"
#include "dedtwin/errors.hpp"
#include "dedtwin/rng.hpp"

namespace dedtwin::surrogate {

// Row-oriented sample table: named columns (features and auxiliary columns
// such as time and run id) plus the bead-width target.
struct Dataset {
  std::vector<std::string> names;
  std::vector<std::string> units;
  Eigen::MatrixXd data;  // rows = samples
  Eigen::VectorXd target;
  std::string target_name = "bw";
  std::string target_unit = "mm";

  Eigen::Index rows() const { return data.rows(); }

  std::size_t index(std::string_view name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return i;
    throw InvalidArgument("dataset: no column named '" + std::string(name) + "'");
  }

  bool has(std::string_view name) const {
    return std::find(names.begin(), names.end(), name) != names.end();
  }

  Eigen::VectorXd column(std::string_view name) const { return data.col(static_cast<Eigen::Index>(index(name))); }

  Eigen::MatrixXd features(const std::vector<std::string>& cols) const {
    Eigen::MatrixXd x(data.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t j = 0; j < cols.size(); ++j) x.col(static_cast<Eigen::Index>(j)) = column(cols[j]);
    return x;
  }

  Dataset select_rows(const std::vector<Eigen::Index>& idx) const {
    Dataset out{names, units, Eigen::MatrixXd(static_cast<Eigen::Index>(idx.size()), data.cols()),
                Eigen::VectorXd(static_cast<Eigen::Index>(idx.size())), target_name, target_unit};
    for (std::size_t r = 0; r < idx.size(); ++r) {
      out.data.row(static_cast<Eigen::Index>(r)) = data.row(idx[r]);
      out.target(static_cast<Eigen::Index>(r)) = target(idx[r]);
    }
    return out;
  }

  /// Checks the invariants needed before fitting on `cols`.
  void validate(const std::vector<std::string>& cols, bool positive_target) const {
    if (data.rows() == 0) throw EmptyDataset("dataset: no rows");
    if (data.rows() < static_cast<Eigen::Index>(cols.size()) + 1)
      throw InvalidArgument("dataset: fewer rows than features + 1");
    for (const auto& c : cols)
      if (!column(c).allFinite()) throw InvalidArgument("dataset: non-finite entry in column '" + c + "'");
    if (!target.allFinite()) throw InvalidArgument("dataset: non-finite target");
    if (positive_target)
      for (Eigen::Index r = 0; r < target.size(); ++r)
        if (!(target(r) > 0.0))
          throw DomainError("dataset: target must be positive before the log transform (row " +
                                std::to_string(r) + ")",
                            static_cast<std::size_t>(r));
  }
};

inline Dataset concatenate(const std::vector<Dataset>& parts) {
  if (parts.empty()) throw EmptyDataset("dataset: nothing to concatenate");
  Dataset out = parts.front();
  Eigen::Index total = 0;
  for (const auto& p : parts) {
    if (p.names != out.names) throw InvalidArgument("dataset: column sets differ");
    total += p.rows();
  }
  out.data.resize(total, static_cast<Eigen::Index>(out.names.size()));
  out.target.resize(total);
  Eigen::Index r = 0;
  for (const auto& p : parts) {
    out.data.middleRows(r, p.rows()) = p.data;
    out.target.segment(r, p.rows()) = p.target;
    r += p.rows();
  }
  return out;
}

struct Split {
  Dataset train, validation;
  std::vector<Eigen::Index> train_rows, validation_rows;
};

/// Seeded uniform partition (Fisher-Yates on a counter-based generator, so the
/// result does not depend on the standard library's shuffle).
inline Split split_dataset(const Dataset& d, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw InvalidArgument("split_dataset: train_fraction must lie in (0, 1)");
  const auto n = d.rows();
  const auto n_train = static_cast<Eigen::Index>(std::llround(train_fraction * static_cast<double>(n)));
  if (n - n_train < 2) throw InvalidArgument("split_dataset: fewer than two validation rows");
  if (n_train < 1) throw InvalidArgument("split_dataset: no training rows");
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  const CounterRng rng(seed);
  for (std::size_t i = perm.size() - 1; i > 0; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform(0x5b11, i) * static_cast<double>(i + 1));
    std::swap(perm[i], perm[std::min(j, i)]);
  }
  std::vector<Eigen::Index> tr(perm.begin(), perm.begin() + n_train), va(perm.begin() + n_train, perm.end());
  std::sort(tr.begin(), tr.end());
  std::sort(va.begin(), va.end());
  return {d.select_rows(tr), d.select_rows(va), tr, va};
}

inline csv::Table to_table(const Dataset& d) {
  csv::Table t;
  for (std::size_t c = 0; c < d.names.size(); ++c) {
    t.header.push_back(d.units[c].empty() ? d.names[c] : d.names[c] + "[" + d.units[c] + "]");
    const auto col = d.data.col(static_cast<Eigen::Index>(c));
    t.columns.emplace_back(col.data(), col.data() + col.size());
  }
  t.header.push_back(d.target_name + "[" + d.target_unit + "]");
  t.columns.emplace_back(d.target.data(), d.target.data() + d.target.size());
  return t;
}

/// The target is the column named `target` (bare name); all others are data.
inline Dataset from_table(const csv::Table& t, std::string_view target = "bw") {
  Dataset d;
  d.target_name = std::string(target);
  std::ptrdiff_t target_col = -1;
  for (std::size_t c = 0; c < t.header.size(); ++c) {
    auto [name, unit] = csv::split_name_unit(t.header[c]);
    if (name == target) {
      target_col = static_cast<std::ptrdiff_t>(c);
      d.target_unit = unit;
      continue;
    }
    d.names.push_back(name);
    d.units.push_back(unit);
  }
  if (target_col < 0) throw InvalidArgument("dataset csv: missing target column '" + std::string(target) + "'");
  const auto rows = static_cast<Eigen::Index>(t.rows());
  d.data.resize(rows, static_cast<Eigen::Index>(d.names.size()));
  d.target.resize(rows);
  Eigen::Index j = 0;
  for (std::size_t c = 0; c < t.header.size(); ++c) {
    const auto& col = t.columns[c];
    if (static_cast<std::ptrdiff_t>(c) == target_col) {
      d.target = Eigen::Map<const Eigen::VectorXd>(col.data(), rows);
      continue;
    }
    d.data.col(j++) = Eigen::Map<const Eigen::VectorXd>(col.data(), rows);
  }
  return d;
}

}  // namespace dedtwin::surrogate
