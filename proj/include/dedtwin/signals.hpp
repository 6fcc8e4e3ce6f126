#pragma once

// Uniformly sampled signals and the preprocessing applied to process
// parameters and melt-pool signatures before modeling.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dedtwin/csv.hpp"
#include "dedtwin/errors.hpp"

namespace dedtwin::signals {

inline constexpr double kDefaultSyncStep = 0.03;     // s
inline constexpr std::size_t kDefaultSmoothingWindow = 8;
inline constexpr double kDefaultLowpassCutoff = 13.0;  // Hz

/// Scalar signal sampled at t0 + k*dt, k = 0..size()-1.
class TimeSeries {
public:
  TimeSeries(double t0, double dt, std::vector<double> values, std::string unit = {})
      : t0_(t0), dt_(dt), values_(std::move(values)), unit_(std::move(unit)) {
    if (!(dt_ > 0.0) || !std::isfinite(dt_))
      throw InvalidArgument("TimeSeries: dt must be positive and finite");
    if (!std::isfinite(t0_)) throw InvalidArgument("TimeSeries: t0 must be finite");
    if (values_.empty()) throw InvalidArgument("TimeSeries: at least one sample required");
    for (std::size_t k = 0; k < values_.size(); ++k)
      if (!std::isfinite(values_[k]))
        throw InvalidArgument("TimeSeries: non-finite sample at index " + std::to_string(k));
  }

  double t0() const noexcept { return t0_; }
  double dt() const noexcept { return dt_; }
  std::size_t size() const noexcept { return values_.size(); }
  const std::string& unit() const noexcept { return unit_; }
  const std::vector<double>& values() const& noexcept { return values_; }
  std::vector<double> values() && noexcept { return std::move(values_); }
  std::span<const double> view() const noexcept { return values_; }
  double operator[](std::size_t k) const { return values_[k]; }
  double time(std::size_t k) const noexcept { return t0_ + static_cast<double>(k) * dt_; }
  double end_time() const noexcept { return time(values_.size() - 1); }

  // Same grid and unit, new samples.
  TimeSeries with_values(std::vector<double> v) const {
    if (v.size() != values_.size())
      throw InvalidArgument("TimeSeries::with_values: length mismatch");
    return TimeSeries(t0_, dt_, std::move(v), unit_);
  }

  TimeSeries slice(std::size_t begin, std::size_t end) const {
    if (begin >= end || end > values_.size())
      throw InvalidArgument("TimeSeries::slice: empty or out-of-range slice");
    return TimeSeries(time(begin), dt_,
                      std::vector<double>(values_.begin() + static_cast<std::ptrdiff_t>(begin),
                                          values_.begin() + static_cast<std::ptrdiff_t>(end)),
                      unit_);
  }

  bool same_grid(const TimeSeries& o) const noexcept {
    return o.size() == size() && o.dt_ == dt_ && o.t0_ == t0_;
  }

  friend bool operator==(const TimeSeries&, const TimeSeries&) = default;

private:
  double t0_;
  double dt_;
  std::vector<double> values_;
  std::string unit_;
};

struct FitMetrics {
  double rmse = 0.0;
  double mae = 0.0;
  double r2 = 0.0;
  double bf_percent = 0.0;  // 100 * r2

  friend bool operator==(const FitMetrics&, const FitMetrics&) = default;
};

/// Centered moving average; windows that cross either end are truncated to
/// the available neighbors. For even windows the extra sample is taken from
/// the past side (k - w/2 .. k + w/2 - 1).
inline TimeSeries moving_average(const TimeSeries& s,
                                 std::size_t window = kDefaultSmoothingWindow) {
  const std::size_t n = s.size();
  if (window < 1 || window > n)
    throw InvalidArgument("moving_average: window must be in [1, length]");
  const auto& x = s.values();
  std::vector<double> prefix(n + 1, 0.0);
  for (std::size_t k = 0; k < n; ++k) prefix[k + 1] = prefix[k] + x[k];
  const auto half = static_cast<std::ptrdiff_t>(window / 2);
  std::vector<double> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(k) - half);
    const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(
        static_cast<std::ptrdiff_t>(n) - 1,
        static_cast<std::ptrdiff_t>(k) - half + static_cast<std::ptrdiff_t>(window) - 1);
    out[k] = (prefix[hi + 1] - prefix[lo]) / static_cast<double>(hi - lo + 1);
  }
  return s.with_values(std::move(out));
}

/// Smoothing coefficient of the one-pole section y += a (x - y) such that a
/// forward plus backward pass is 3 dB down at the cutoff.
inline double lowpass_coefficient(double cutoff_hz, double dt) {
  if (!(cutoff_hz > 0.0) || !(cutoff_hz < 0.5 / dt))
    throw InvalidArgument("lowpass: cutoff must lie in (0, Nyquist)");
  // Per-pass power gain at the cutoff is 1/sqrt(2); solve
  // a^2 = g (1 - 2(1-a) cos w + (1-a)^2) for a.
  const double g = 1.0 / std::numbers::sqrt2;
  const double w = 2.0 * std::numbers::pi * cutoff_hz * dt;
  const double q = 2.0 * g * (1.0 - std::cos(w));
  const double a = (-q + std::sqrt(q * q + 4.0 * (1.0 - g) * q)) / (2.0 * (1.0 - g));
  return std::min(a, 1.0);
}

/// Zero-phase first-order low-pass: exponential smoothing run forward, then
/// backward over the forward result. Each pass is seeded with its first input
/// so a constant signal passes unchanged.
inline TimeSeries lowpass(const TimeSeries& s, double cutoff_hz = kDefaultLowpassCutoff) {
  const double a = lowpass_coefficient(cutoff_hz, s.dt());
  std::vector<double> y(s.values());
  for (std::size_t k = 1; k < y.size(); ++k) y[k] = y[k - 1] + a * (y[k] - y[k - 1]);
  for (std::size_t k = y.size() - 1; k-- > 0;) y[k] = y[k + 1] + a * (y[k] - y[k + 1]);
  return s.with_values(std::move(y));
}

/// Linear interpolation of s at absolute time t; t is clamped to s's span.
inline double interpolate_at(const TimeSeries& s, double t) {
  const double pos = (t - s.t0()) / s.dt();
  if (pos <= 0.0) return s[0];
  const auto last = static_cast<double>(s.size() - 1);
  if (pos >= last) return s[s.size() - 1];
  const auto i = static_cast<std::size_t>(std::floor(pos));
  const double frac = pos - static_cast<double>(i);
  return s[i] + frac * (s[i + 1] - s[i]);
}

/// Resample every series onto a shared grid: latest start, shortest overlap,
/// step dt_target.
inline std::vector<TimeSeries> resample_sync(const std::vector<TimeSeries>& series,
                                             double dt_target = kDefaultSyncStep) {
  if (series.empty()) throw InvalidArgument("resample_sync: no series given");
  if (!(dt_target > 0.0)) throw InvalidArgument("resample_sync: dt_target must be positive");
  double start = series.front().t0();
  double stop = series.front().end_time();
  for (const auto& s : series) {
    start = std::max(start, s.t0());
    stop = std::min(stop, s.end_time());
  }
  const double tol = 1e-9 * dt_target;
  if (stop < start - tol) throw EmptyOverlap("resample_sync: inputs do not overlap in time");
  const auto n = static_cast<std::size_t>(std::floor((stop - start) / dt_target + 1e-9)) + 1;
  std::vector<TimeSeries> out;
  out.reserve(series.size());
  for (const auto& s : series) {
    std::vector<double> v(n);
    for (std::size_t k = 0; k < n; ++k)
      v[k] = interpolate_at(s, start + static_cast<double>(k) * dt_target);
    out.emplace_back(start, dt_target, std::move(v), s.unit());
  }
  return out;
}

struct Centered {
  TimeSeries series;
  double mean;
};

inline Centered remove_mean(const TimeSeries& s) {
  const auto& x = s.values();
  // two-pass mean keeps the residual mean at rounding level
  double m = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  double corr = 0.0;
  for (double v : x) corr += v - m;
  m += corr / static_cast<double>(x.size());
  std::vector<double> y(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) y[k] = x[k] - m;
  return {s.with_values(std::move(y)), m};
}

struct Normalized {
  TimeSeries series;
  double min;
  double max;
  bool degenerate() const noexcept { return min == max; }
};

inline Normalized normalize_minmax(const TimeSeries& s) {
  const auto [lo_it, hi_it] = std::minmax_element(s.values().begin(), s.values().end());
  const double lo = *lo_it, hi = *hi_it;
  std::vector<double> y(s.size(), 0.0);
  if (hi > lo)
    for (std::size_t k = 0; k < y.size(); ++k) y[k] = (s[k] - lo) / (hi - lo);
  return {s.with_values(std::move(y)), lo, hi};
}

inline TimeSeries denormalize(const TimeSeries& s, double min, double max) {
  std::vector<double> y(s.size());
  for (std::size_t k = 0; k < y.size(); ++k) y[k] = min + s[k] * (max - min);
  return s.with_values(std::move(y));
}

inline TimeSeries log_transform(const TimeSeries& s) {
  std::vector<double> y(s.size());
  for (std::size_t k = 0; k < y.size(); ++k) {
    if (!(s[k] > 0.0))
      throw DomainError("log_transform: nonpositive sample at index " + std::to_string(k), k);
    y[k] = std::log(s[k]);
  }
  return s.with_values(std::move(y));
}

inline TimeSeries exp_transform(const TimeSeries& s) {
  std::vector<double> y(s.size());
  for (std::size_t k = 0; k < y.size(); ++k) y[k] = std::exp(s[k]);
  return s.with_values(std::move(y));
}

inline FitMetrics fit_metrics(std::span<const double> predicted, std::span<const double> actual) {
  if (predicted.size() != actual.size())
    throw InvalidArgument("fit_metrics: length mismatch");
  const std::size_t n = actual.size();
  if (n < 2) throw InvalidArgument("fit_metrics: need at least two samples");
  const double mean = std::accumulate(actual.begin(), actual.end(), 0.0) / static_cast<double>(n);
  double sse = 0.0, sae = 0.0, sst = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double e = predicted[k] - actual[k];
    sse += e * e;
    sae += std::abs(e);
    sst += (actual[k] - mean) * (actual[k] - mean);
  }
  if (!(sst > 0.0)) throw UndefinedMetric("fit_metrics: actual series is constant, r2 undefined");
  FitMetrics m;
  m.rmse = std::sqrt(sse / static_cast<double>(n));
  m.mae = sae / static_cast<double>(n);
  m.r2 = 1.0 - sse / sst;
  m.bf_percent = 100.0 * m.r2;
  return m;
}

inline FitMetrics fit_metrics(const TimeSeries& predicted, const TimeSeries& actual) {
  return fit_metrics(predicted.view(), actual.view());
}

/// Drop every sample at which `key` is zero from all channels and splice the
/// remainder back together on the original step, starting at the key's t0.
inline std::vector<TimeSeries> concatenate_nonzero(const std::vector<TimeSeries>& channels,
                                                   std::size_t key) {
  if (key >= channels.size()) throw InvalidArgument("concatenate_nonzero: key out of range");
  const auto& ref = channels[key];
  for (const auto& c : channels)
    if (c.size() != ref.size() || c.dt() != ref.dt())
      throw InvalidArgument("concatenate_nonzero: channels are not synchronized");
  std::vector<std::vector<double>> kept(channels.size());
  for (std::size_t k = 0; k < ref.size(); ++k) {
    if (ref[k] == 0.0) continue;
    for (std::size_t c = 0; c < channels.size(); ++c) kept[c].push_back(channels[c][k]);
  }
  if (kept[key].empty()) throw EmptyDataset("concatenate_nonzero: key channel is all zero");
  std::vector<TimeSeries> out;
  for (std::size_t c = 0; c < channels.size(); ++c)
    out.emplace_back(ref.t0(), ref.dt(), std::move(kept[c]), channels[c].unit());
  return out;
}

// ---- CSV ------------------------------------------------------------------

struct NamedSeries {
  std::string name;
  TimeSeries series;
};

/// Reads `t,<name>[unit],...`. The step is inferred from the time column and
/// must be uniform to 1e-9 relative.
inline std::vector<NamedSeries> from_table(const csv::Table& table) {
  if (table.header.empty() || table.header.front().rfind('t', 0) != 0 ||
      csv::split_name_unit(table.header.front()).first != "t")
    throw InvalidArgument("time-series csv: first column must be 't'");
  const auto& t = table.columns.front();
  if (t.size() < 2) throw InvalidArgument("time-series csv: need at least two rows");
  const double dt = (t.back() - t.front()) / static_cast<double>(t.size() - 1);
  if (!(dt > 0.0)) throw InvalidArgument("time-series csv: time must increase");
  for (std::size_t k = 1; k < t.size(); ++k)
    if (std::abs((t[k] - t[k - 1]) - dt) > 1e-9 * dt * std::max<double>(1.0, static_cast<double>(k)))
      throw InvalidArgument("time-series csv: non-uniform sampling at row " + std::to_string(k + 2));
  std::vector<NamedSeries> out;
  for (std::size_t c = 1; c < table.header.size(); ++c) {
    auto [name, unit] = csv::split_name_unit(table.header[c]);
    out.push_back({name, TimeSeries(t.front(), dt, table.columns[c], unit)});
  }
  return out;
}

inline csv::Table to_table(const std::vector<NamedSeries>& channels) {
  if (channels.empty()) throw InvalidArgument("time-series csv: nothing to write");
  const auto& ref = channels.front().series;
  csv::Table table;
  table.header.push_back("t");
  std::vector<double> t(ref.size());
  for (std::size_t k = 0; k < t.size(); ++k) t[k] = ref.time(k);
  table.columns.push_back(std::move(t));
  for (const auto& c : channels) {
    if (!c.series.same_grid(ref))
      throw InvalidArgument("time-series csv: channel '" + c.name + "' is not on the shared grid");
    table.header.push_back(c.series.unit().empty() ? c.name : c.name + "[" + c.series.unit() + "]");
    table.columns.push_back(c.series.values());
  }
  return table;
}

inline const TimeSeries& channel(const std::vector<NamedSeries>& channels, std::string_view name) {
  for (const auto& c : channels)
    if (c.name == name) return c.series;
  throw InvalidArgument("missing channel '" + std::string(name) + "'");
}

}  // namespace dedtwin::signals
