#include <cmath>
#include <complex>
#include <numeric>
#include <sstream>

#include <gtest/gtest.h>

#include "dedtwin/csv.hpp"
#include "dedtwin/rng.hpp"
#include "dedtwin/signals.hpp"

using namespace dedtwin;
using signals::TimeSeries;

namespace {

TimeSeries ramp(std::size_t n, double dt = 0.1) {
  std::vector<double> v(n);
  std::iota(v.begin(), v.end(), 0.0);
  return TimeSeries(0.0, dt, v);
}

TimeSeries noise(std::size_t n, std::uint64_t seed, double dt = 0.01) {
  const CounterRng rng(seed);
  std::vector<double> v(n);
  for (std::size_t k = 0; k < n; ++k) v[k] = rng.normal(7, k);
  return TimeSeries(0.0, dt, v);
}

}  // namespace

TEST(TimeSeries, RejectsBadConstruction) {
  EXPECT_THROW(TimeSeries(0.0, 0.0, {1.0}), InvalidArgument);
  EXPECT_THROW(TimeSeries(0.0, -1.0, {1.0}), InvalidArgument);
  EXPECT_THROW(TimeSeries(0.0, 0.1, {}), InvalidArgument);
  EXPECT_THROW(TimeSeries(0.0, 0.1, {1.0, NAN}), InvalidArgument);
}

TEST(TimeSeries, SliceKeepsAbsoluteTime) {
  const auto s = ramp(10, 0.5).slice(4, 7);
  EXPECT_EQ(s.size(), 3u);
  EXPECT_DOUBLE_EQ(s.t0(), 2.0);
  EXPECT_DOUBLE_EQ(s[0], 4.0);
  EXPECT_THROW(ramp(10).slice(5, 5), InvalidArgument);
}

TEST(MovingAverage, MatchesDirectWindowSums) {
  const auto x = noise(50, 3);
  for (std::size_t w : {1u, 2u, 5u, 8u}) {
    const auto y = signals::moving_average(x, w);
    const auto half = static_cast<std::ptrdiff_t>(w / 2);
    for (std::size_t k = 0; k < x.size(); ++k) {
      double s = 0.0;
      int c = 0;
      for (std::ptrdiff_t j = static_cast<std::ptrdiff_t>(k) - half;
           j <= static_cast<std::ptrdiff_t>(k) - half + static_cast<std::ptrdiff_t>(w) - 1; ++j)
        if (j >= 0 && j < static_cast<std::ptrdiff_t>(x.size())) {
          s += x[static_cast<std::size_t>(j)];
          ++c;
        }
      EXPECT_NEAR(y[k], s / c, 1e-12);
    }
  }
  EXPECT_THROW(signals::moving_average(x, 0), InvalidArgument);
  EXPECT_THROW(signals::moving_average(x, 51), InvalidArgument);
}

TEST(MovingAverage, PreservesConstantsAndLinearInterior) {
  const TimeSeries c(0.0, 0.03, std::vector<double>(40, 2.5));
  for (double v : signals::moving_average(c).values()) EXPECT_NEAR(v, 2.5, 1e-12);
  const auto r = signals::moving_average(ramp(40), 7);
  for (std::size_t k = 3; k < 37; ++k) EXPECT_NEAR(r[k], static_cast<double>(k), 1e-12);
}

TEST(Lowpass, ConstantPassesAndCutoffIsHalfPower) {
  const TimeSeries c(0.0, 0.03, std::vector<double>(30, -1.25));
  for (double v : signals::lowpass(c).values()) EXPECT_NEAR(v, -1.25, 1e-12);

  // Forward-backward one-pole: |H|^2 per pass at the cutoff is 1/sqrt(2).
  const double dt = 0.001, fc = 13.0;
  const double a = signals::lowpass_coefficient(fc, dt);
  const double w = 2.0 * M_PI * fc * dt;
  const std::complex<double> z = std::polar(1.0, -w);
  const double h2 = std::norm(a / (1.0 - (1.0 - a) * z));
  EXPECT_NEAR(h2 * h2, 0.5, 1e-9);
  EXPECT_THROW(signals::lowpass_coefficient(20.0, 0.03), InvalidArgument);
}

TEST(Lowpass, ZeroPhaseOnSymmetricPulse) {
  std::vector<double> v(201, 0.0);
  for (int k = 90; k <= 110; ++k) v[static_cast<std::size_t>(k)] = 1.0;
  const auto y = signals::lowpass(TimeSeries(0.0, 0.01, v), 5.0);
  for (std::size_t k = 60; k <= 100; ++k) EXPECT_NEAR(y[k], y[200 - k], 1e-3);
}

TEST(ResampleSync, OverlapAndLinearInterpolation) {
  const TimeSeries a(0.0, 0.1, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10});
  const TimeSeries b(0.25, 0.05, std::vector<double>(15, 3.0));
  const auto out = signals::resample_sync({a, b}, 0.03);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_DOUBLE_EQ(out[0].t0(), 0.25);
  EXPECT_LE(out[0].end_time(), 0.95 + 1e-9);
  for (std::size_t k = 0; k < out[0].size(); ++k) EXPECT_NEAR(out[0][k], 10.0 * out[0].time(k), 1e-9);
  EXPECT_THROW(signals::resample_sync({a, TimeSeries(5.0, 0.1, {1, 2})}), EmptyOverlap);
}

TEST(RemoveMean, ResidualMeanIsZeroAndMeanIsReported) {
  const auto x = noise(1000, 11);
  std::vector<double> shifted(x.values());
  for (auto& v : shifted) v += 1e6;
  const auto c = signals::remove_mean(x.with_values(shifted));
  const double m = std::accumulate(c.series.values().begin(), c.series.values().end(), 0.0) / 1000.0;
  EXPECT_NEAR(m, 0.0, 1e-9);
  EXPECT_NEAR(c.mean, 1e6, 1.0);
}

TEST(Normalize, RoundTripsAndFlagsConstants) {
  const auto x = noise(64, 5);
  const auto n = signals::normalize_minmax(x);
  for (double v : n.series.values()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  const auto back = signals::denormalize(n.series, n.min, n.max);
  for (std::size_t k = 0; k < x.size(); ++k) EXPECT_NEAR(back[k], x[k], 1e-12);
  EXPECT_TRUE(signals::normalize_minmax(TimeSeries(0, 1, {2.0, 2.0})).degenerate());
}

TEST(LogTransform, ReportsOffendingIndex) {
  try {
    signals::log_transform(TimeSeries(0.0, 1.0, {1.0, 2.0, 0.0}));
    FAIL();
  } catch (const DomainError& e) {
    EXPECT_EQ(e.index(), 2u);
  }
  const auto y = signals::exp_transform(signals::log_transform(TimeSeries(0.0, 1.0, {0.5, 4.0})));
  EXPECT_NEAR(y[1], 4.0, 1e-12);
}

TEST(FitMetrics, AgainstHandComputedValues) {
  const std::vector<double> actual{1, 2, 3, 4};
  const std::vector<double> pred{1.5, 2, 2.5, 4};
  const auto m = signals::fit_metrics(pred, actual);
  // sse = 0.5, sst = 5
  EXPECT_NEAR(m.rmse, std::sqrt(0.5 / 4), 1e-15);
  EXPECT_NEAR(m.mae, 0.25, 1e-15);
  EXPECT_NEAR(m.r2, 0.9, 1e-15);
  EXPECT_NEAR(m.bf_percent, 90.0, 1e-12);
  EXPECT_THROW(signals::fit_metrics(std::vector<double>{1, 1}, std::vector<double>{3, 3}), UndefinedMetric);
  EXPECT_THROW(signals::fit_metrics(std::vector<double>{1}, std::vector<double>{1, 2}), InvalidArgument);
}

TEST(FitMetrics, PerfectPredictionScoresHundred) {
  const auto x = noise(20, 2);
  EXPECT_DOUBLE_EQ(signals::fit_metrics(x, x).bf_percent, 100.0);
}

TEST(ConcatenateNonzero, DropsKeyZerosAcrossChannels) {
  const TimeSeries key(0.0, 0.1, {1, 0, 2, 0, 0, 3});
  const TimeSeries other(0.0, 0.1, {10, 11, 12, 13, 14, 15});
  const auto out = signals::concatenate_nonzero({other, key}, 1);
  EXPECT_EQ(out[0].values(), (std::vector<double>{10, 12, 15}));
  EXPECT_EQ(out[1].values(), (std::vector<double>{1, 2, 3}));
  EXPECT_THROW(signals::concatenate_nonzero({TimeSeries(0, 1, {0.0, 0.0})}, 0), EmptyDataset);
}

TEST(Csv, RoundTripsTimeSeriesWithUnits) {
  std::vector<signals::NamedSeries> ch{{"lp", TimeSeries(0.0, 0.03, {3000, 3100.5, 2999}, "W")},
                                       {"n", TimeSeries(0.0, 0.03, {1, 1, 2})}};
  std::stringstream ss;
  csv::write(ss, signals::to_table(ch));
  const auto back = signals::from_table(csv::read(ss));
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].name, "lp");
  EXPECT_EQ(back[0].series.unit(), "W");
  EXPECT_EQ(back[0].series.values(), ch[0].series.values());
  EXPECT_NEAR(back[1].series.dt(), 0.03, 1e-15);
}

TEST(Csv, RejectsMalformedInput) {
  std::stringstream a("x,y\n1,2\n2,3\n");
  EXPECT_THROW(signals::from_table(csv::read(a)), InvalidArgument);
  std::stringstream b("t,y\n0,1\n0.1,abc\n");
  EXPECT_THROW(csv::read(b), InvalidArgument);
  std::stringstream c("t,y\n0,1\n0.1,2\n0.5,3\n");
  EXPECT_THROW(signals::from_table(csv::read(c)), InvalidArgument);
}

TEST(Csv, FormatDoubleRoundTrips) {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-17, 123456789.125})
    EXPECT_EQ(csv::parse_double(csv::format_double(v), 1, 1), v);
}

TEST(CounterRng, DeterministicAndRoughlyStandardNormal) {
  const CounterRng a(42), b(42), c(43);
  EXPECT_EQ(a.normal(1, 5), b.normal(1, 5));
  EXPECT_NE(a.normal(1, 5), c.normal(1, 5));
  EXPECT_NE(a.normal(1, 5), a.normal(2, 5));
  double s = 0.0, s2 = 0.0;
  const int n = 20000;
  for (int k = 0; k < n; ++k) {
    const double x = a.normal(3, static_cast<std::uint64_t>(k));
    s += x;
    s2 += x * x;
  }
  EXPECT_NEAR(s / n, 0.0, 0.03);
  EXPECT_NEAR(s2 / n, 1.0, 0.05);
  for (int k = 0; k < 1000; ++k) {
    const double u = a.uniform(9, static_cast<std::uint64_t>(k));
    EXPECT_GT(u, 0.0);
    EXPECT_LT(u, 1.0);
  }
}
