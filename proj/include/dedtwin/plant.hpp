#pragma once

// Virtual hot-wire laser DED process. Laser power drives melt-pool width
// through a first-order-plus-delay response, layer number shifts it by a
// static gain, travel speed acts as a slower inverse-gain channel, and
// pre-heat power and wire feed have no effect. Melt-pool temperature follows
// layer number, lagged laser power and a slow thermal disturbance; melt-pool
// length is affine in temperature. Bead width is a latent property built from
// lagged width, length and layer number.

#include <cmath>
#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "dedtwin/dataset.hpp"
#include "dedtwin/errors.hpp"
#include "dedtwin/rng.hpp"
#include "dedtwin/signals.hpp"
#include "dedtwin/sysid.hpp"

namespace dedtwin::plant {

using signals::TimeSeries;
using sysid::FirstOrderDelayModel;

struct NoiseStd {
  double mpw = 0.05;    // mm
  double mpl = 0.4;     // mm
  double mpt = 10.0;    // C
  double bw = 0.01;     // mm
  double thermal = 100.0;  // C, stationary std of the thermal disturbance

  static NoiseStd none() { return {0.0, 0.0, 0.0, 0.0, 0.0}; }
};

struct LatentBw {
  double lag_s = 0.1;
  double mpw_weight = 1.0;
  double mpl_weight = 0.3;
  double layer_weight = -0.05;  // mm per layer
  double offset = -2.65;        // mm
};

struct PlantConfig {
  FirstOrderDelayModel true_g_lp{1.7e-3, 0.3, 0.06};  // W -> mm
  double true_g_n = -0.11;                             // mm per layer
  double mpw_offset = 0.0;                             // mm
  FirstOrderDelayModel true_g_ts{-0.1, 0.8, 0.3};      // mm per (mm/s)
  double ts_reference = 10.0;                          // mm/s
  double mpl_intercept = 3.7;                          // mm
  double mpl_slope = 0.005;                            // mm per C
  double mpt_base = 1250.0;                            // C at layer 1
  double mpt_per_layer = 60.0;                         // C per layer
  double mpt_lp_gain = 0.45;                           // C per W
  double mpt_lp_reference = 3000.0;                    // W
  double mpt_tw = 0.5;                                 // s
  double thermal_tau = 1.5;                            // s
  NoiseStd noise;
  LatentBw bw;
  std::uint64_t seed = 1;
  double dt = signals::kDefaultSyncStep;
  double pyrometer_floor = 500.0;  // C

  void validate() const {
    true_g_lp.validate();
    true_g_ts.validate();
    if (!(dt > 0.0)) throw InvalidArgument("plant config: dt must be > 0");
    for (double s : {noise.mpw, noise.mpl, noise.mpt, noise.bw, noise.thermal})
      if (!(s >= 0.0)) throw InvalidArgument("plant config: noise std must be >= 0");
    if (!(bw.lag_s > 0.0) || !(mpt_tw > 0.0) || !(thermal_tau > 0.0))
      throw InvalidArgument("plant config: lag time constants must be > 0");
    if (!std::isfinite(true_g_n)) throw InvalidArgument("plant config: true_g_n must be finite");
  }
};

struct Segment {
  std::optional<double> length_mm;
  std::optional<double> duration_s;
  double lp = 3000.0;  // W
  double ts = 10.0;    // mm/s
  double ep = 100.0;   // W
  double wfs = 2.0;    // m/min

  double duration() const {
    if (duration_s) return *duration_s;
    if (length_mm) return *length_mm / ts;
    throw InvalidArgument("segment: needs length_mm or duration_s");
  }
};

struct ExperimentProtocol {
  std::string name;
  std::vector<Segment> segments;
  int layers = 1;
  std::optional<double> seconds_per_layer;  // default: sum of segment durations

  void validate() const {
    if (segments.empty()) throw InvalidArgument("protocol: at least one segment required");
    if (layers < 1) throw InvalidArgument("protocol: layers must be >= 1");
    for (std::size_t i = 0; i < segments.size(); ++i) {
      const auto& s = segments[i];
      if (!(s.ts > 0.0)) throw InvalidArgument("protocol: segments[" + std::to_string(i) + "]: ts must be > 0");
      if (!(s.duration() > 0.0))
        throw InvalidArgument("protocol: segments[" + std::to_string(i) + "]: duration must be > 0");
    }
    if (seconds_per_layer && !(*seconds_per_layer > 0.0))
      throw InvalidArgument("protocol: seconds_per_layer must be > 0");
  }

  double layer_duration() const {
    if (seconds_per_layer) return *seconds_per_layer;
    double s = 0.0;
    for (const auto& seg : segments) s += seg.duration();
    return s;
  }

  // Segment active at time `tau` into a layer; the last one extends.
  const Segment& segment_at(double tau) const {
    double acc = 0.0;
    for (const auto& s : segments) {
      acc += s.duration();
      if (tau < acc) return s;
    }
    return segments.back();
  }
};

struct ExperimentRecord {
  TimeSeries lp, ts, ep, wfs, mpw, mpl, mpt, n, bw;

  std::vector<signals::NamedSeries> channels() const {
    return {{"lp", lp}, {"ts", ts}, {"ep", ep}, {"wfs", wfs}, {"mpw", mpw},
            {"mpl", mpl}, {"mpt", mpt}, {"n", n}, {"bw", bw}};
  }

  static ExperimentRecord from_channels(const std::vector<signals::NamedSeries>& c) {
    using signals::channel;
    return {channel(c, "lp"), channel(c, "ts"), channel(c, "ep"), channel(c, "wfs"), channel(c, "mpw"),
            channel(c, "mpl"), channel(c, "mpt"), channel(c, "n"), channel(c, "bw")};
  }
};

struct Outputs {
  double mpw = 0.0;  // mm, measured
  double mpl = 0.0;  // mm, measured
  double mpt = 0.0;  // C, measured; 0 marks an invalid reading
  double bw = 0.0;   // mm, latent property
  double mpw_true = 0.0;
  double mpl_true = 0.0;
};

namespace detail {

// Exact ZOH first-order lag followed by an integer-sample delay, stepped one
// sample at a time. Uses the same recurrence as sysid::simulate_first_order.
class DelayedLag {
public:
  DelayedLag() = default;
  DelayedLag(const FirstOrderDelayModel& m, double dt)
      : a_(std::exp(-dt / m.tw)), b_((1.0 - a_) * m.k_gain), d_(sysid::delay_samples(m.td, dt)) {}

  void reset(double y0) { hist_.assign(d_ + 1, y0); }
  double output() const { return hist_.front(); }
  void advance(double u) {
    hist_.push_back(a_ * hist_.back() + b_ * u);
    hist_.pop_front();
  }

private:
  double a_ = 0.0, b_ = 0.0;
  std::size_t d_ = 0;
  std::deque<double> hist_;
};

enum Stream : std::uint64_t { kMpw = 1, kMpl = 2, kMpt = 3, kBw = 4, kThermal = 5 };

}  // namespace detail

/// Stepwise plant. outputs() observes the current sample; step() returns that
/// observation and then advances the state with the given laser power.
class Plant {
public:
  explicit Plant(PlantConfig cfg) : cfg_(std::move(cfg)), rng_(cfg_.seed) {
    cfg_.validate();
    lp_lag_ = detail::DelayedLag(cfg_.true_g_lp, cfg_.dt);
    ts_lag_ = detail::DelayedLag(cfg_.true_g_ts, cfg_.dt);
    mpt_lag_ = detail::DelayedLag({cfg_.mpt_lp_gain, cfg_.mpt_tw, 0.0}, cfg_.dt);
    bw_lag_ = detail::DelayedLag({1.0, cfg_.bw.lag_s, 0.0}, cfg_.dt);
    thermal_phi_ = std::exp(-cfg_.dt / cfg_.thermal_tau);
    reset(3000.0, cfg_.ts_reference, 1);
  }

  const PlantConfig& config() const noexcept { return cfg_; }
  std::uint64_t sample_index() const noexcept { return k_; }
  int layer() const noexcept { return layer_; }

  /// Equilibrium at constant (lp, ts, layer); the sample counter restarts.
  void reset(double lp, double ts, int layer) {
    require_finite(lp, "laser power");
    require_finite(ts, "travel speed");
    layer_ = layer;
    ts_ = ts;
    k_ = 0;
    lp_lag_.reset(cfg_.true_g_lp.k_gain * lp);
    ts_lag_.reset(cfg_.true_g_ts.k_gain * (ts - cfg_.ts_reference));
    mpt_lag_.reset(cfg_.mpt_lp_gain * (lp - cfg_.mpt_lp_reference));
    bw_lag_.reset(mpw_true());
    thermal_ = cfg_.noise.thermal * rng_.normal(detail::kThermal, 0);
  }

  void set_layer(int n) { layer_ = n; }
  void set_travel_speed(double ts) {
    require_finite(ts, "travel speed");
    ts_ = ts;
  }

  Outputs outputs() const {
    Outputs o;
    o.mpw_true = mpw_true();
    const double mpt_true = cfg_.mpt_base + cfg_.mpt_per_layer * (layer_ - 1) + mpt_lag_.output() + thermal_;
    o.mpl_true = cfg_.mpl_intercept + cfg_.mpl_slope * mpt_true;
    o.mpw = o.mpw_true + cfg_.noise.mpw * rng_.normal(detail::kMpw, k_);
    o.mpl = o.mpl_true + cfg_.noise.mpl * rng_.normal(detail::kMpl, k_);
    const double mpt = mpt_true + cfg_.noise.mpt * rng_.normal(detail::kMpt, k_);
    o.mpt = mpt < cfg_.pyrometer_floor ? 0.0 : mpt;
    o.bw = cfg_.bw.mpw_weight * bw_lag_.output() + cfg_.bw.mpl_weight * o.mpl_true +
           cfg_.bw.layer_weight * layer_ + cfg_.bw.offset + cfg_.noise.bw * rng_.normal(detail::kBw, k_);
    return o;
  }

  Outputs step(double lp, double dt) {
    require_finite(lp, "laser power command");
    if (dt != cfg_.dt) throw InvalidArgument("plant step: dt does not match the configured step");
    const Outputs o = outputs();
    lp_lag_.advance(lp);
    ts_lag_.advance(ts_ - cfg_.ts_reference);
    mpt_lag_.advance(lp - cfg_.mpt_lp_reference);
    bw_lag_.advance(o.mpw_true);
    ++k_;
    thermal_ = thermal_phi_ * thermal_ + cfg_.noise.thermal * std::sqrt(1.0 - thermal_phi_ * thermal_phi_) *
                                             rng_.normal(detail::kThermal, k_);
    return o;
  }

  /// Noise-free steady state at constant inputs (thermal disturbance at 0).
  Outputs equilibrium(double lp, double ts, int layer) const {
    PlantConfig quiet = cfg_;
    quiet.noise = NoiseStd::none();
    Plant p(quiet);
    p.reset(lp, ts, layer);
    return p.outputs();
  }

private:
  static void require_finite(double v, const char* what) {
    if (!std::isfinite(v)) throw InvalidArgument(std::string("plant: non-finite ") + what);
  }

  double mpw_true() const {
    return lp_lag_.output() + (cfg_.true_g_n * layer_ + cfg_.mpw_offset) + ts_lag_.output();
  }

  PlantConfig cfg_;
  CounterRng rng_;
  detail::DelayedLag lp_lag_, ts_lag_, mpt_lag_, bw_lag_;
  double thermal_phi_ = 0.0;
  double thermal_ = 0.0;
  double ts_ = 10.0;
  int layer_ = 1;
  std::uint64_t k_ = 0;
};

/// Plant whose width dynamics are an identified composite model; everything
/// else keeps `base`. Noise-free unless `base` says otherwise.
inline PlantConfig config_from_f1(const sysid::CompositeF1& f1, PlantConfig base) {
  base.true_g_lp = f1.g_lp;
  base.true_g_n = f1.g_n;
  base.mpw_offset = f1.offset;
  return base;
}

/// Drives the plant through the protocol, sample by sample, starting at the
/// equilibrium of the first segment.
inline ExperimentRecord run_open_loop(const PlantConfig& cfg, const ExperimentProtocol& proto) {
  proto.validate();
  const double dt = cfg.dt;
  const double layer_s = proto.layer_duration();
  const auto total = static_cast<std::size_t>(std::llround(layer_s * proto.layers / dt));
  if (total < 2) throw InvalidArgument("protocol: shorter than two samples");
  std::vector<double> lp(total), ts(total), ep(total), wfs(total), n(total);
  for (std::size_t k = 0; k < total; ++k) {
    const double t = static_cast<double>(k) * dt;
    const int layer = std::min(proto.layers, 1 + static_cast<int>(std::floor(t / layer_s)));
    const auto& s = proto.segment_at(t - (layer - 1) * layer_s);
    lp[k] = s.lp;
    ts[k] = s.ts;
    ep[k] = s.ep;
    wfs[k] = s.wfs;
    n[k] = layer;
  }
  Plant plant(cfg);
  plant.reset(lp[0], ts[0], 1);
  std::vector<double> mpw(total), mpl(total), mpt(total), bw(total);
  for (std::size_t k = 0; k < total; ++k) {
    plant.set_layer(static_cast<int>(n[k]));
    plant.set_travel_speed(ts[k]);
    const auto o = plant.step(lp[k], dt);
    mpw[k] = o.mpw;
    mpl[k] = o.mpl;
    mpt[k] = o.mpt;
    bw[k] = o.bw;
  }
  auto ch = [&](std::vector<double> v, const char* unit) { return TimeSeries(0.0, dt, std::move(v), unit); };
  return {ch(lp, "W"), ch(ts, "mm_s"), ch(ep, "W"), ch(wfs, "m_min"), ch(mpw, "mm"),
          ch(mpl, "mm"), ch(mpt, "C"), ch(n, ""), ch(bw, "mm")};
}

/// Signature -> property samples. Signature channels are smoothed with the
/// window-8 moving average over the whole record; rows whose raw temperature
/// reading is invalid are dropped. Laser power, travel speed and layer number
/// are carried unfiltered for the direct parameter -> property model.
inline surrogate::Dataset make_f2_training_set(const ExperimentRecord& r, double run_id = 0.0) {
  const auto mpw = signals::moving_average(r.mpw);
  const auto mpl = signals::moving_average(r.mpl);
  const auto mpt = signals::moving_average(r.mpt);
  std::vector<std::size_t> keep;
  for (std::size_t k = 0; k < r.mpt.size(); ++k)
    if (r.mpt[k] > 0.0) keep.push_back(k);
  if (keep.empty()) throw EmptyDataset("make_f2_training_set: no sample has a valid temperature reading");
  surrogate::Dataset d;
  d.names = {"t", "run", "mpw", "mpl", "mpt", "n", "lp", "ts"};
  d.units = {"s", "", "mm", "mm", "C", "", "W", "mm_s"};
  d.data.resize(static_cast<Eigen::Index>(keep.size()), 8);
  d.target.resize(static_cast<Eigen::Index>(keep.size()));
  for (std::size_t i = 0; i < keep.size(); ++i) {
    const std::size_t k = keep[i];
    const auto row = static_cast<Eigen::Index>(i);
    d.data.row(row) << r.mpw.time(k), run_id, mpw[k], mpl[k], mpt[k], r.n[k], r.lp[k], r.ts[k];
    d.target(row) = r.bw[k];
  }
  return d;
}

// ---- bundled protocols ---------------------------------------------------------

inline ExperimentProtocol three_segment(std::string name, Segment a, Segment b, Segment c, int layers) {
  for (auto* s : {&a, &b, &c}) s->length_mm = 40.0;
  return {std::move(name), {a, b, c}, layers, std::nullopt};
}

/// Parts 1-4 are single beads, parts 5-8 five-layer walls with the same
/// parameter changes (travel speed, pre-heat power, wire feed, laser power).
inline ExperimentProtocol bundled_protocol(int part) {
  if (part < 1 || part > 8) throw InvalidArgument("bundled protocol: part must be 1..8");
  const int layers = part <= 4 ? 1 : 5;
  const int kind = (part - 1) % 4;
  const std::string name = (part <= 4 ? "bead-" : "wall-") + std::to_string(part);
  Segment base;  // LP 3000 W, TS 10 mm/s, EP 100 W, WFS 2 m/min
  Segment a = base, b = base, c = base;
  switch (kind) {
    case 0: a.ts = 10.0; b.ts = 12.0; c.ts = 8.0; break;
    case 1: a.ep = 50.0; b.ep = 150.0; c.ep = 50.0; break;
    case 2: a.wfs = 1.8; b.wfs = 2.2; c.wfs = 1.8; break;
    default: a.lp = 2800.0; b.lp = 3200.0; c.lp = 2800.0; break;
  }
  return three_segment(name, a, b, c, layers);
}

}  // namespace dedtwin::plant
