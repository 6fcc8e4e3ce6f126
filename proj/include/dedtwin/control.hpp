#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "dedtwin/csv.hpp"
#include "dedtwin/errors.hpp"
#include "dedtwin/optimize.hpp"
#include "dedtwin/plant.hpp"
#include "dedtwin/rng.hpp"
#include "dedtwin/signals.hpp"
#include "dedtwin/surrogate.hpp"

namespace dedtwin::control {

using signals::TimeSeries;

struct PidGains {
  double kp = 0.0;  // W per mm
  double ki = 0.0;  // W per mm s
  double kd = 0.0;  // W s per mm

  void validate() const {
    for (double g : {kp, ki, kd})
      if (!std::isfinite(g) || g < 0.0) throw InvalidArgument("pid gains must be finite and >= 0");
  }
};

inline const PidGains kReferenceGainsProperty{985.20, 3996.6, 19.250};
inline const PidGains kReferenceGainsSignature{1539.0, 5711.4, 31.092};

struct ActuatorLimits {
  double lo = 2000.0;  // W
  double hi = 4000.0;  // W
};

struct PidState {
  double integral = 0.0;
  double prev_error = 0.0;
  double filtered = 0.0;  // filtered measurement
  bool primed = false;
};

struct PidStep {
  PidState state;
  double command = 0.0;
  bool saturated = false;
};

/// Derivative filter time constant: a tenth of the derivative time kd/kp,
/// never shorter than one sample.
inline double derivative_filter_time(const PidGains& g, double dt) {
  const double td = g.kp > 0.0 ? g.kd / g.kp : g.kd;
  return std::max(td / 10.0, dt);
}

/// Parallel-form PID around `bias`: trapezoidal integral, derivative on the
/// filtered measurement, clamped output, integrator held while clamped.
inline PidStep pid_step(PidState s, double setpoint, double measurement, const PidGains& g, double dt,
                        const ActuatorLimits& lim, double bias = 0.0) {
  if (!(dt > 0.0)) throw InvalidArgument("pid_step: dt must be > 0");
  for (double v : {setpoint, measurement, g.kp, g.ki, g.kd, bias})
    if (!std::isfinite(v)) throw InvalidArgument("pid_step: non-finite input");
  const double e = setpoint - measurement;
  if (!s.primed) {
    s.prev_error = e;
    s.filtered = measurement;
    s.primed = true;
  }
  const double alpha = dt / (derivative_filter_time(g, dt) + dt);
  const double filtered = s.filtered + alpha * (measurement - s.filtered);
  const double derivative = -(filtered - s.filtered) / dt;
  const double integral = s.integral + 0.5 * dt * (e + s.prev_error);
  double u = bias + g.kp * e + g.ki * integral + g.kd * derivative;
  PidStep out;
  out.state = s;
  out.state.filtered = filtered;
  out.state.prev_error = e;
  if (u > lim.hi || u < lim.lo) {
    u = bias + g.kp * e + g.ki * s.integral + g.kd * derivative;
    out.saturated = u > lim.hi || u < lim.lo;
    out.command = std::clamp(u, lim.lo, lim.hi);
  } else {
    out.state.integral = integral;
    out.command = u;
  }
  return out;
}

// ---- F2 linearization --------------------------------------------------------------

struct Linearization {
  std::vector<std::string> features;
  std::vector<double> gradient;  // d prediction / d feature, raw units
  bool extrapolated = false;
};

/// Central differences of the RSM prediction with a 1e-4 step on the
/// normalized scale of each feature.
inline Linearization linearize_f2(const surrogate::RsmModel& f2, std::span<const double> op) {
  if (op.size() != f2.features.size()) throw InvalidArgument("linearize_f2: operating point dimension mismatch");
  Linearization lin;
  lin.features = f2.features;
  lin.extrapolated = !f2.normalizer.covers(op);
  std::vector<double> x(op.begin(), op.end());
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double h = 1e-4 * f2.normalizer.span(j);
    if (!(h > 0.0)) {
      lin.gradient.push_back(0.0);
      continue;
    }
    x[j] = op[j] + h;
    const double up = f2.predict(x);
    x[j] = op[j] - h;
    const double down = f2.predict(x);
    x[j] = op[j];
    lin.gradient.push_back((up - down) / (2.0 * h));
  }
  return lin;
}

// ---- loop configuration ------------------------------------------------------------

enum class Scenario { PropertyControlled, SignatureControlled };

inline const char* scenario_name(Scenario s) {
  return s == Scenario::PropertyControlled ? "property-controlled" : "signature-controlled";
}

struct SetpointChange {
  double start = 0.0;  // s
  double value = 0.0;  // mm
};

struct LoopConfig {
  Scenario scenario = Scenario::PropertyControlled;
  std::vector<SetpointChange> setpoints{{1.0, 5.0}, {6.0, 4.7}};
  double duration = 11.0;
  double seconds_per_layer = 2.0;
  double print_start = 1.0;
  int layer_count = 5;
  ActuatorLimits limits;
  double dt = signals::kDefaultSyncStep;
  bool translate_mpw_setpoint = false;  // signature scenario only

  void validate() const {
    if (setpoints.empty()) throw InvalidArgument("loop config: empty setpoint schedule");
    for (std::size_t i = 1; i < setpoints.size(); ++i)
      if (!(setpoints[i].start > setpoints[i - 1].start))
        throw InvalidArgument("loop config: setpoint times must be strictly increasing");
    if (!(duration > print_start)) throw InvalidArgument("loop config: duration must exceed print_start");
    if (!(dt > 0.0) || !(seconds_per_layer > 0.0)) throw InvalidArgument("loop config: dt and seconds_per_layer must be > 0");
    if (layer_count < 1) throw InvalidArgument("loop config: layer_count must be >= 1");
    if (!(limits.hi > limits.lo)) throw InvalidArgument("loop config: actuator limits are empty");
  }

  std::size_t samples() const { return static_cast<std::size_t>(std::llround(duration / dt)) + 1; }

  /// 0 before the print starts.
  int layer_at(double t) const {
    if (t < print_start) return 0;
    const int n = 1 + static_cast<int>(std::floor((t - print_start) / seconds_per_layer));
    return std::min(n, layer_count);
  }

  std::size_t window_at(double t) const {
    std::size_t w = 0;
    for (std::size_t i = 0; i < setpoints.size(); ++i)
      if (t >= setpoints[i].start) w = i;
    return w;
  }

  double setpoint_at(double t) const { return setpoints[window_at(t)].value; }

  double window_end(std::size_t i) const { return i + 1 < setpoints.size() ? setpoints[i + 1].start : duration; }
};

namespace detail {

inline std::vector<double> f2_inputs(const surrogate::RsmModel& f2, const plant::Outputs& o, int layer) {
  std::vector<double> x;
  for (const auto& f : f2.features) {
    if (f == "mpw") x.push_back(o.mpw);
    else if (f == "mpl") x.push_back(o.mpl);
    else if (f == "mpt") x.push_back(o.mpt);
    else if (f == "n") x.push_back(layer);
    else throw InvalidArgument("closed loop: F2 feature '" + f + "' is not a plant output");
  }
  return x;
}

inline double controlled_variable(Scenario s, const surrogate::RsmModel& f2, const plant::Outputs& o, int layer) {
  return s == Scenario::PropertyControlled ? f2.predict(f2_inputs(f2, o, layer)) : o.mpw;
}

}  // namespace detail

/// Laser power whose layer-1 equilibrium puts the scenario's controlled
/// variable at `target` (bisection inside the actuator limits).
inline double operating_power(const plant::Plant& p, Scenario s, const surrogate::RsmModel& f2, double target,
                              const ActuatorLimits& lim) {
  const double ts = p.config().ts_reference;
  auto value = [&](double lp) { return detail::controlled_variable(s, f2, p.equilibrium(lp, ts, 1), 1); };
  double lo = lim.lo, hi = lim.hi;
  const double vlo = value(lo), vhi = value(hi);
  const bool rising = vhi >= vlo;
  if ((rising && target <= vlo) || (!rising && target >= vlo)) return lo;
  if ((rising && target >= vhi) || (!rising && target <= vhi)) return hi;
  for (int i = 0; i < 100; ++i) {
    const double mid = 0.5 * (lo + hi);
    if ((value(mid) < target) == rising) lo = mid;
    else hi = mid;
  }
  return 0.5 * (lo + hi);
}

/// MPW value the plant settles at (layer 1) when F2 predicts `bw`.
inline double translate_setpoint(const plant::Plant& p, const surrogate::RsmModel& f2, double bw,
                                 const ActuatorLimits& lim) {
  const double lp = operating_power(p, Scenario::PropertyControlled, f2, bw, lim);
  return p.equilibrium(lp, p.config().ts_reference, 1).mpw;
}

struct ClosedLoopTrace {
  Scenario scenario = Scenario::PropertyControlled;
  TimeSeries setpoint, controlled, mpw, bw, lp, n, error, desired;
  double operating_lp = 0.0;

  csv::Table to_table() const {
    csv::Table t;
    t.header = {"t", "setpoint", "controlled", "mpw[mm]", "bw[mm]", "lp[W]", "n", "error"};
    std::vector<double> time(setpoint.size());
    for (std::size_t k = 0; k < time.size(); ++k) time[k] = setpoint.time(k);
    t.columns = {time, setpoint.values(), controlled.values(), mpw.values(), bw.values(),
                 lp.values(), n.values(), error.values()};
    return t;
  }
};

/// Closed loop on a plant instance. Before print_start the controller is
/// held at the operating-point power and the trace shows layer 0; from then
/// the PID moves laser power once per sample. `bw` is the F2 prediction.
inline ClosedLoopTrace run_closed_loop(const LoopConfig& cfg, const plant::PlantConfig& plant_cfg,
                                       const surrogate::RsmModel& f2, const PidGains& gains) {
  cfg.validate();
  gains.validate();
  if (plant_cfg.dt != cfg.dt) throw InvalidArgument("closed loop: plant and loop dt differ");
  plant::Plant p(plant_cfg);
  std::vector<SetpointChange> schedule = cfg.setpoints;
  if (cfg.scenario == Scenario::SignatureControlled && cfg.translate_mpw_setpoint)
    for (auto& s : schedule) s.value = translate_setpoint(p, f2, s.value, cfg.limits);
  const double lp0 = operating_power(p, cfg.scenario, f2, schedule.front().value, cfg.limits);
  p.reset(lp0, plant_cfg.ts_reference, 1);

  const std::size_t n = cfg.samples();
  std::vector<double> sp(n), cv(n), mpw(n), bw(n), lp(n), layer(n), err(n), desired(n);
  PidState state;
  for (std::size_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) * cfg.dt;
    const int scheduled = cfg.layer_at(t);
    const int active = std::max(1, scheduled);
    p.set_layer(active);
    const auto o = p.outputs();
    const double bw_pred = f2.predict(detail::f2_inputs(f2, o, active));
    const double c = cfg.scenario == Scenario::PropertyControlled ? bw_pred : o.mpw;
    const double s = schedule[cfg.window_at(t)].value;
    double command = lp0;
    if (t >= cfg.print_start) {
      const auto r = pid_step(state, s, c, gains, cfg.dt, cfg.limits, lp0);
      state = r.state;
      command = r.command;
    }
    p.step(command, cfg.dt);
    sp[k] = s;
    cv[k] = c;
    mpw[k] = o.mpw;
    bw[k] = bw_pred;
    lp[k] = command;
    layer[k] = scheduled;
    err[k] = s - c;
    desired[k] = cfg.setpoint_at(t);
  }
  auto ch = [&](std::vector<double> v, const char* unit) { return TimeSeries(0.0, cfg.dt, std::move(v), unit); };
  return {cfg.scenario, ch(sp, "mm"), ch(cv, "mm"), ch(mpw, "mm"), ch(bw, "mm"), ch(lp, "W"),
          ch(layer, ""), ch(err, "mm"), ch(desired, "mm"), lp0};
}

// ---- evaluation --------------------------------------------------------------------

struct WindowError {
  double start = 0.0, end = 0.0;
  double desired = 0.0;           // desired bead width, mm
  double setpoint = 0.0;          // in controlled-variable units
  double mean_abs_bw_error = 0.0;         // final 0.5 s
  double mean_abs_control_error = 0.0;    // final 0.5 s
  double max_abs_control_error = 0.0;     // final 0.5 s
};

inline constexpr double kSteadyWindow = 0.5;  // s

/// Steady-state errors over the last 0.5 s of every setpoint window.
inline std::vector<WindowError> window_errors(const ClosedLoopTrace& tr, const LoopConfig& cfg) {
  std::vector<WindowError> out;
  const double eps = 1e-9;
  for (std::size_t i = 0; i < cfg.setpoints.size(); ++i) {
    WindowError w;
    w.start = cfg.setpoints[i].start;
    w.end = cfg.window_end(i);
    w.desired = cfg.setpoints[i].value;
    const bool last = i + 1 == cfg.setpoints.size();
    std::size_t count = 0;
    for (std::size_t k = 0; k < tr.bw.size(); ++k) {
      const double t = tr.bw.time(k);
      if (t < w.end - kSteadyWindow - eps) continue;
      if (last ? t > w.end + eps : t >= w.end - eps) continue;
      w.setpoint = tr.setpoint[k];
      w.mean_abs_bw_error += std::abs(tr.bw[k] - w.desired);
      const double ce = std::abs(tr.controlled[k] - tr.setpoint[k]);
      w.mean_abs_control_error += ce;
      w.max_abs_control_error = std::max(w.max_abs_control_error, ce);
      ++count;
    }
    if (count == 0) throw InvalidArgument("window_errors: a setpoint window holds no samples");
    w.mean_abs_bw_error /= static_cast<double>(count);
    w.mean_abs_control_error /= static_cast<double>(count);
    out.push_back(w);
  }
  return out;
}

struct StabilityCheck {
  bool bounded = false;
  bool settled = false;
  double worst_final_error = 0.0;  // max |controlled - setpoint| over the final 0.5 s windows
  bool ok() const { return bounded && settled; }
};

/// Bounded: the controlled variable stays finite and within 10 mm of the
/// setpoint. Settled: every window ends within `tolerance` of its setpoint.
inline StabilityCheck stability_check(const ClosedLoopTrace& tr, const LoopConfig& cfg, double tolerance = 0.05) {
  StabilityCheck c;
  c.bounded = true;
  for (std::size_t k = 0; k < tr.controlled.size(); ++k)
    if (!(std::abs(tr.controlled[k] - tr.setpoint[k]) < 10.0)) c.bounded = false;
  for (const auto& w : window_errors(tr, cfg)) c.worst_final_error = std::max(c.worst_final_error, w.max_abs_control_error);
  c.settled = c.worst_final_error < tolerance;
  return c;
}

struct ScenarioReport {
  Scenario scenario;
  PidGains gains;
  ClosedLoopTrace trace;
  std::vector<WindowError> windows;
};

struct ScenarioComparison {
  std::vector<ScenarioReport> scenarios;  // property-controlled, then signature-controlled
  bool signature_worse_in_every_window = false;
};

/// Both scenarios on identically seeded plants. The desired bead width of the
/// signature scenario is the loop schedule itself.
inline ScenarioComparison compare_scenarios(LoopConfig cfg, const plant::PlantConfig& plant_cfg,
                                            const surrogate::RsmModel& f2, const PidGains& g1, const PidGains& g2) {
  ScenarioComparison out;
  for (auto [s, g] : {std::pair{Scenario::PropertyControlled, g1}, std::pair{Scenario::SignatureControlled, g2}}) {
    cfg.scenario = s;
    auto tr = run_closed_loop(cfg, plant_cfg, f2, g);
    auto w = window_errors(tr, cfg);
    out.scenarios.push_back({s, g, std::move(tr), std::move(w)});
  }
  out.signature_worse_in_every_window = true;
  for (std::size_t i = 0; i < out.scenarios[0].windows.size(); ++i)
    if (!(out.scenarios[1].windows[i].mean_abs_bw_error > out.scenarios[0].windows[i].mean_abs_bw_error))
      out.signature_worse_in_every_window = false;
  return out;
}

// ---- tuning ------------------------------------------------------------------------

/// One first-order-plus-delay path from laser power to the controlled variable.
struct LagBranch {
  double gain = 0.0;  // controlled unit per W
  double tw = 1.0;
  double td = 0.0;
};

struct LinearLoop {
  std::vector<LagBranch> branches;
  double dt = signals::kDefaultSyncStep;
  double horizon = 5.0;  // s
};

/// Linearized loop at the layer-1 operating point where the controlled
/// variable equals `target` (5 mm by default). Property control sees laser
/// power through both melt-pool width and melt-pool length.
inline LinearLoop linear_loop_model(const plant::PlantConfig& pc, const surrogate::RsmModel& f2, Scenario s,
                                    double target = 5.0, const ActuatorLimits& lim = {}) {
  LinearLoop loop;
  loop.dt = pc.dt;
  if (s == Scenario::SignatureControlled) {
    loop.branches.push_back({pc.true_g_lp.k_gain, pc.true_g_lp.tw, pc.true_g_lp.td});
  } else {
    plant::PlantConfig quiet = pc;
    quiet.noise = plant::NoiseStd::none();
    const plant::Plant p(quiet);
    const double lp = operating_power(p, s, f2, target, lim);
    const auto eq = p.equilibrium(lp, pc.ts_reference, 1);
    const auto lin = linearize_f2(f2, detail::f2_inputs(f2, eq, 1));
    for (std::size_t j = 0; j < lin.features.size(); ++j) {
      if (lin.features[j] == "mpw")
        loop.branches.push_back({pc.true_g_lp.k_gain * lin.gradient[j], pc.true_g_lp.tw, pc.true_g_lp.td});
      else if (lin.features[j] == "mpl")
        loop.branches.push_back({pc.mpl_slope * pc.mpt_lp_gain * lin.gradient[j], pc.mpt_tw, 0.0});
      else if (lin.features[j] == "mpt")
        loop.branches.push_back({pc.mpt_lp_gain * lin.gradient[j], pc.mpt_tw, 0.0});
    }
  }
  double slow = 0.0;
  for (const auto& b : loop.branches) slow = std::max(slow, b.tw + b.td);
  loop.horizon = std::max(5.0, 20.0 * slow);
  return loop;
}

struct StepMetrics {
  bool stable = false;
  double overshoot_percent = std::numeric_limits<double>::infinity();
  double rise_time = std::numeric_limits<double>::infinity();  // 10 % -> 90 %, s
  double final_error = std::numeric_limits<double>::infinity();
};

/// Unit setpoint step on the linearized loop (deviation variables, no
/// actuator limits). Stable means the tail stays within 2 % of the setpoint.
inline StepMetrics step_metrics(const LinearLoop& loop, const PidGains& g) {
  const double inf = std::numeric_limits<double>::infinity();
  const ActuatorLimits open{-inf, inf};
  std::vector<plant::detail::DelayedLag> lags;
  for (const auto& b : loop.branches) {
    lags.emplace_back(sysid::FirstOrderDelayModel{b.gain, b.tw, b.td}, loop.dt);
    lags.back().reset(0.0);
  }
  const auto n = static_cast<std::size_t>(std::llround(loop.horizon / loop.dt)) + 1;
  std::vector<double> y(n);
  PidState st;
  for (std::size_t k = 0; k < n; ++k) {
    double v = 0.0;
    for (const auto& l : lags) v += l.output();
    y[k] = v;
    if (!std::isfinite(v) || std::abs(v) > 1e3) return {};
    const auto r = pid_step(st, 1.0, v, g, loop.dt, open);
    st = r.state;
    for (auto& l : lags) l.advance(r.command);
  }
  StepMetrics m;
  const std::size_t tail = n - std::max<std::size_t>(n / 5, 1);
  double worst = 0.0;
  for (std::size_t k = tail; k < n; ++k) worst = std::max(worst, std::abs(y[k] - 1.0));
  m.final_error = worst;
  m.stable = worst <= 0.02;
  m.overshoot_percent = std::max(0.0, (*std::max_element(y.begin(), y.end()) - 1.0) * 100.0);
  auto crossing = [&](double level) {
    for (std::size_t k = 1; k < n; ++k)
      if (y[k] >= level) {
        const double f = (level - y[k - 1]) / (y[k] - y[k - 1]);
        return (static_cast<double>(k - 1) + f) * loop.dt;
      }
    return inf;
  };
  m.rise_time = crossing(0.9) - crossing(0.1);
  if (!std::isfinite(m.rise_time)) m.stable = false;
  return m;
}

struct TuneWeights {
  double overshoot = 1.0;  // per percent
  double rise_time = 10.0;  // per second
};

inline double tuning_objective(const StepMetrics& m, const TuneWeights& w) {
  if (!m.stable) return std::numeric_limits<double>::infinity();
  return w.overshoot * m.overshoot_percent + w.rise_time * m.rise_time;
}

struct TuneReport {
  PidGains gains;
  StepMetrics step;
  double objective = 0.0;
  std::vector<double> start_objectives;  // best objective reached from each start
};

/// Multi-start simplex search in log-gain space. Starts scatter around a
/// SIMC-style guess from the loop's aggregate gain, slowest lag and delay.
inline TuneReport tune_pid(const LinearLoop& loop, const TuneWeights& w = {}, std::uint64_t seed = 1, int starts = 5) {
  double k = 0.0, tw = 0.0, td = 0.0;
  for (const auto& b : loop.branches) {
    k += b.gain;
    tw = std::max(tw, b.tw);
    td = std::max(td, b.td);
  }
  if (!(std::abs(k) > 0.0)) throw TuningFailure("tune_pid: loop has zero static gain");
  const double theta = td + loop.dt;
  const double kp0 = tw / (std::abs(k) * 2.0 * theta);
  const double ki0 = kp0 / std::min(tw, 8.0 * theta);
  const double kd0 = 0.1 * kp0 * theta;
  auto objective = [&](const std::vector<double>& q) {
    const PidGains g{std::exp(q[0]), std::exp(q[1]), std::exp(q[2])};
    return tuning_objective(step_metrics(loop, g), w);
  };
  const CounterRng rng(seed);
  TuneReport best;
  best.objective = std::numeric_limits<double>::infinity();
  optimize::SimplexOptions opt;
  opt.max_evaluations = 600;
  opt.initial_step = 0.5;
  for (int s = 0; s < starts; ++s) {
    std::vector<double> q{std::log(kp0), std::log(ki0), std::log(kd0)};
    if (s > 0)
      for (std::size_t j = 0; j < 3; ++j) q[j] += 2.0 * rng.uniform(0x7e57 + static_cast<std::uint64_t>(s), j) - 1.0;
    const auto r = optimize::nelder_mead_restarted(objective, q, opt, 2);
    best.start_objectives.push_back(r.value);
    if (r.value < best.objective) {
      best.objective = r.value;
      best.gains = {std::exp(r.x[0]), std::exp(r.x[1]), std::exp(r.x[2])};
    }
  }
  if (!std::isfinite(best.objective))
    throw TuningFailure("tune_pid: no start produced a stable, settling closed loop (" + std::to_string(starts) +
                        " starts)");
  best.step = step_metrics(loop, best.gains);
  return best;
}

}  // namespace dedtwin::control
