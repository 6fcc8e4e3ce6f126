#include <cmath>

#include <gtest/gtest.h>

#include "dedtwin/control.hpp"

using namespace dedtwin;
using namespace dedtwin::control;

namespace {

// bw = c0 + a mpw + b mpl + c n as a degree-3 surface with only linear terms.
surrogate::RsmModel linear_f2(double c0, double a, double b, double c) {
  surrogate::RsmModel m;
  m.features = {"mpw", "mpl", "n"};
  m.exponents = surrogate::monomial_exponents(3, 3);
  m.coefficients = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m.exponents.size()));
  m.coefficients(0) = c0;
  m.coefficients(1) = a;  // {1,0,0}
  m.coefficients(2) = b;  // {0,1,0}
  m.coefficients(3) = c;  // {0,0,1}
  m.normalizer = surrogate::MinMax{{0.0, 0.0, 0.0}, {1.0, 1.0, 1.0}};
  m.transform = surrogate::OutputTransform::Identity;
  return m;
}

plant::PlantConfig quiet_plant() {
  plant::PlantConfig c;
  c.noise = plant::NoiseStd::none();
  return c;
}

const ActuatorLimits kWide{-1e9, 1e9};

}  // namespace

TEST(Pid, ProportionalOnly) {
  const PidGains g{2.0, 0.0, 0.0};
  const auto r = pid_step({}, 1.0, 0.25, g, 0.1, kWide, 10.0);
  EXPECT_DOUBLE_EQ(r.command, 10.0 + 2.0 * 0.75);
  EXPECT_FALSE(r.saturated);
}

TEST(Pid, TrapezoidalIntegral) {
  const PidGains g{0.0, 1.0, 0.0};
  PidState s;
  const std::vector<double> meas{0.0, 0.5, 1.0, 1.0};
  double expected = 0.0, prev = 1.0;
  for (double m : meas) {
    const double e = 1.0 - m;
    expected += 0.5 * 0.1 * (e + prev);
    prev = e;
    const auto r = pid_step(s, 1.0, m, g, 0.1, kWide);
    s = r.state;
    EXPECT_NEAR(r.command, expected, 1e-15);
  }
}

TEST(Pid, NoDerivativeKickOnSetpointChange) {
  const PidGains g{0.0, 0.0, 5.0};
  PidState s;
  s = pid_step(s, 0.0, 1.0, g, 0.03, kWide).state;
  const auto r = pid_step(s, 10.0, 1.0, g, 0.03, kWide);
  EXPECT_DOUBLE_EQ(r.command, 0.0);
}

TEST(Pid, DerivativeOfARampApproachesSlope) {
  const PidGains g{1.0, 0.0, 0.1};
  PidState s;
  double cmd = 0.0, meas = 0.0;
  for (int k = 0; k < 400; ++k) {
    meas = 2.0 * k * 0.01;
    const auto r = pid_step(s, 0.0, meas, g, 0.01, kWide);
    s = r.state;
    cmd = r.command;
  }
  EXPECT_NEAR(cmd + meas, -0.2, 1e-9);
}

TEST(Pid, IntegratorHeldWhileSaturated) {
  const PidGains g{1.0, 10.0, 0.0};
  const ActuatorLimits lim{-1.0, 1.0};
  PidState s;
  for (int k = 0; k < 50; ++k) {
    const auto r = pid_step(s, 100.0, 0.0, g, 0.1, lim);
    s = r.state;
    EXPECT_TRUE(r.saturated);
    EXPECT_DOUBLE_EQ(r.command, 1.0);
  }
  EXPECT_DOUBLE_EQ(s.integral, 0.0);
  // Once the error reverses the output leaves the limit at once.
  const auto r = pid_step(s, 0.0, 0.5, g, 0.1, lim);
  EXPECT_FALSE(r.saturated);
  EXPECT_LT(r.command, 0.0);
}

TEST(Pid, CommandAlwaysWithinLimits) {
  const PidGains g{1539.0, 5711.4, 31.092};
  const ActuatorLimits lim;
  PidState s;
  for (int k = 0; k < 300; ++k) {
    const double meas = 5.0 + std::sin(0.3 * k) * 3.0;
    const auto r = pid_step(s, 5.0, meas, g, 0.03, lim, 3000.0);
    s = r.state;
    EXPECT_GE(r.command, lim.lo);
    EXPECT_LE(r.command, lim.hi);
  }
}

TEST(Pid, RejectsBadArguments) {
  EXPECT_THROW(pid_step({}, 1.0, 0.0, {1, 1, 1}, 0.0, kWide), InvalidArgument);
  EXPECT_THROW(pid_step({}, NAN, 0.0, {1, 1, 1}, 0.1, kWide), InvalidArgument);
  EXPECT_THROW((PidGains{-1, 0, 0}).validate(), InvalidArgument);
}

TEST(Linearize, MatchesAnalyticGradientOfACubic) {
  auto m = linear_f2(0.0, 0.0, 0.0, 0.0);
  // f = x0^2 x1 + 3 x2^3 on an identity normalizer
  for (std::size_t t = 0; t < m.exponents.size(); ++t) {
    if (m.exponents[t] == std::vector<int>{2, 1, 0}) m.coefficients(static_cast<Eigen::Index>(t)) = 1.0;
    if (m.exponents[t] == std::vector<int>{0, 0, 3}) m.coefficients(static_cast<Eigen::Index>(t)) = 3.0;
  }
  const std::vector<double> op{0.4, 0.7, 0.2};
  const auto lin = linearize_f2(m, op);
  EXPECT_NEAR(lin.gradient[0], 2.0 * 0.4 * 0.7, 1e-8);
  EXPECT_NEAR(lin.gradient[1], 0.16, 1e-8);
  // central difference on x2^3 carries exactly 3 * h^2 with h = 1e-4
  EXPECT_NEAR(lin.gradient[2], 9.0 * 0.04 + 3e-8, 1e-12);
  EXPECT_FALSE(lin.extrapolated);
  EXPECT_TRUE(linearize_f2(m, std::vector<double>{2.0, 0.5, 0.5}).extrapolated);
}

TEST(LoopConfig, ScheduleAndLayers) {
  const LoopConfig c;
  EXPECT_EQ(c.samples(), 368u);
  EXPECT_EQ(c.layer_at(0.5), 0);
  EXPECT_EQ(c.layer_at(1.0), 1);
  EXPECT_EQ(c.layer_at(3.1), 2);
  EXPECT_EQ(c.layer_at(10.9), 5);
  EXPECT_DOUBLE_EQ(c.setpoint_at(5.99), 5.0);
  EXPECT_DOUBLE_EQ(c.setpoint_at(6.0), 4.7);
  LoopConfig bad;
  bad.setpoints = {{2.0, 5.0}, {1.0, 4.0}};
  EXPECT_THROW(bad.validate(), InvalidArgument);
}

TEST(OperatingPower, HitsTheTargetAtEquilibrium) {
  const auto f2 = linear_f2(0.5, 1.0, 0.0, 0.0);
  const plant::Plant p(quiet_plant());
  const double lp = operating_power(p, Scenario::PropertyControlled, f2, 5.0, {});
  EXPECT_NEAR(p.equilibrium(lp, 10.0, 1).mpw + 0.5, 5.0, 1e-9);
  const double lp2 = operating_power(p, Scenario::SignatureControlled, f2, 5.0, {});
  EXPECT_NEAR(p.equilibrium(lp2, 10.0, 1).mpw, 5.0, 1e-9);
}

TEST(StepMetrics, PureIntegralOnAFastLagIsStable) {
  LinearLoop loop{{{1.0, 0.1, 0.0}}, 0.01, 5.0};
  const auto m = step_metrics(loop, {0.0, 2.0, 0.0});
  EXPECT_TRUE(m.stable);
  EXPECT_LT(m.overshoot_percent, 1e-9);  // real closed-loop poles
  EXPECT_GT(m.rise_time, 0.0);
  EXPECT_LT(m.rise_time, 2.0);
  EXPECT_FALSE(step_metrics(loop, {500.0, 0.0, 0.0}).stable);
}

TEST(Tuning, BeatsTheSimcStartAndRejectsZeroGain) {
  const LinearLoop loop{{{1.7e-3, 0.3, 0.06}}, 0.03, 6.0};
  const auto r = tune_pid(loop, {}, 1, 3);
  EXPECT_TRUE(std::isfinite(r.objective));
  EXPECT_TRUE(r.step.stable);
  for (double s : r.start_objectives) EXPECT_LE(r.objective, s);
  EXPECT_THROW(tune_pid(LinearLoop{{{0.0, 0.3, 0.0}}, 0.03, 5.0}), TuningFailure);
}

TEST(ClosedLoop, PropertyLoopTracksThroughAnExactF2) {
  const auto f2 = linear_f2(0.5, 1.0, 0.0, 0.0);
  const auto pc = quiet_plant();
  LoopConfig cfg;
  const PidGains gains{985.20, 3996.6, 19.250};
  const auto tr = run_closed_loop(cfg, pc, f2, gains);
  EXPECT_EQ(tr.setpoint.size(), cfg.samples());
  const auto check = stability_check(tr, cfg);
  EXPECT_TRUE(check.ok()) << check.worst_final_error;
  for (const auto& w : window_errors(tr, cfg)) EXPECT_LT(w.mean_abs_bw_error, 0.01);
  for (double v : tr.lp.values()) {
    EXPECT_GE(v, cfg.limits.lo);
    EXPECT_LE(v, cfg.limits.hi);
  }
}

TEST(ClosedLoop, SignatureLoopMissesTheLayerDependentProperty) {
  // F2 depends on the layer, which MPW control cannot see.
  const auto f2 = linear_f2(0.5, 1.0, 0.0, -0.05);
  const auto pc = quiet_plant();
  LoopConfig cfg;
  const auto g1 = tune_pid(linear_loop_model(pc, f2, Scenario::PropertyControlled), {}, 1, 2).gains;
  const auto g2 = tune_pid(linear_loop_model(pc, f2, Scenario::SignatureControlled), {}, 1, 2).gains;
  const auto cmp = compare_scenarios(cfg, pc, f2, g1, g2);
  EXPECT_TRUE(cmp.signature_worse_in_every_window);
  const auto csv = cmp.scenarios[0].trace.to_table();
  EXPECT_EQ(csv.header.front(), "t");
  EXPECT_EQ(csv.columns.front().size(), cfg.samples());
}

TEST(ClosedLoop, ReproducibleWithNoise) {
  const auto f2 = linear_f2(0.5, 1.0, 0.0, 0.0);
  plant::PlantConfig pc;
  LoopConfig cfg;
  const PidGains g{985.20, 3996.6, 19.250};
  const auto a = run_closed_loop(cfg, pc, f2, g);
  const auto b = run_closed_loop(cfg, pc, f2, g);
  EXPECT_EQ(a.lp.values(), b.lp.values());
  pc.dt = 0.01;
  EXPECT_THROW(run_closed_loop(cfg, pc, f2, g), InvalidArgument);
}
