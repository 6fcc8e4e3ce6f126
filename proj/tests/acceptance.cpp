// Acceptance runner: one PASS/FAIL line per criterion. With no arguments every
// criterion runs; otherwise only the numbered ones given on the command line.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "dedtwin/control.hpp"
#include "dedtwin/plant.hpp"
#include "dedtwin/rng.hpp"
#include "dedtwin/surrogate.hpp"
#include "dedtwin/sysid.hpp"
#include "dedtwin/vision.hpp"
#include "oracles.hpp"

using namespace dedtwin;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  double limit_s;
  std::function<Outcome()> run;
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

bool within_rel(double got, double want, double rel) { return std::abs(got - want) <= rel * std::abs(want); }

// ---- shared fixtures -------------------------------------------------------------

plant::ExperimentRecord wall_record(int part, bool noisy = true) {
  plant::PlantConfig cfg;
  cfg.seed = static_cast<std::uint64_t>(part);
  if (!noisy) cfg.noise = plant::NoiseStd::none();
  return plant::run_open_loop(cfg, plant::bundled_protocol(part));
}

surrogate::Dataset wall_dataset(int part) { return plant::make_f2_training_set(wall_record(part), part); }

surrogate::Dataset two_wall_dataset() { return surrogate::concatenate({wall_dataset(8), wall_dataset(5)}); }

// Composite F1 fitted on the first 70 % of a wall, scored on the last 30 %.
struct F1Fit {
  sysid::CompositeF1 model;
  signals::FitMetrics validation;
};

F1Fit fit_wall_f1(int part) {
  const auto rec = wall_record(part);
  const auto prep = sysid::prepare_composite(rec.lp, rec.n, rec.mpw);
  const std::size_t n = prep.lp.size();
  const auto split = static_cast<std::size_t>(std::llround(0.7 * static_cast<double>(n)));
  const auto fit =
      sysid::fit_composite_f1(prep.lp.slice(0, split), prep.layer.slice(0, split), prep.mpw.slice(0, split));
  const auto sim = sysid::simulate_composite_f1(fit.model, prep.lp, prep.layer);
  const auto val = signals::fit_metrics(sim.view().subspan(split), prep.mpw.view().subspan(split));
  return {sysid::restore_offset(fit.model, prep.applied), val};
}

struct LoopFixture {
  plant::PlantConfig plant;
  surrogate::RsmModel f2;
  control::PidGains g1, g2;
};

LoopFixture loop_fixture() {
  LoopFixture fx;
  fx.plant = plant::config_from_f1(fit_wall_f1(8).model, plant::PlantConfig{});
  fx.plant.noise = plant::NoiseStd::none();
  fx.f2 = surrogate::rsm_fit(two_wall_dataset()).model;
  fx.g1 = control::tune_pid(control::linear_loop_model(fx.plant, fx.f2, control::Scenario::PropertyControlled)).gains;
  fx.g2 = control::tune_pid(control::linear_loop_model(fx.plant, fx.f2, control::Scenario::SignatureControlled)).gains;
  return fx;
}

// ---- criteria --------------------------------------------------------------------

Outcome step_response() {
  const sysid::FirstOrderDelayModel m{1.0, 1.0, 0.5};
  const signals::TimeSeries u(0.0, 0.01, std::vector<double>(201, 1.0));
  const auto y = sysid::simulate_first_order(m, u, 0.0);
  const double v = y[150];
  return {std::abs(v - 0.632) <= 0.005, "y(1.5 s) = " + fmt(v)};
}

Outcome identification_recovery() {
  const sysid::FirstOrderDelayModel truth{0.8, 0.6, 0.21};
  const double dt = 0.03;
  // Random telegraph input held 0.3 to 1.5 s per level.
  auto telegraph = [&](std::uint64_t seed, std::size_t n) {
    const CounterRng rng(seed);
    std::vector<double> u(n);
    double level = 0.0;
    std::size_t next = 0, draw = 0;
    for (std::size_t k = 0; k < n; ++k) {
      if (k == next) {
        level = rng.uniform(0, draw) < 0.5 ? 0.0 : 1.0;
        next = k + 10 + static_cast<std::size_t>(40.0 * rng.uniform(1, draw));
        ++draw;
      }
      u[k] = level;
    }
    return signals::TimeSeries(0.0, dt, std::move(u));
  };
  const auto u_fit = telegraph(11, 800);
  const auto u_val = telegraph(12, 800);
  const auto y_clean = sysid::simulate_from_equilibrium(truth, u_fit);

  // 20 dB: noise power one hundredth of the mean-removed signal power.
  const auto centered = signals::remove_mean(y_clean).series;
  double power = 0.0;
  for (double v : centered.values()) power += v * v;
  const double sigma = std::sqrt(power / static_cast<double>(centered.size()) / 100.0);
  const CounterRng noise(21);
  std::vector<double> yn(y_clean.values());
  for (std::size_t k = 0; k < yn.size(); ++k) yn[k] += sigma * noise.normal(0, k);
  const auto y_noisy = y_clean.with_values(std::move(yn));

  const auto noisy = sysid::fit_first_order(u_fit, y_noisy).model;
  const auto clean = sysid::fit_first_order(u_fit, y_clean).model;
  const auto val = signals::fit_metrics(sysid::simulate_from_equilibrium(noisy, u_val),
                                        sysid::simulate_from_equilibrium(truth, u_val));
  const bool noisy_ok = within_rel(noisy.k_gain, 0.8, 0.1) && within_rel(noisy.tw, 0.6, 0.1) &&
                        within_rel(noisy.td, 0.21, 0.1);
  const bool clean_ok = within_rel(clean.k_gain, 0.8, 0.01) && within_rel(clean.tw, 0.6, 0.01) &&
                        within_rel(clean.td, 0.21, 0.01);
  return {noisy_ok && clean_ok && val.bf_percent >= 90.0,
          "noisy (" + fmt(noisy.k_gain) + ", " + fmt(noisy.tw) + ", " + fmt(noisy.td) + "), clean (" +
              fmt(clean.k_gain) + ", " + fmt(clean.tw) + ", " + fmt(clean.td) + "), BF " + fmt(val.bf_percent)};
}

Outcome composite_gn() {
  const auto f = fit_wall_f1(8);
  return {std::abs(f.model.g_n + 0.11) <= 0.02,
          "g_n = " + fmt(f.model.g_n) + " mm/layer, validation BF " + fmt(f.validation.bf_percent)};
}

Outcome mlp_correctness() {
  // Jacobian against central differences on random networks and inputs.
  double worst = 0.0;
  const std::vector<std::vector<int>> shapes{{4, 8, 16, 32, 16, 8, 4, 1}, {3, 8, 16, 32, 16, 8, 4, 1},
                                             {2, 8, 16, 32, 16, 8, 4, 1}, {4, 6, 5, 1}};
  int configs = 0;
  for (std::uint64_t seed = 1; seed <= 24; ++seed) {
    const auto& sizes = shapes[seed % shapes.size()];
    auto acts = surrogate::default_activations();
    if (sizes.size() != 8)
      acts = {surrogate::Activation::Sigmoid, surrogate::Activation::Relu, surrogate::Activation::Linear};
    const auto m = surrogate::mlp_init(sizes, acts, seed);
    const CounterRng rng(1000 + seed);
    Eigen::MatrixXd xn(8, sizes.front());
    for (Eigen::Index i = 0; i < xn.size(); ++i) xn(i) = rng.uniform(0, static_cast<std::uint64_t>(i));
    const Eigen::MatrixXd j = surrogate::mlp_jacobian(m, xn);
    const Eigen::MatrixXd fd = oracle::mlp_jacobian_fd(m, xn);
    worst = std::max(worst, (j - fd).norm() / fd.norm());
    ++configs;
  }
  const auto d = two_wall_dataset();
  const auto r = surrogate::mlp_train_lm_split(d, {});
  bool monotone = true;
  const auto& h = r.report.loss_history;
  for (std::size_t i = 1; i < h.size(); ++i) monotone = monotone && h[i] <= h[i - 1];
  return {configs >= 20 && worst <= 1e-4 && monotone && d.rows() >= 4000 && r.report.epochs_run <= 200 &&
              r.report.metrics.r2 >= 0.98,
          std::to_string(configs) + " Jacobians, worst relative error " + fmt(worst, 3) + "; monotone " +
              (monotone ? "yes" : "no") + "; " + std::to_string(d.rows()) + " rows, " +
              std::to_string(r.report.epochs_run) + " epochs, validation R2 " + fmt(r.report.metrics.r2)};
}

Outcome ablation_ordering() {
  const auto rows = surrogate::f2_ablation(wall_dataset(8));
  const double a = rows[0].metrics.r2, b = rows[1].metrics.r2, c = rows[2].metrics.r2;
  return {a >= b && b - c >= 0.05, "R2 " + fmt(a) + " / " + fmt(b) + " / " + fmt(c)};
}

Outcome composed_ordering() {
  const auto c = surrogate::f3_vs_composed(wall_dataset(8), fit_wall_f1(8).model);
  const double f3 = c.rows[0].metrics.r2, composed = c.rows[1].metrics.r2;
  return {composed - f3 >= 0.05, "R2 F3 " + fmt(f3) + ", F2(F1) " + fmt(composed)};
}

Outcome rsm_exact() {
  const CounterRng rng(77);
  surrogate::Dataset d;
  d.names = {"a", "b", "c"};
  d.units = {"", "", ""};
  d.data.resize(300, 3);
  d.target.resize(300);
  for (Eigen::Index i = 0; i < 300; ++i) {
    const auto k = static_cast<std::uint64_t>(i);
    const double a = 2.0 * rng.uniform(1, k), b = -1.0 + 3.0 * rng.uniform(2, k), c = 5.0 * rng.uniform(3, k);
    d.data.row(i) << a, b, c;
    d.target(i) = 1.0 - 0.4 * a + 0.25 * b * c - 0.03 * a * a * b + 0.02 * c * c * c - 0.1 * b * b * b;
  }
  surrogate::RsmConfig cfg;
  cfg.features = d.names;
  cfg.transform = surrogate::OutputTransform::Identity;
  const auto r = surrogate::rsm_fit(d, cfg);
  const auto s = surrogate::split_dataset(d, cfg.train_fraction, cfg.seed);
  const Eigen::MatrixXd x = s.train.features(cfg.features);
  const Eigen::MatrixXd a =
      surrogate::monomial_matrix(surrogate::MinMax::fit(x).apply(x), surrogate::monomial_exponents(3, 3));
  const double diff = (r.model.coefficients - oracle::pinv_solve(a, s.train.target)).cwiseAbs().maxCoeff();
  return {std::abs(r.metrics.r2 - 1.0) <= 1e-9 && diff <= 1e-9,
          "1 - R2 = " + fmt(1.0 - r.metrics.r2, 3) + ", coefficient gap " + fmt(diff, 3)};
}

Outcome vision_oracles() {
  int mismatches = 0;
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    const auto mask = oracle::random_mask(seed);
    const double di = vision::largest_inscribed_circle(mask), de = vision::smallest_enclosing_circle(mask);
    const double gi = oracle::inscribed_diameter(mask), ge = oracle::enclosing_diameter(mask);
    const double e = std::max(std::abs(di - gi), std::abs(de - ge));
    worst = std::max(worst, e);
    if (e > 1.0) ++mismatches;
  }
  const auto img = vision::synthetic_ellipse(160, 100, 79.5, 49.5, 40.0, 20.0);
  const auto g = vision::extract_geometry(img, vision::CropRect::full(img), 1.0);
  const bool ellipse_ok = g.valid && std::abs(g.mpw - 40.0) <= 1.0 && std::abs(g.mpl - 80.0) <= 1.0;
  return {mismatches == 0 && ellipse_ok, "50 masks, worst diameter gap " + fmt(worst, 3) + " px; ellipse MPW " +
                                             fmt(g.mpw) + ", MPL " + fmt(g.mpl) + " px"};
}

Outcome closed_loop_tracking() {
  const auto fx = loop_fixture();
  const control::LoopConfig cfg;
  const auto tr = control::run_closed_loop(cfg, fx.plant, fx.f2, fx.g1);
  double worst = 0.0;
  for (const auto& w : control::window_errors(tr, cfg)) worst = std::max(worst, w.max_abs_control_error);
  return {worst < 0.05, "max |BW - setpoint| over final 0.5 s = " + fmt(worst, 3) + " mm"};
}

Outcome scenario_comparison() {
  const auto fx = loop_fixture();
  auto seeded = fx.plant;
  seeded.noise = plant::NoiseStd{};
  seeded.seed = 4;
  const auto cmp = control::compare_scenarios(control::LoopConfig{}, seeded, fx.f2, fx.g1, fx.g2);
  std::string detail;
  for (std::size_t i = 0; i < cmp.scenarios[0].windows.size(); ++i)
    detail += (i ? "; " : "") + std::string("window ") + std::to_string(i + 1) + ": " +
              fmt(cmp.scenarios[1].windows[i].mean_abs_bw_error, 3) + " vs " +
              fmt(cmp.scenarios[0].windows[i].mean_abs_bw_error, 3) + " mm";
  return {cmp.signature_worse_in_every_window, detail};
}

Outcome reference_gains() {
  const auto fx = loop_fixture();
  bool ok = true;
  std::string detail;
  for (auto [s, g] : {std::pair{control::Scenario::PropertyControlled, control::kReferenceGainsProperty},
                      std::pair{control::Scenario::SignatureControlled, control::kReferenceGainsSignature}}) {
    control::LoopConfig cfg;
    cfg.scenario = s;
    const auto c = control::stability_check(control::run_closed_loop(cfg, fx.plant, fx.f2, g), cfg);
    ok = ok && c.ok();
    detail += std::string(detail.empty() ? "" : "; ") + control::scenario_name(s) + (c.bounded ? " bounded" : " unbounded") +
              ", final error " + fmt(c.worst_final_error, 3);
  }
  return {ok, detail};
}

// ---- determinism -----------------------------------------------------------------

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    files[fs::relative(e.path(), dir).string()] = s.str();
  }
  return files;
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string("\"") + DEDTWIN_CLI + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  return std::system(cmd.c_str());
}

Outcome cli_determinism() {
  const fs::path root = fs::path(DEDTWIN_WORK_DIR) / "determinism";
  fs::remove_all(root);
  fs::create_directories(root / "frames");
  for (int i = 0; i < 3; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "frame_%04d.pgm", i);
    vision::write_pgm_file((root / "frames" / name).string(),
                           vision::synthetic_ellipse(96, 64, 47.5, 31.5, 20.0 + 5.0 * i, 10.0 + 2.0 * i));
  }
  const std::string cfg = DEDTWIN_CONFIG_DIR;
  const std::string r = root.string();
  // Each command reads only fixed inputs, so both runs see the same manifest.
  const std::vector<std::pair<std::string, std::string>> commands{
      {"generate", "--seed 3 --config " + cfg + "/plant.json generate --protocol " + cfg +
                       "/protocols/wall-8.json --protocol " + cfg + "/protocols/wall-5.json --dataset"},
      {"identify", "identify --record " + r + "/ref/wall-8.csv --structure composite"},
      {"identify-all", "identify --record " + r + "/ref/wall-8.csv --all"},
      {"train-rsm", "train --dataset " + r + "/ref/dataset.csv --model rsm"},
      {"train-mlp", "train --dataset " + r + "/ref/dataset.csv --model mlp --epochs 3"},
      {"control", "--config " + cfg + "/loop.json control --f2 " + r + "/ref/rsm.json --f1 " + r + "/ref/model.json"},
      {"control-table4", "control --f2 " + r + "/ref/rsm.json --gains-from " + cfg + "/table4.json"},
      {"vision", "vision --frames " + r + "/frames --scale 0.05"},
  };
  // Reference inputs for the downstream commands.
  if (run_cli("--out " + r + "/ref --seed 3 --config " + cfg + "/plant.json generate --protocol " + cfg +
                  "/protocols/wall-8.json --protocol " + cfg + "/protocols/wall-5.json --dataset",
              root / "ref.log") != 0 ||
      run_cli("--out " + r + "/ref identify --record " + r + "/ref/wall-8.csv --structure composite",
              root / "ref.log") != 0 ||
      run_cli("--out " + r + "/ref train --dataset " + r + "/ref/dataset.csv --model rsm", root / "ref.log") != 0)
    return {false, "could not prepare reference inputs"};

  std::vector<std::string> differing;
  std::size_t compared = 0;
  for (const auto& [name, args] : commands) {
    std::map<std::string, std::string> runs[2];
    for (int k = 0; k < 2; ++k) {
      const fs::path out = root / (name + "-" + std::to_string(k));
      if (run_cli("--out " + out.string() + " " + args, root / (name + ".log")) != 0)
        return {false, name + " exited nonzero"};
      runs[k] = snapshot(out);
    }
    compared += runs[0].size();
    if (runs[0] != runs[1] || runs[0].empty()) differing.push_back(name);
  }
  std::string detail = std::to_string(commands.size()) + " commands, " + std::to_string(compared) + " files";
  for (const auto& d : differing) detail += "; differs: " + d;
  return {differing.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria{
      {1, "first-order step response", 1.0, step_response},
      {2, "first-order identification recovery", 10.0, identification_recovery},
      {3, "composite layer gain recovery", 30.0, composite_gn},
      {4, "MLP Jacobian, monotone LM and plant fit", 120.0, mlp_correctness},
      {5, "signature ablation ordering", 180.0, ablation_ordering},
      {6, "composed model beats direct model", 180.0, composed_ordering},
      {7, "RSM exact cubic recovery", 5.0, rsm_exact},
      {8, "vision circle oracles", 30.0, vision_oracles},
      {9, "property-controlled tracking", 10.0, closed_loop_tracking},
      {10, "signature control misses the property", 10.0, scenario_comparison},
      {11, "published gain sets settle", 10.0, reference_gains},
      {12, "CLI determinism", 60.0, cli_determinism},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));

  int failures = 0;
  for (const auto& c : criteria) {
    if (!wanted.empty() && !wanted.contains(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs < c.limit_s;
    const bool pass = o.pass && in_time;
    if (!pass) ++failures;
    std::cout << (pass ? "PASS" : "FAIL") << " [" << c.id << "] " << c.name << ": " << o.detail << " ("
              << fmt(secs, 3) << " s of " << fmt(c.limit_s, 3) << " s" << (in_time ? "" : ", over budget") << ")"
              << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
