// dedtwin: generate plant data, extract melt-pool geometry, identify F1,
// train F2/F3 surrogates and run the closed-loop comparison.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dedtwin/control.hpp"
#include "dedtwin/csv.hpp"
#include "dedtwin/json_io.hpp"
#include "dedtwin/plant.hpp"
#include "dedtwin/signals.hpp"
#include "dedtwin/surrogate.hpp"
#include "dedtwin/sysid.hpp"
#include "dedtwin/vision.hpp"
#include "manifest.hpp"

namespace fs = std::filesystem;
using namespace dedtwin;
using io::json;

namespace {

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  std::string config;
};

fs::path prepare_out(const Globals& g) {
  fs::path out(g.out);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw InvalidArgument("cannot create output directory " + out.string() + ": " + ec.message());
  return out;
}

std::vector<signals::NamedSeries> read_record(const std::string& path) {
  return signals::from_table(csv::read_file(path));
}

void write_series_csv(const fs::path& path, const std::vector<signals::NamedSeries>& ch) {
  csv::write_file(path.string(), signals::to_table(ch));
}

// ---- generate ---------------------------------------------------------------------------

struct GenerateArgs {
  std::vector<std::string> protocols;
  bool dataset = false;
};

int cmd_generate(const Globals& g, const GenerateArgs& a) {
  const auto out = prepare_out(g);
  cli::Manifest man("generate", out);
  plant::PlantConfig cfg;
  if (!g.config.empty()) {
    cfg = io::plant_config_from(io::read_file(g.config), g.config);
    man.config(g.config);
    man.input(g.config);
  }
  if (g.seed) cfg.seed = *g.seed;
  man.seed(cfg.seed);
  if (a.protocols.empty()) throw InvalidArgument("generate: at least one --protocol is required");
  std::vector<surrogate::Dataset> parts;
  for (std::size_t i = 0; i < a.protocols.size(); ++i) {
    const auto& path = a.protocols[i];
    man.input(path);
    auto proto = io::protocol_from(io::read_file(path), path);
    if (proto.name.empty()) proto.name = fs::path(path).stem().string();
    plant::PlantConfig run_cfg = cfg;
    run_cfg.seed = cfg.seed + i;  // independent noise per record
    const auto rec = plant::run_open_loop(run_cfg, proto);
    write_series_csv(man.output(proto.name + ".csv"), rec.channels());
    if (a.dataset) parts.push_back(plant::make_f2_training_set(rec, static_cast<double>(i)));
    std::cout << proto.name << ": " << rec.lp.size() << " samples\n";
  }
  if (a.dataset) {
    const auto d = surrogate::concatenate(parts);
    csv::write_file(man.output("dataset.csv").string(), surrogate::to_table(d));
    std::cout << "dataset: " << d.rows() << " rows\n";
  }
  man.option("dataset", a.dataset);
  man.write();
  return 0;
}

// ---- identify ---------------------------------------------------------------------------

struct IdentifyArgs {
  std::string record;
  std::string structure = "first-order";
  bool all = false;
  std::string input = "lp";
  std::string output = "mpw";
  std::optional<double> validation;
  int na = 2, nb = 2;
  std::optional<int> nk;
  std::size_t breakpoints = 5;
};

json centered_preprocessing(const signals::Centered& u, const signals::Centered& y) {
  return {{"steps", {"remove-mean"}}, {"input_mean", u.mean}, {"output_mean", y.mean}};
}

void write_prediction(const fs::path& path, const signals::TimeSeries& actual, const signals::TimeSeries& pred,
                      std::size_t split) {
  csv::Table t;
  t.header = {"t", "actual", "predicted", "validation"};
  t.columns.resize(4);
  for (std::size_t k = 0; k < actual.size(); ++k) {
    t.columns[0].push_back(actual.time(k));
    t.columns[1].push_back(actual[k]);
    t.columns[2].push_back(pred[k]);
    t.columns[3].push_back(k >= split ? 1.0 : 0.0);
  }
  csv::write_file(path.string(), t);
}

int cmd_identify(const Globals& g, const IdentifyArgs& a) {
  const auto out = prepare_out(g);
  cli::Manifest man("identify", out);
  man.input(a.record);
  man.seed(g.seed.value_or(0));
  man.option("structure", a.all ? "all" : a.structure);
  const auto rec = read_record(a.record);

  if (!a.all && a.structure == "composite") {
    const double vf = a.validation.value_or(0.3);
    man.option("validation", vf);
    const auto prep = sysid::prepare_composite(signals::channel(rec, "lp"), signals::channel(rec, "n"),
                                               signals::channel(rec, "mpw"));
    const std::size_t n = prep.lp.size();
    const auto split = static_cast<std::size_t>(std::llround(static_cast<double>(n) * (1.0 - vf)));
    if (split < 8 || n - split < 2) throw InvalidArgument("identify: not enough data for the validation split");
    const auto fit = sysid::fit_composite_f1(prep.lp.slice(0, split), prep.layer.slice(0, split),
                                             prep.mpw.slice(0, split));
    const auto pred = sysid::simulate_composite_f1(fit.model, prep.lp, prep.layer);
    const auto val = signals::fit_metrics(pred.view().subspan(split), prep.mpw.view().subspan(split));
    const auto absolute = sysid::restore_offset(fit.model, prep.applied);
    json pre{{"steps", {"concatenate-nonzero", "lowpass", "remove-mean"}},
             {"lowpass_hz", prep.applied.lowpass_hz},
             {"lp_mean", prep.applied.lp_mean},
             {"layer_mean", prep.applied.layer_mean},
             {"mpw_mean", prep.applied.mpw_mean},
             {"validation_fraction", vf}};
    const auto doc = io::model_document("composite", io::to_json(absolute),
                                        {{"g_lp.k_gain", "mm/W"}, {"g_lp.tw", "s"}, {"g_lp.td", "s"},
                                         {"g_n", "mm/layer"}, {"offset", "mm"}},
                                        fit.metrics, &val, pre);
    io::write_file(man.output("model.json").string(), doc);
    write_prediction(man.output("prediction.csv"), prep.mpw, pred, split);
    std::cout << "composite: K=" << fit.model.g_lp.k_gain << " tw=" << fit.model.g_lp.tw
              << " td=" << fit.model.g_lp.td << " g_n=" << fit.model.g_n << " BF(validation)=" << val.bf_percent
              << "\n";
    man.write();
    return 0;
  }

  const double vf = a.validation.value_or(0.5);
  man.option("validation", vf);
  man.option("input", a.input);
  man.option("output", a.output);
  const auto u = signals::remove_mean(signals::channel(rec, a.input));
  const auto y = signals::remove_mean(signals::channel(rec, a.output));
  const json pre = centered_preprocessing(u, y);

  if (a.all) {
    sysid::ComparisonOptions opt;
    opt.arx_na = a.na;
    opt.arx_nb = a.nb;
    opt.hw_breakpoints = a.breakpoints;
    const auto report = sysid::compare_models(u.series, y.series, vf, opt);
    csv::Table t;
    t.header = {"rank", "ok", "bf_validation", "bf_training", "rmse_validation"};
    t.columns.resize(5);
    json entries = json::array();
    for (std::size_t i = 0; i < report.size(); ++i) {
      const auto& e = report[i];
      t.columns[0].push_back(static_cast<double>(i + 1));
      t.columns[1].push_back(e.ok ? 1.0 : 0.0);
      t.columns[2].push_back(e.ok ? e.bf_validation : 0.0);
      t.columns[3].push_back(e.ok ? e.training.bf_percent : 0.0);
      t.columns[4].push_back(e.ok ? e.validation.rmse : 0.0);
      json j{{"rank", i + 1}, {"structure", sysid::structure_name(e.structure)}, {"ok", e.ok}};
      if (e.ok) {
        j["training"] = io::to_json(e.training);
        j["validation"] = io::to_json(e.validation);
      } else {
        j["error"] = e.error;
      }
      entries.push_back(j);
      std::cout << i + 1 << ". " << sysid::structure_name(e.structure) << ": "
                << (e.ok ? "BF " + std::to_string(e.bf_validation) : "failed: " + e.error) << "\n";
    }
    io::write_file(man.output("comparison.json").string(),
                   {{"validation_fraction", vf}, {"preprocessing", pre}, {"ranking", entries}});
    csv::write_file(man.output("comparison.csv").string(), t);
    man.write();
    return 0;
  }

  const std::size_t n = u.series.size();
  const auto split = static_cast<std::size_t>(std::llround(static_cast<double>(n) * (1.0 - vf)));
  if (split < 8 || n - split < 2) throw InvalidArgument("identify: not enough data for the validation split");
  const auto u_tr = u.series.slice(0, split), y_tr = y.series.slice(0, split);
  auto validation = [&](const signals::TimeSeries& p) {
    return signals::fit_metrics(p.view().subspan(split), y.series.view().subspan(split));
  };
  json doc;
  std::optional<signals::TimeSeries> pred;
  if (a.structure == "first-order") {
    const auto f = sysid::fit_first_order(u_tr, y_tr);
    pred = sysid::simulate_from_equilibrium(f.model, u.series);
    const auto v = validation(*pred);
    doc = io::model_document("first-order", io::to_json(f.model),
                             {{"k_gain", y.series.unit() + "/" + u.series.unit()}, {"tw", "s"}, {"td", "s"}},
                             f.metrics, &v, pre);
    std::cout << "first-order: K=" << f.model.k_gain << " tw=" << f.model.tw << " td=" << f.model.td
              << " BF(validation)=" << v.bf_percent << "\n";
  } else if (a.structure == "second-order") {
    const auto f = sysid::fit_second_order(u_tr, y_tr);
    pred = sysid::simulate_second_order(f.model, u.series);
    const auto v = validation(*pred);
    doc = io::model_document("second-order", io::to_json(f.model), {{"td", "s"}}, f.metrics, &v, pre);
    std::cout << "second-order: BF(validation)=" << v.bf_percent << "\n";
  } else if (a.structure == "arx") {
    int nk = a.nk.value_or(-1);
    if (nk < 0) nk = std::max<int>(1, static_cast<int>(sysid::delay_samples(sysid::fit_first_order(u_tr, y_tr).model.td, u.series.dt())));
    const auto f = sysid::fit_arx(u_tr, y_tr, a.na, a.nb, nk);
    pred = sysid::simulate_arx(f.model, u.series, y.series);
    const auto v = validation(*pred);
    doc = io::model_document("arx", io::to_json(f.model), {{"nk", "samples"}}, f.metrics, &v, pre);
    std::cout << "arx: BF(validation)=" << v.bf_percent << "\n";
  } else if (a.structure == "hammerstein-wiener") {
    sysid::HammersteinWienerOptions opt;
    opt.breakpoint_count = a.breakpoints;
    const auto f = sysid::fit_hammerstein_wiener(u_tr, y_tr, opt);
    pred = sysid::simulate_hammerstein_wiener(f.model, u.series);
    const auto v = validation(*pred);
    doc = io::model_document("hammerstein-wiener", io::to_json(f.model), {{"linear_block.tw", "s"}}, f.metrics, &v,
                             pre);
    std::cout << "hammerstein-wiener: BF(validation)=" << v.bf_percent << "\n";
  } else {
    throw InvalidArgument("identify: unknown structure '" + a.structure + "'");
  }
  io::write_file(man.output("model.json").string(), doc);
  write_prediction(man.output("prediction.csv"), y.series, *pred, split);
  man.write();
  return 0;
}

// ---- train ------------------------------------------------------------------------------

struct TrainArgs {
  std::string dataset;
  std::string model = "mlp";
  std::vector<std::string> features;
  std::string f1;
  int epochs = 200;
  std::string transform = "log";
};

json table_row(const surrogate::ComparisonRow& r) {
  return {{"model", r.name}, {"inputs", r.inputs}, {"metrics", io::to_json(r.metrics)},
          {"epochs_run", r.report.epochs_run}};
}

void write_metric_table(const fs::path& path, const std::vector<surrogate::ComparisonRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidArgument("cannot write " + path.string());
  out << "model,rmse[mm],mae[mm],r2\n";
  for (const auto& r : rows)
    out << '"' << r.name << "\"," << csv::format_double(r.metrics.rmse) << ',' << csv::format_double(r.metrics.mae)
        << ',' << csv::format_double(r.metrics.r2) << '\n';
}

int cmd_train(const Globals& g, const TrainArgs& a) {
  const auto out = prepare_out(g);
  cli::Manifest man("train", out);
  man.input(a.dataset);
  const std::uint64_t seed = g.seed.value_or(1);
  man.seed(seed);
  man.option("model", a.model);
  man.option("epochs", a.epochs);
  man.option("transform", a.transform);
  const auto data = surrogate::from_table(csv::read_file(a.dataset));
  const auto transform = io::transform_from(a.transform, "--transform");

  surrogate::MlpConfig mc;
  mc.seed = seed;
  mc.max_epochs = a.epochs;
  mc.transform = transform;
  if (a.epochs < 0 || a.epochs > 200) throw InvalidArgument("train: --epochs must lie in [0, 200]");

  auto write_mlp = [&](const std::string& name, const surrogate::TrainResult& r) {
    io::write_file(man.output(name + ".json").string(), io::to_json(r.model));
    io::write_file(man.output(name + "_report.json").string(), io::to_json(r.report));
  };

  try {
    if (a.model == "mlp" || a.model == "f3") {
      if (!a.features.empty()) mc.features = a.features;
      else if (a.model == "f3") mc.features = {"ts", "lp", "n"};
      man.option("features", mc.features);
      const auto r = surrogate::mlp_train_lm_split(data, mc);
      write_mlp(a.model, r);
      std::cout << a.model << ": R2(validation)=" << r.report.metrics.r2 << " epochs=" << r.report.epochs_run << "\n";
    } else if (a.model == "rsm") {
      surrogate::RsmConfig rc;
      rc.seed = seed;
      rc.transform = transform;
      if (!a.features.empty()) rc.features = a.features;
      man.option("features", rc.features);
      const auto r = surrogate::rsm_fit(data, rc);
      io::write_file(man.output("rsm.json").string(), io::to_json(r.model));
      io::write_file(man.output("rsm_report.json").string(),
                     {{"metrics", io::to_json(r.metrics)}, {"training_metrics", io::to_json(r.training_metrics)},
                      {"split_seed", seed}});
      std::cout << "rsm: R2(validation)=" << r.metrics.r2 << " RMSE=" << r.metrics.rmse << "\n";
    } else if (a.model == "ablation") {
      const auto rows = surrogate::f2_ablation(data, mc);
      json j = json::array();
      for (const auto& r : rows) j.push_back(table_row(r));
      io::write_file(man.output("ablation.json").string(), j);
      write_metric_table(man.output("ablation.csv"), rows);
      for (const auto& r : rows) std::cout << r.name << ": R2=" << r.metrics.r2 << "\n";
    } else if (a.model == "compare-f3") {
      if (a.f1.empty()) throw InvalidArgument("train: --model compare-f3 needs --f1 <composite model.json>");
      man.input(a.f1);
      const auto f1 = io::read_composite_document(io::read_file(a.f1), a.f1);
      const auto c = surrogate::f3_vs_composed(data, f1, mc);
      json j = json::array();
      for (const auto& r : c.rows) j.push_back(table_row(r));
      io::write_file(man.output("f3_comparison.json").string(), j);
      write_metric_table(man.output("f3_comparison.csv"), c.rows);
      io::write_file(man.output("f3.json").string(), io::to_json(c.f3));
      io::write_file(man.output("f2_mpw_n.json").string(), io::to_json(c.f2));
      for (const auto& r : c.rows) std::cout << r.name << ": R2=" << r.metrics.r2 << "\n";
    } else {
      throw InvalidArgument("train: unknown model '" + a.model + "'");
    }
  } catch (const surrogate::TrainingFailure& e) {
    io::write_file(man.output("best_iterate.json").string(), io::to_json(e.best()));
    man.write();
    throw;
  }
  man.write();
  return 0;
}

// ---- control ----------------------------------------------------------------------------

struct ControlArgs {
  std::string f2;
  std::string f1;
  std::string plant;
  std::string gains_from;
  bool tune = false;
};

json trace_summary(const control::ScenarioReport& s, const control::LoopConfig& cfg) {
  json w = json::array();
  for (const auto& x : s.windows) w.push_back(io::to_json(x));
  auto c = cfg;
  c.scenario = s.scenario;
  const auto st = control::stability_check(s.trace, c);
  return {{"scenario", control::scenario_name(s.scenario)},
          {"gains", io::to_json(s.gains)},
          {"operating_lp_W", s.trace.operating_lp},
          {"windows", w},
          {"stability", {{"bounded", st.bounded}, {"settled", st.settled}, {"worst_final_error", st.worst_final_error}}}};
}

int cmd_control(const Globals& g, const ControlArgs& a) {
  const auto out = prepare_out(g);
  cli::Manifest man("control", out);
  man.seed(g.seed.value_or(0));
  io::LoopDocument doc;
  if (!g.config.empty()) {
    man.config(g.config);
    man.input(g.config);
    doc = io::loop_from(io::read_file(g.config), g.config);
  }
  if (a.f2.empty()) throw InvalidArgument("control: --f2 <rsm.json> is required");
  man.input(a.f2);
  const auto f2 = io::rsm_from(io::read_file(a.f2), a.f2);

  plant::PlantConfig pc;
  if (!a.plant.empty()) {
    man.input(a.plant);
    pc = io::plant_config_from(io::read_file(a.plant), a.plant);
  } else {
    pc.noise = plant::NoiseStd::none();
  }
  if (g.seed) pc.seed = *g.seed;
  if (!a.f1.empty()) {
    man.input(a.f1);
    pc = plant::config_from_f1(io::read_composite_document(io::read_file(a.f1), a.f1), pc);
  }
  pc.dt = doc.loop.dt;

  std::optional<io::GainSet> gains = doc.gains;
  if (!a.gains_from.empty()) {
    man.input(a.gains_from);
    gains = io::gain_set_from(io::read_file(a.gains_from), a.gains_from);
  }
  json tuning = nullptr;
  if (a.tune || !gains) {
    io::GainSet tuned;
    tuning = json::object();
    for (auto s : {control::Scenario::PropertyControlled, control::Scenario::SignatureControlled}) {
      const auto loop = control::linear_loop_model(pc, f2, s, doc.loop.setpoints.front().value, doc.loop.limits);
      const auto r = control::tune_pid(loop, doc.weights, g.seed.value_or(1));
      (s == control::Scenario::PropertyControlled ? tuned.scenario1 : tuned.scenario2) = r.gains;
      tuning[control::scenario_name(s)] = {{"gains", io::to_json(r.gains)},
                                           {"overshoot_percent", r.step.overshoot_percent},
                                           {"rise_time_s", r.step.rise_time},
                                           {"objective", r.objective}};
      std::cout << "tuned " << control::scenario_name(s) << ": kp=" << r.gains.kp << " ki=" << r.gains.ki
                << " kd=" << r.gains.kd << "\n";
    }
    gains = tuned;
  }
  man.option("tune", a.tune);

  const auto cmp = control::compare_scenarios(doc.loop, pc, f2, gains->scenario1, gains->scenario2);
  json report;
  report["loop"] = io::to_json(doc.loop);
  report["tuning"] = tuning;
  report["scenarios"] = json::array();
  for (const auto& s : cmp.scenarios) {
    const std::string name = control::scenario_name(s.scenario);
    csv::write_file(man.output("trace_" + name + ".csv").string(), s.trace.to_table());
    report["scenarios"].push_back(trace_summary(s, doc.loop));
    for (const auto& w : s.windows)
      std::cout << name << " [" << w.start << ", " << w.end << "] s: |BW - desired| = " << w.mean_abs_bw_error
                << " mm\n";
  }
  report["signature_worse_in_every_window"] = cmp.signature_worse_in_every_window;
  io::write_file(man.output("report.json").string(), report);
  man.write();
  return 0;
}

// ---- vision -----------------------------------------------------------------------------

struct VisionArgs {
  std::string frames;
  std::vector<int> crop;
  double scale = 1.0;
};

int cmd_vision(const Globals& g, const VisionArgs& a) {
  if (!fs::is_directory(a.frames)) throw InvalidArgument("vision: not a directory: " + a.frames);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(a.frames))
    if (e.is_regular_file() && e.path().extension() == ".pgm") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw InvalidArgument("vision: no .pgm frames in " + a.frames);
  if (!(a.scale > 0.0)) throw InvalidArgument("vision: --scale must be > 0");
  const auto out = prepare_out(g);
  cli::Manifest man("vision", out);
  man.seed(g.seed.value_or(0));
  man.option("scale_mm_per_px", a.scale);
  man.option("crop", a.crop);
  std::ofstream csvout(man.output("geometry.csv"), std::ios::binary);
  if (!csvout) throw InvalidArgument("vision: cannot write geometry.csv");
  csvout << "frame,file,mpw[mm],mpl[mm],area_px,valid\n";
  int warnings = 0;
  for (std::size_t i = 0; i < files.size(); ++i) {
    man.input(files[i]);
    vision::MeltPoolGeometry geo;
    try {
      const auto img = vision::read_pgm_file(files[i].string());
      vision::CropRect crop = vision::CropRect::full(img);
      if (!a.crop.empty()) {
        if (a.crop.size() != 4) throw InvalidArgument("vision: --crop takes x,y,w,h");
        crop = {a.crop[0], a.crop[1], a.crop[2], a.crop[3]};
      }
      geo = vision::extract_geometry(img, crop, a.scale);
      if (!geo.valid) ++warnings;
    } catch (const std::exception& e) {
      std::cerr << "warning: " << files[i].filename().string() << ": " << e.what() << "\n";
      geo = {};
      ++warnings;
    }
    csvout << i << ',' << files[i].filename().string() << ',' << csv::format_double(geo.mpw) << ','
           << csv::format_double(geo.mpl) << ',' << geo.area_px << ',' << (geo.valid ? 1 : 0) << '\n';
  }
  csvout.close();
  std::cout << files.size() << " frames, " << warnings << " warnings\n";
  man.write();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Digital twin of laser hot-wire directed energy deposition"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  std::uint64_t seed = 0;
  auto* seed_opt = app.add_option("--seed", seed, "Random seed");
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--config", g.config, "JSON configuration file");

  GenerateArgs ga;
  auto* gen = app.add_subcommand("generate", "Run plant protocols and write experiment records");
  gen->add_option("--protocol", ga.protocols, "Protocol JSON (repeatable)")->required();
  gen->add_flag("--dataset", ga.dataset, "Also write the signature -> bead width dataset");

  IdentifyArgs ia;
  auto* idf = app.add_subcommand("identify", "Identify parameter -> signature models");
  idf->add_option("--record", ia.record, "Experiment record CSV")->required();
  idf->add_option("--structure", ia.structure, "first-order | second-order | arx | hammerstein-wiener | composite");
  idf->add_flag("--all", ia.all, "Compare all single-input structures");
  idf->add_option("--input", ia.input, "Input channel (single-input structures)");
  idf->add_option("--output", ia.output, "Output channel");
  idf->add_option("--validation", ia.validation, "Validation fraction (trailing)");
  idf->add_option("--na", ia.na, "ARX output lags");
  idf->add_option("--nb", ia.nb, "ARX input lags");
  idf->add_option("--nk", ia.nk, "ARX input delay in samples");
  idf->add_option("--breakpoints", ia.breakpoints, "Hammerstein-Wiener breakpoints per map");

  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "Train surrogate models");
  tr->add_option("--dataset", ta.dataset, "Dataset CSV")->required();
  tr->add_option("--model", ta.model, "mlp | rsm | f3 | ablation | compare-f3");
  tr->add_option("--features", ta.features, "Feature columns")->delimiter(',');
  tr->add_option("--f1", ta.f1, "Composite F1 model JSON (compare-f3)");
  tr->add_option("--epochs", ta.epochs, "Epoch cap (accepted LM steps)");
  tr->add_option("--transform", ta.transform, "Target transform: log | identity");

  ControlArgs ca;
  auto* ctl = app.add_subcommand("control", "Run both closed-loop scenarios");
  ctl->add_option("--f2", ca.f2, "RSM model JSON used as F2")->required();
  ctl->add_option("--f1", ca.f1, "Composite F1 model JSON to drive the loop plant");
  ctl->add_option("--plant", ca.plant, "Plant config JSON (default: noise-free default plant)");
  ctl->add_option("--gains-from", ca.gains_from, "Gain set JSON {scenario1, scenario2}");
  ctl->add_flag("--tune", ca.tune, "Tune gains on the linearized loop");

  VisionArgs va;
  auto* vis = app.add_subcommand("vision", "Extract melt-pool width and length from PGM frames");
  vis->add_option("--frames", va.frames, "Directory of .pgm frames")->required();
  vis->add_option("--crop", va.crop, "Crop rectangle x,y,w,h")->delimiter(',');
  vis->add_option("--scale", va.scale, "Millimetres per pixel");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  if (seed_opt->count() > 0) g.seed = seed;

  try {
    if (*gen) return cmd_generate(g, ga);
    if (*idf) return cmd_identify(g, ia);
    if (*tr) return cmd_train(g, ta);
    if (*ctl) return cmd_control(g, ca);
    if (*vis) return cmd_vision(g, va);
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 2;
}
