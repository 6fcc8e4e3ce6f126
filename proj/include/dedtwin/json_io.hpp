#pragma once

// JSON documents for models, configs and reports. Readers name the offending
// field in every error so a malformed config can be fixed from the message.

#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dedtwin/control.hpp"
#include "dedtwin/errors.hpp"
#include "dedtwin/plant.hpp"
#include "dedtwin/surrogate.hpp"
#include "dedtwin/sysid.hpp"

namespace dedtwin::io {

using json = nlohmann::ordered_json;

inline json parse(std::istream& in, const std::string& what) {
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw InvalidArgument(what + ": " + e.what());
  }
}

inline json read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open " + path);
  return parse(in, path);
}

inline void write_file(const std::string& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidArgument("cannot write " + path);
  out << j.dump(2) << '\n';
}

// ---- field access -------------------------------------------------------------------

class Reader {
public:
  Reader(const json& j, std::string context) : j_(j), ctx_(std::move(context)) {
    if (!j_.is_object()) throw InvalidArgument(ctx_ + ": expected an object");
  }

  bool has(const std::string& key) const {
    seen_.insert(key);
    return j_.contains(key);
  }

  const json& at(const std::string& key) const {
    seen_.insert(key);
    if (!j_.contains(key)) throw InvalidArgument(ctx_ + ": missing field '" + key + "'");
    return j_.at(key);
  }

  double number(const std::string& key) const {
    const auto& v = at(key);
    if (!v.is_number()) throw InvalidArgument(ctx_ + ": field '" + key + "' must be a number");
    return v.get<double>();
  }

  double number(const std::string& key, double fallback) const { return has(key) ? number(key) : fallback; }

  long long integer(const std::string& key) const {
    const auto& v = at(key);
    if (!v.is_number_integer()) throw InvalidArgument(ctx_ + ": field '" + key + "' must be an integer");
    return v.get<long long>();
  }

  long long integer(const std::string& key, long long fallback) const { return has(key) ? integer(key) : fallback; }

  std::string string(const std::string& key) const {
    const auto& v = at(key);
    if (!v.is_string()) throw InvalidArgument(ctx_ + ": field '" + key + "' must be a string");
    return v.get<std::string>();
  }

  std::string string(const std::string& key, const std::string& fallback) const {
    return has(key) ? string(key) : fallback;
  }

  bool boolean(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const auto& v = at(key);
    if (!v.is_boolean()) throw InvalidArgument(ctx_ + ": field '" + key + "' must be true or false");
    return v.get<bool>();
  }

  std::vector<double> numbers(const std::string& key) const {
    const auto& v = at(key);
    if (!v.is_array()) throw InvalidArgument(ctx_ + ": field '" + key + "' must be an array");
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number())
        throw InvalidArgument(ctx_ + ": " + key + "[" + std::to_string(i) + "] must be a number");
      out.push_back(v[i].get<double>());
    }
    return out;
  }

  std::vector<std::string> strings(const std::string& key) const {
    const auto& v = at(key);
    if (!v.is_array()) throw InvalidArgument(ctx_ + ": field '" + key + "' must be an array");
    std::vector<std::string> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_string())
        throw InvalidArgument(ctx_ + ": " + key + "[" + std::to_string(i) + "] must be a string");
      out.push_back(v[i].get<std::string>());
    }
    return out;
  }

  Reader object(const std::string& key) const { return Reader(at(key), ctx_ + "." + key); }

  std::vector<Reader> objects(const std::string& key) const {
    const auto& v = at(key);
    if (!v.is_array()) throw InvalidArgument(ctx_ + ": field '" + key + "' must be an array");
    std::vector<Reader> out;
    for (std::size_t i = 0; i < v.size(); ++i) out.emplace_back(v[i], ctx_ + "." + key + "[" + std::to_string(i) + "]");
    return out;
  }

  /// Rejects keys no accessor asked for (catches misspelled settings).
  void reject_unknown() const {
    for (const auto& [k, _] : j_.items())
      if (!seen_.count(k)) throw InvalidArgument(ctx_ + ": unknown field '" + k + "'");
  }

  const std::string& context() const { return ctx_; }

private:
  const json& j_;
  std::string ctx_;
  mutable std::set<std::string> seen_;
};

// ---- metrics -------------------------------------------------------------------------

inline json to_json(const signals::FitMetrics& m) {
  return {{"rmse", m.rmse}, {"mae", m.mae}, {"r2", m.r2}, {"bf_percent", m.bf_percent}};
}

inline signals::FitMetrics metrics_from(const Reader& r) {
  return {r.number("rmse"), r.number("mae"), r.number("r2"), r.number("bf_percent")};
}

// ---- sysid models --------------------------------------------------------------------

inline json to_json(const sysid::FirstOrderDelayModel& m) {
  return {{"k_gain", m.k_gain}, {"tw", m.tw}, {"td", m.td}};
}

inline sysid::FirstOrderDelayModel first_order_from(const Reader& r) {
  sysid::FirstOrderDelayModel m{r.number("k_gain"), r.number("tw"), r.number("td")};
  try {
    m.validate();
  } catch (const InvalidArgument& e) {
    throw InvalidArgument(r.context() + ": " + e.what());
  }
  return m;
}

inline json to_json(const sysid::SecondOrderDelayModel& m) {
  return {{"b0", m.b0}, {"b1", m.b1}, {"a1", m.a1}, {"a2", m.a2}, {"td", m.td}, {"stable", m.stable()}};
}

inline json to_json(const sysid::ArxModel& m) {
  return {{"na", m.na}, {"nb", m.nb}, {"nk", m.nk}, {"a", m.a}, {"b", m.b}};
}

inline json to_json(const sysid::PiecewiseLinear& p) {
  return {{"breakpoints", p.breakpoints}, {"values", p.values}};
}

inline json to_json(const sysid::HammersteinWienerModel& m) {
  return {{"input_nl", to_json(m.input_nl)}, {"linear_block", to_json(m.linear_block)},
          {"output_nl", to_json(m.output_nl)}};
}

inline json to_json(const sysid::CompositeF1& m) {
  return {{"g_lp", to_json(m.g_lp)}, {"g_n", m.g_n}, {"offset", m.offset}};
}

inline sysid::CompositeF1 composite_from(const Reader& r) {
  return {first_order_from(r.object("g_lp")), r.number("g_n"), r.number("offset", 0.0)};
}

/// Model document envelope shared by every identified structure.
inline json model_document(const std::string& structure, json parameters, json units,
                           const signals::FitMetrics& training, const signals::FitMetrics* validation,
                           json preprocessing) {
  json d;
  d["structure"] = structure;
  d["parameters"] = std::move(parameters);
  d["units"] = std::move(units);
  d["metrics"] = {{"training", to_json(training)}};
  if (validation) d["metrics"]["validation"] = to_json(*validation);
  d["preprocessing"] = std::move(preprocessing);
  return d;
}

inline sysid::CompositeF1 read_composite_document(const json& j, const std::string& ctx) {
  const Reader r(j, ctx);
  if (r.string("structure") != "composite")
    throw InvalidArgument(ctx + ": expected structure 'composite', found '" + r.string("structure") + "'");
  return composite_from(r.object("parameters"));
}

// ---- surrogates ------------------------------------------------------------------------

inline json to_json(const surrogate::MinMax& m, const std::vector<std::string>& features) {
  return {{"features", features}, {"min", m.lo}, {"max", m.hi}};
}

inline surrogate::OutputTransform transform_from(const std::string& s, const std::string& ctx) {
  if (s == "log") return surrogate::OutputTransform::Log;
  if (s == "identity") return surrogate::OutputTransform::Identity;
  throw InvalidArgument(ctx + ": unknown transform '" + s + "'");
}

inline surrogate::Activation activation_from(const std::string& s, const std::string& ctx) {
  if (s == "relu") return surrogate::Activation::Relu;
  if (s == "sigmoid") return surrogate::Activation::Sigmoid;
  if (s == "linear") return surrogate::Activation::Linear;
  throw InvalidArgument(ctx + ": unknown activation '" + s + "'");
}

inline json to_json(const surrogate::MlpModel& m) {
  json layers = json::array();
  for (const auto& l : m.layers) {
    std::vector<double> w;
    for (Eigen::Index r = 0; r < l.w.rows(); ++r)
      for (Eigen::Index c = 0; c < l.w.cols(); ++c) w.push_back(l.w(r, c));
    layers.push_back({{"activation", surrogate::activation_name(l.act)},
                      {"weights", w},
                      {"biases", std::vector<double>(l.b.data(), l.b.data() + l.b.size())}});
  }
  return {{"structure", "mlp"},
          {"layer_sizes", m.layer_sizes()},
          {"layers", layers},
          {"normalizer", to_json(m.normalizer, m.features)},
          {"transform", surrogate::transform_name(m.transform)},
          {"seed", m.seed}};
}

inline surrogate::MlpModel mlp_from(const json& j, const std::string& ctx) {
  const Reader r(j, ctx);
  if (r.string("structure") != "mlp") throw InvalidArgument(ctx + ": expected structure 'mlp'");
  const auto sizes = r.numbers("layer_sizes");
  surrogate::MlpModel m;
  const auto layers = r.objects("layers");
  if (layers.size() + 1 != sizes.size()) throw InvalidArgument(ctx + ": layer_sizes and layers disagree");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    surrogate::DenseLayer l;
    const auto rows = static_cast<Eigen::Index>(sizes[i + 1]), cols = static_cast<Eigen::Index>(sizes[i]);
    const auto w = layers[i].numbers("weights");
    const auto b = layers[i].numbers("biases");
    if (static_cast<Eigen::Index>(w.size()) != rows * cols || static_cast<Eigen::Index>(b.size()) != rows)
      throw InvalidArgument(layers[i].context() + ": weight/bias count does not match layer_sizes");
    l.w.resize(rows, cols);
    for (Eigen::Index rr = 0; rr < rows; ++rr)
      for (Eigen::Index c = 0; c < cols; ++c) l.w(rr, c) = w[static_cast<std::size_t>(rr * cols + c)];
    l.b = Eigen::Map<const Eigen::VectorXd>(b.data(), rows);
    l.act = activation_from(layers[i].string("activation"), layers[i].context());
    m.layers.push_back(std::move(l));
  }
  const auto norm = r.object("normalizer");
  m.features = norm.strings("features");
  m.normalizer = {norm.numbers("min"), norm.numbers("max")};
  m.transform = transform_from(r.string("transform"), ctx);
  m.seed = static_cast<std::uint64_t>(r.integer("seed", 0));
  m.validate();
  return m;
}

inline json to_json(const surrogate::RsmModel& m) {
  std::vector<double> c(m.coefficients.data(), m.coefficients.data() + m.coefficients.size());
  return {{"structure", "rsm"},
          {"degree", m.degree},
          {"exponents", m.exponents},
          {"coefficients", c},
          {"normalizer", to_json(m.normalizer, m.features)},
          {"transform", surrogate::transform_name(m.transform)}};
}

inline surrogate::RsmModel rsm_from(const json& j, const std::string& ctx) {
  const Reader r(j, ctx);
  if (r.string("structure") != "rsm") throw InvalidArgument(ctx + ": expected structure 'rsm'");
  surrogate::RsmModel m;
  m.degree = static_cast<int>(r.integer("degree"));
  const auto norm = r.object("normalizer");
  m.features = norm.strings("features");
  m.normalizer = {norm.numbers("min"), norm.numbers("max")};
  m.transform = transform_from(r.string("transform"), ctx);
  const auto c = r.numbers("coefficients");
  m.coefficients = Eigen::Map<const Eigen::VectorXd>(c.data(), static_cast<Eigen::Index>(c.size()));
  try {
    m.exponents = r.at("exponents").get<std::vector<std::vector<int>>>();
  } catch (const json::exception&) {
    throw InvalidArgument(ctx + ": field 'exponents' must be an array of integer arrays");
  }
  if (m.exponents.size() != c.size()) throw InvalidArgument(ctx + ": exponents and coefficients differ in length");
  for (const auto& e : m.exponents)
    if (e.size() != m.features.size()) throw InvalidArgument(ctx + ": exponent row has the wrong dimension");
  if (m.normalizer.lo.size() != m.features.size() || m.normalizer.hi.size() != m.features.size())
    throw InvalidArgument(ctx + ": normalizer dimension mismatch");
  return m;
}

inline json to_json(const surrogate::TrainReport& r) {
  return {{"metrics", to_json(r.metrics)},
          {"training_metrics", to_json(r.training_metrics)},
          {"epochs_run", r.epochs_run},
          {"final_loss", r.final_loss},
          {"split_seed", r.split_seed},
          {"stop_reason", r.stop_reason},
          {"loss_history", r.loss_history}};
}

// ---- plant configuration and protocols -----------------------------------------------

inline json to_json(const plant::PlantConfig& c) {
  return {{"true_g_lp", to_json(c.true_g_lp)},
          {"true_g_n", c.true_g_n},
          {"mpw_offset", c.mpw_offset},
          {"true_g_ts", to_json(c.true_g_ts)},
          {"ts_reference", c.ts_reference},
          {"mpl_intercept", c.mpl_intercept},
          {"mpl_slope", c.mpl_slope},
          {"mpt_base", c.mpt_base},
          {"mpt_per_layer", c.mpt_per_layer},
          {"mpt_lp_gain", c.mpt_lp_gain},
          {"mpt_lp_reference", c.mpt_lp_reference},
          {"mpt_tw", c.mpt_tw},
          {"thermal_tau", c.thermal_tau},
          {"noise_std",
           {{"mpw", c.noise.mpw}, {"mpl", c.noise.mpl}, {"mpt", c.noise.mpt}, {"bw", c.noise.bw},
            {"thermal", c.noise.thermal}}},
          {"latent_bw",
           {{"lag_s", c.bw.lag_s}, {"mpw_weight", c.bw.mpw_weight}, {"mpl_weight", c.bw.mpl_weight},
            {"layer_weight", c.bw.layer_weight}, {"offset", c.bw.offset}}},
          {"seed", c.seed},
          {"dt", c.dt},
          {"pyrometer_floor", c.pyrometer_floor}};
}

/// Every field is optional; missing ones keep their defaults.
inline plant::PlantConfig plant_config_from(const json& j, const std::string& ctx = "plant config") {
  const Reader r(j, ctx);
  plant::PlantConfig c;
  if (r.has("true_g_lp")) c.true_g_lp = first_order_from(r.object("true_g_lp"));
  c.true_g_n = r.number("true_g_n", c.true_g_n);
  c.mpw_offset = r.number("mpw_offset", c.mpw_offset);
  if (r.has("true_g_ts")) c.true_g_ts = first_order_from(r.object("true_g_ts"));
  c.ts_reference = r.number("ts_reference", c.ts_reference);
  c.mpl_intercept = r.number("mpl_intercept", c.mpl_intercept);
  c.mpl_slope = r.number("mpl_slope", c.mpl_slope);
  c.mpt_base = r.number("mpt_base", c.mpt_base);
  c.mpt_per_layer = r.number("mpt_per_layer", c.mpt_per_layer);
  c.mpt_lp_gain = r.number("mpt_lp_gain", c.mpt_lp_gain);
  c.mpt_lp_reference = r.number("mpt_lp_reference", c.mpt_lp_reference);
  c.mpt_tw = r.number("mpt_tw", c.mpt_tw);
  c.thermal_tau = r.number("thermal_tau", c.thermal_tau);
  if (r.has("noise_std")) {
    const auto n = r.object("noise_std");
    c.noise = {n.number("mpw", c.noise.mpw), n.number("mpl", c.noise.mpl), n.number("mpt", c.noise.mpt),
               n.number("bw", c.noise.bw), n.number("thermal", c.noise.thermal)};
    n.reject_unknown();
  }
  if (r.has("latent_bw")) {
    const auto b = r.object("latent_bw");
    c.bw = {b.number("lag_s", c.bw.lag_s), b.number("mpw_weight", c.bw.mpw_weight),
            b.number("mpl_weight", c.bw.mpl_weight), b.number("layer_weight", c.bw.layer_weight),
            b.number("offset", c.bw.offset)};
    b.reject_unknown();
  }
  c.seed = static_cast<std::uint64_t>(r.integer("seed", static_cast<long long>(c.seed)));
  c.dt = r.number("dt", c.dt);
  c.pyrometer_floor = r.number("pyrometer_floor", c.pyrometer_floor);
  r.reject_unknown();
  try {
    c.validate();
  } catch (const InvalidArgument& e) {
    throw InvalidArgument(ctx + ": " + e.what());
  }
  return c;
}

inline json to_json(const plant::ExperimentProtocol& p) {
  json segs = json::array();
  for (const auto& s : p.segments) {
    json j;
    if (s.length_mm) j["length_mm"] = *s.length_mm;
    if (s.duration_s) j["duration_s"] = *s.duration_s;
    j["lp_W"] = s.lp;
    j["ts_mm_s"] = s.ts;
    j["ep_W"] = s.ep;
    j["wfs_m_min"] = s.wfs;
    segs.push_back(j);
  }
  json j{{"name", p.name}, {"layers", p.layers}};
  if (p.seconds_per_layer) j["seconds_per_layer"] = *p.seconds_per_layer;
  j["segments"] = segs;
  return j;
}

inline plant::ExperimentProtocol protocol_from(const json& j, const std::string& ctx = "protocol") {
  const Reader r(j, ctx);
  plant::ExperimentProtocol p;
  p.name = r.string("name", "");
  p.layers = static_cast<int>(r.integer("layers", 1));
  if (r.has("seconds_per_layer")) p.seconds_per_layer = r.number("seconds_per_layer");
  for (const auto& s : r.objects("segments")) {
    plant::Segment seg;
    if (s.has("length_mm")) seg.length_mm = s.number("length_mm");
    if (s.has("duration_s")) seg.duration_s = s.number("duration_s");
    if (!seg.length_mm && !seg.duration_s)
      throw InvalidArgument(s.context() + ": missing field 'length_mm' (or 'duration_s')");
    seg.lp = s.number("lp_W");
    seg.ts = s.number("ts_mm_s");
    seg.ep = s.number("ep_W");
    seg.wfs = s.number("wfs_m_min");
    s.reject_unknown();
    p.segments.push_back(seg);
  }
  r.reject_unknown();
  try {
    p.validate();
  } catch (const InvalidArgument& e) {
    throw InvalidArgument(ctx + ": " + e.what());
  }
  return p;
}

// ---- control ---------------------------------------------------------------------------

inline json to_json(const control::PidGains& g) { return {{"kp", g.kp}, {"ki", g.ki}, {"kd", g.kd}}; }

inline control::PidGains gains_from(const Reader& r) {
  control::PidGains g{r.number("kp"), r.number("ki"), r.number("kd")};
  r.reject_unknown();
  try {
    g.validate();
  } catch (const InvalidArgument& e) {
    throw InvalidArgument(r.context() + ": " + e.what());
  }
  return g;
}

struct GainSet {
  control::PidGains scenario1, scenario2;
};

inline GainSet gain_set_from(const json& j, const std::string& ctx) {
  const Reader r(j, ctx);
  GainSet g{gains_from(r.object("scenario1")), gains_from(r.object("scenario2"))};
  r.reject_unknown();
  return g;
}

inline control::Scenario scenario_from(const std::string& s, const std::string& ctx) {
  if (s == "property-controlled") return control::Scenario::PropertyControlled;
  if (s == "signature-controlled") return control::Scenario::SignatureControlled;
  throw InvalidArgument(ctx + ": unknown scenario '" + s + "'");
}

struct LoopDocument {
  control::LoopConfig loop;
  control::TuneWeights weights;
  std::optional<GainSet> gains;  // absent: tune
};

inline json to_json(const control::LoopConfig& c) {
  json sp = json::array();
  for (const auto& s : c.setpoints) sp.push_back({{"start_s", s.start}, {"value_mm", s.value}});
  return {{"scenario", control::scenario_name(c.scenario)},
          {"setpoints", sp},
          {"duration_s", c.duration},
          {"seconds_per_layer", c.seconds_per_layer},
          {"print_start_s", c.print_start},
          {"layer_count", c.layer_count},
          {"limits_W", {c.limits.lo, c.limits.hi}},
          {"dt_s", c.dt},
          {"translate_mpw_setpoint", c.translate_mpw_setpoint}};
}

inline LoopDocument loop_from(const json& j, const std::string& ctx = "loop config") {
  const Reader r(j, ctx);
  LoopDocument d;
  auto& c = d.loop;
  if (r.has("scenario")) c.scenario = scenario_from(r.string("scenario"), ctx);
  if (r.has("setpoints")) {
    c.setpoints.clear();
    for (const auto& s : r.objects("setpoints")) {
      c.setpoints.push_back({s.number("start_s"), s.number("value_mm")});
      s.reject_unknown();
    }
  }
  c.duration = r.number("duration_s", c.duration);
  c.seconds_per_layer = r.number("seconds_per_layer", c.seconds_per_layer);
  c.print_start = r.number("print_start_s", c.print_start);
  c.layer_count = static_cast<int>(r.integer("layer_count", c.layer_count));
  if (r.has("limits_W")) {
    const auto l = r.numbers("limits_W");
    if (l.size() != 2) throw InvalidArgument(ctx + ": field 'limits_W' must hold [min, max]");
    c.limits = {l[0], l[1]};
  }
  c.dt = r.number("dt_s", c.dt);
  c.translate_mpw_setpoint = r.boolean("translate_mpw_setpoint", c.translate_mpw_setpoint);
  if (r.has("tuning_weights")) {
    const auto w = r.object("tuning_weights");
    d.weights = {w.number("overshoot", d.weights.overshoot), w.number("rise_time", d.weights.rise_time)};
    w.reject_unknown();
  }
  if (r.has("gains")) d.gains = gain_set_from(r.at("gains"), ctx + ".gains");
  r.reject_unknown();
  try {
    c.validate();
  } catch (const InvalidArgument& e) {
    throw InvalidArgument(ctx + ": " + e.what());
  }
  return d;
}

inline json to_json(const control::WindowError& w) {
  return {{"start_s", w.start},
          {"end_s", w.end},
          {"desired_bw_mm", w.desired},
          {"setpoint", w.setpoint},
          {"mean_abs_bw_error_mm", w.mean_abs_bw_error},
          {"mean_abs_control_error", w.mean_abs_control_error},
          {"max_abs_control_error", w.max_abs_control_error}};
}

}  // namespace dedtwin::io
