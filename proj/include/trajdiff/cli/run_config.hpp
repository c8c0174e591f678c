#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "trajdiff/core.hpp"
#include "trajdiff/data/csv.hpp"
#include "trajdiff/data/dataset.hpp"
#include "trajdiff/data/synth_city.hpp"
#include "trajdiff/diffusion/sampler.hpp"
#include "trajdiff/diffusion/schedule.hpp"
#include "trajdiff/metrics/metrics.hpp"
#include "trajdiff/model/config.hpp"
#include "trajdiff/train/trainer.hpp"

namespace trajdiff::cli {

using json = nlohmann::ordered_json;

struct DataSection {
  std::string source = "synthetic";  // synthetic | csv
  std::string csv_path;
  data::CsvSchema csv;
  data::SynthCityConfig synth{.trips = 20000};
  data::PreprocessConfig preprocess;
  double held_out_fraction = 0.1;
};

struct DiffusionSection {
  int steps = 1000;
  double beta_start = 1e-4;
  double beta_end = 0.02;
  int substeps = 200;
  diffusion::SigmaMode sigma_mode = diffusion::SigmaMode::kDeterministic;
  std::size_t chunk = 128;
  unsigned workers = 0;  // 0: all hardware threads

  [[nodiscard]] diffusion::NoiseSchedule schedule() const {
    return diffusion::build_linear_schedule(steps, beta_start, beta_end);
  }
};

struct PlotSection {
  std::string mode = "density";  // density | overlay
  int width = 800;
  int height = 800;
};

/// Everything a command needs. `seed` feeds data synthesis, the split,
/// parameter init, training and sampling.
struct RunConfig {
  std::uint64_t seed = 0;
  std::string out = "run";
  DataSection data;
  model::ModelConfig model;
  DiffusionSection diffusion;
  train::TrainConfig train{.batch_size = 64, .max_steps = 20000, .checkpoint_every = 5000, .log_every = 100};
  metrics::EvalOptions eval;
  PlotSection plot;
};

inline json to_json(const RunConfig& c) {
  const auto& s = c.data.synth;
  const auto& p = c.data.preprocess;
  const auto& m = c.model;
  const auto& d = c.diffusion;
  const auto& t = c.train;
  json j;
  j["seed"] = c.seed;
  j["out"] = c.out;
  j["data"] = {
      {"source", c.data.source},
      {"csv",
       {{"path", c.data.csv_path},
        {"traj_id", c.data.csv.traj_id},
        {"lon", c.data.csv.lon},
        {"lat", c.data.csv.lat},
        {"timestamp", c.data.csv.timestamp},
        {"delimiter", std::string(1, c.data.csv.delimiter)}}},
      {"synth",
       {{"lattice", s.lattice},
        {"block_deg", s.block_deg},
        {"origin_lon", s.origin_lon},
        {"origin_lat", s.origin_lat},
        {"avenue_fraction", s.avenue_fraction},
        {"avenue_weight", s.avenue_weight},
        {"turn_prob", s.turn_prob},
        {"speed_min", s.speed_min},
        {"speed_max", s.speed_max},
        {"cell_deg", s.cell_deg},
        {"jitter_deg", s.jitter_deg},
        {"trips", s.trips},
        {"min_points", s.min_points},
        {"max_points", s.max_points},
        {"sample_interval", s.sample_interval},
        {"gap_prob", s.gap_prob},
        {"gap_min", s.gap_min},
        {"gap_max", s.gap_max},
        {"day_start", s.day_start},
        {"day_window", s.day_window}}},
      {"preprocess",
       {{"min_len", p.min_len},
        {"max_gap", p.max_gap},
        {"points", p.points},
        {"resample", data::to_string(p.mode)},
        {"cond_cells_per_axis", p.cond_cells_per_axis},
        {"metric_cell", p.metric_cell},
        {"utc_offset", p.utc_offset}}},
      {"held_out_fraction", c.data.held_out_fraction}};
  j["model"] = {{"layers", m.layers},
                {"dim", m.dim},
                {"heads", m.heads},
                {"emb_mode", model::to_string(m.emb_mode)},
                {"max_len", m.max_len},
                {"cond_cells", m.cond_cells},
                {"mlp_ratio", m.mlp_ratio},
                {"pe_printed_sign", m.pe_printed_sign},
                {"use_cells", m.use_cells},
                {"use_time_bucket", m.use_time_bucket},
                {"use_trip_length", m.use_trip_length}};
  j["diffusion"] = {{"steps", d.steps},
                    {"beta_start", d.beta_start},
                    {"beta_end", d.beta_end},
                    {"substeps", d.substeps},
                    {"sigma_mode", diffusion::to_string(d.sigma_mode)},
                    {"chunk", d.chunk},
                    {"workers", d.workers}};
  j["train"] = {{"learning_rate", t.learning_rate},
                {"weight_decay", t.weight_decay},
                {"batch_size", t.batch_size},
                {"max_steps", t.max_steps},
                {"checkpoint_every", t.checkpoint_every},
                {"log_every", t.log_every},
                {"grad_clip", t.grad_clip ? json(*t.grad_clip) : json(nullptr)}};
  j["eval"] = {{"pattern_n", c.eval.pattern_n}, {"length_bins", c.eval.length_bins}, {"joint_trip", c.eval.joint_trip}};
  j["plot"] = {{"mode", c.plot.mode}, {"width", c.plot.width}, {"height", c.plot.height}};
  return j;
}

namespace detail {

inline bool compatible(const json& def, const json& v) {
  if (def.is_null()) return v.is_null() || v.is_number();
  if (def.is_number_float()) return v.is_number();
  if (def.is_number_unsigned()) return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
  if (def.is_number_integer()) return v.is_number_integer();
  return def.type() == v.type();
}

/// Overlays `src` onto `dst`, rejecting keys or types `dst` does not have.
inline void merge_strict(json& dst, const json& src, const std::string& path) {
  if (!src.is_object()) throw ConfigError("config section '" + path + "' must be an object");
  for (const auto& [key, val] : src.items()) {
    const std::string where = path.empty() ? key : path + "." + key;
    if (!dst.contains(key)) throw ConfigError("unknown config key '" + where + "'");
    auto& slot = dst[key];
    if (slot.is_object()) {
      merge_strict(slot, val, where);
    } else if (!compatible(slot, val)) {
      throw ConfigError("config key '" + where + "' has the wrong type");
    } else {
      slot = val;
    }
  }
}

}  // namespace detail

inline RunConfig from_json(const json& j) {
  RunConfig c;
  try {
    c.seed = j.at("seed").get<std::uint64_t>();
    c.out = j.at("out").get<std::string>();
    const auto& jd = j.at("data");
    c.data.source = jd.at("source").get<std::string>();
    if (c.data.source != "synthetic" && c.data.source != "csv") {
      throw ConfigError("data.source must be synthetic or csv");
    }
    const auto& jc = jd.at("csv");
    c.data.csv_path = jc.at("path").get<std::string>();
    c.data.csv.traj_id = jc.at("traj_id").get<std::string>();
    c.data.csv.lon = jc.at("lon").get<std::string>();
    c.data.csv.lat = jc.at("lat").get<std::string>();
    c.data.csv.timestamp = jc.at("timestamp").get<std::string>();
    const auto delim = jc.at("delimiter").get<std::string>();
    if (delim.size() != 1) throw ConfigError("data.csv.delimiter must be one character");
    c.data.csv.delimiter = delim[0];
    const auto& js = jd.at("synth");
    auto& s = c.data.synth;
    s.lattice = js.at("lattice").get<int>();
    s.block_deg = js.at("block_deg").get<double>();
    s.origin_lon = js.at("origin_lon").get<double>();
    s.origin_lat = js.at("origin_lat").get<double>();
    s.avenue_fraction = js.at("avenue_fraction").get<double>();
    s.avenue_weight = js.at("avenue_weight").get<double>();
    s.turn_prob = js.at("turn_prob").get<double>();
    s.speed_min = js.at("speed_min").get<double>();
    s.speed_max = js.at("speed_max").get<double>();
    s.cell_deg = js.at("cell_deg").get<double>();
    s.jitter_deg = js.at("jitter_deg").get<double>();
    s.trips = js.at("trips").get<std::size_t>();
    s.min_points = js.at("min_points").get<std::size_t>();
    s.max_points = js.at("max_points").get<std::size_t>();
    s.sample_interval = js.at("sample_interval").get<double>();
    s.gap_prob = js.at("gap_prob").get<double>();
    s.gap_min = js.at("gap_min").get<double>();
    s.gap_max = js.at("gap_max").get<double>();
    s.day_start = js.at("day_start").get<double>();
    s.day_window = js.at("day_window").get<double>();
    s.seed = c.seed;
    const auto& jp = jd.at("preprocess");
    auto& p = c.data.preprocess;
    p.min_len = jp.at("min_len").get<std::size_t>();
    p.max_gap = jp.at("max_gap").get<double>();
    p.points = jp.at("points").get<std::size_t>();
    p.mode = data::resample_mode_from_string(jp.at("resample").get<std::string>());
    p.cond_cells_per_axis = jp.at("cond_cells_per_axis").get<int>();
    p.metric_cell = jp.at("metric_cell").get<double>();
    p.utc_offset = jp.at("utc_offset").get<double>();
    c.data.held_out_fraction = jd.at("held_out_fraction").get<double>();

    const auto& jm = j.at("model");
    auto& m = c.model;
    m.layers = jm.at("layers").get<int>();
    m.dim = jm.at("dim").get<int>();
    m.heads = jm.at("heads").get<int>();
    m.emb_mode = model::emb_mode_from_string(jm.at("emb_mode").get<std::string>());
    m.max_len = jm.at("max_len").get<int>();
    m.cond_cells = jm.at("cond_cells").get<int>();
    m.mlp_ratio = jm.at("mlp_ratio").get<double>();
    m.pe_printed_sign = jm.at("pe_printed_sign").get<bool>();
    m.use_cells = jm.at("use_cells").get<bool>();
    m.use_time_bucket = jm.at("use_time_bucket").get<bool>();
    m.use_trip_length = jm.at("use_trip_length").get<bool>();

    const auto& jf = j.at("diffusion");
    auto& d = c.diffusion;
    d.steps = jf.at("steps").get<int>();
    d.beta_start = jf.at("beta_start").get<double>();
    d.beta_end = jf.at("beta_end").get<double>();
    d.substeps = jf.at("substeps").get<int>();
    d.sigma_mode = diffusion::sigma_mode_from_string(jf.at("sigma_mode").get<std::string>());
    d.chunk = jf.at("chunk").get<std::size_t>();
    d.workers = jf.at("workers").get<unsigned>();

    const auto& jt = j.at("train");
    auto& t = c.train;
    t.learning_rate = jt.at("learning_rate").get<double>();
    t.weight_decay = jt.at("weight_decay").get<double>();
    t.batch_size = jt.at("batch_size").get<std::size_t>();
    t.max_steps = jt.at("max_steps").get<std::uint64_t>();
    t.checkpoint_every = jt.at("checkpoint_every").get<std::uint64_t>();
    t.log_every = jt.at("log_every").get<std::uint64_t>();
    t.grad_clip = jt.at("grad_clip").is_null() ? std::nullopt : std::optional<double>(jt.at("grad_clip").get<double>());
    t.seed = c.seed;

    const auto& je = j.at("eval");
    c.eval.pattern_n = je.at("pattern_n").get<std::size_t>();
    c.eval.length_bins = je.at("length_bins").get<int>();
    c.eval.joint_trip = je.at("joint_trip").get<bool>();

    const auto& jl = j.at("plot");
    c.plot.mode = jl.at("mode").get<std::string>();
    if (c.plot.mode != "density" && c.plot.mode != "overlay") throw ConfigError("plot.mode must be density or overlay");
    c.plot.width = jl.at("width").get<int>();
    c.plot.height = jl.at("height").get<int>();
    if (c.plot.width < 32 || c.plot.height < 32) throw ConfigError("plot size must be at least 32x32");
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
  c.data.synth.validate();
  c.model.validate();
  c.train.validate();
  return c;
}

/// Parses a `--set` value: JSON if it parses, otherwise a plain string.
inline json parse_override_value(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error&) {
    return json(text);
  }
}

/// Applies `a.b.c=value` on top of a config document.
inline void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string path = assignment.substr(0, eq);
  json patch = parse_override_value(assignment.substr(eq + 1));
  std::vector<std::string> keys;
  std::stringstream ss(path);
  for (std::string k; std::getline(ss, k, '.');) keys.push_back(k);
  for (auto it = keys.rbegin(); it != keys.rend(); ++it) patch = json{{*it, patch}};
  detail::merge_strict(doc, patch, "");
}

/// Defaults, then the optional config file, then overrides, then --seed/--out.
inline RunConfig resolve_config(const std::string& config_path, const std::vector<std::string>& overrides,
                                std::optional<std::uint64_t> seed = std::nullopt,
                                std::optional<std::string> out = std::nullopt) {
  json doc = to_json(RunConfig{});
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) throw ConfigError("cannot open config '" + config_path + "'");
    json user;
    try {
      user = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ConfigError("config '" + config_path + "' is not valid JSON: " + e.what());
    }
    detail::merge_strict(doc, user, "");
  }
  for (const auto& o : overrides) apply_override(doc, o);
  if (seed) doc["seed"] = *seed;
  if (out) doc["out"] = *out;
  return from_json(doc);
}

}  // namespace trajdiff::cli
