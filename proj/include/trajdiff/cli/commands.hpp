#pragma once

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "trajdiff/cli/plot.hpp"
#include "trajdiff/cli/run_config.hpp"
#include "trajdiff/data/csv.hpp"
#include "trajdiff/data/dataset.hpp"
#include "trajdiff/data/synth_city.hpp"
#include "trajdiff/diffusion/sampler.hpp"
#include "trajdiff/metrics/metrics.hpp"
#include "trajdiff/model/checkpoint.hpp"
#include "trajdiff/model/transformer.hpp"
#include "trajdiff/train/trainer.hpp"

namespace trajdiff::cli {

namespace fs = std::filesystem;

/// Worker threads: hardware concurrency capped by TRAJDIFF_THREADS.
inline unsigned worker_cap(unsigned requested = 0) {
  unsigned n = requested > 0 ? requested : std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("TRAJDIFF_THREADS")) {
    try {
      const long cap = std::stol(env);
      if (cap >= 1) n = std::min(n, static_cast<unsigned>(cap));
    } catch (const std::logic_error&) {
      throw ConfigError(std::string("TRAJDIFF_THREADS is not a number: ") + env);
    }
  }
  return n;
}

inline void write_resolved_config(const RunConfig& cfg, const std::string& dir) {
  fs::create_directories(dir);
  std::ofstream out(fs::path(dir) / "config.json", std::ios::trunc);
  if (!out) throw FormatError("cannot write config into '" + dir + "'");
  out << to_json(cfg).dump(2) << '\n';
}

struct GenDataResult {
  data::Dataset all;
  data::Dataset train;
  data::Dataset test;
  data::PreprocessStats stats;
  std::vector<data::RawTrajectory> raw;
};

/// Writes dataset.bin, train.bin, test.bin (and roads.csv for synthetic data)
/// into cfg.out.
inline GenDataResult cmd_gen_data(const RunConfig& cfg, std::ostream& msg = std::cout) {
  GenDataResult r;
  std::string label = "synthetic";
  fs::create_directories(cfg.out);
  if (cfg.data.source == "csv") {
    data::CsvImportStats st;
    r.raw = data::import_csv(cfg.data.csv_path, cfg.data.csv, &st);
    label = fs::path(cfg.data.csv_path).stem().string();
    msg << "imported " << st.rows << " rows, " << st.malformed << " malformed rows skipped\n";
  } else {
    auto city = data::synth_city(cfg.data.synth);
    r.raw = std::move(city.trips);
    data::write_road_map(city.roads, (fs::path(cfg.out) / "roads.csv").string());
  }
  const auto prepared = data::prepare(r.raw, cfg.data.preprocess, &r.stats);
  const auto meta = data::make_meta(prepared, cfg.data.preprocess);
  r.all = data::build_dataset(prepared, meta, &r.stats.clamp);
  std::tie(r.train, r.test) = data::split_dataset(r.all, cfg.data.held_out_fraction, cfg.seed);
  data::write_dataset(r.all, (fs::path(cfg.out) / "dataset.bin").string());
  data::write_dataset(r.train, (fs::path(cfg.out) / "train.bin").string());
  data::write_dataset(r.test, (fs::path(cfg.out) / "test.bin").string());
  write_resolved_config(cfg, cfg.out);

  double dist = 0.0, secs = 0.0, pts = 0.0;
  std::size_t kept_raw = 0;
  for (const auto& tr : data::filter_time_gap(data::filter_min_length(r.raw, cfg.data.preprocess.min_len),
                                              cfg.data.preprocess.max_gap)) {
    dist += data::path_length(tr);
    secs += tr.duration();
    pts += static_cast<double>(tr.size());
    ++kept_raw;
  }
  const double m = std::max<double>(1.0, static_cast<double>(kept_raw));
  char line[256];
  std::snprintf(line, sizeof line,
                "%s  trajectories=%zu  avg_distance_km=%.3f  avg_time_min=%.2f  avg_points=%.1f  train=%zu  test=%zu\n",
                label.c_str(), r.all.size(), dist / m * 111.32, secs / m / 60.0, pts / m, r.train.size(),
                r.test.size());
  msg << "filters: " << r.stats.input << " raw -> " << r.stats.after_length << " after length -> "
      << r.stats.after_gap << " after gap\n"
      << line;
  if (r.all.size() == 0) msg << "warning: dataset is empty\n";
  return r;
}

/// Field-by-field difference of two model configs, empty when equal.
inline std::string config_diff(const model::ModelConfig& a, const model::ModelConfig& b) {
  std::string out;
  auto cmp = [&](const char* name, const auto& x, const auto& y) {
    if (!(x == y)) {
      std::ostringstream s;
      s << name << ": " << x << " vs " << y << "; ";
      out += s.str();
    }
  };
  cmp("layers", a.layers, b.layers);
  cmp("dim", a.dim, b.dim);
  cmp("heads", a.heads, b.heads);
  cmp("emb_mode", model::to_string(a.emb_mode), model::to_string(b.emb_mode));
  cmp("max_len", a.max_len, b.max_len);
  cmp("cond_cells", a.cond_cells, b.cond_cells);
  cmp("mlp_ratio", a.mlp_ratio, b.mlp_ratio);
  cmp("pe_printed_sign", a.pe_printed_sign, b.pe_printed_sign);
  cmp("use_cells", a.use_cells, b.use_cells);
  cmp("use_time_bucket", a.use_time_bucket, b.use_time_bucket);
  cmp("use_trip_length", a.use_trip_length, b.use_trip_length);
  return out;
}

/// Trains on `dataset_path`, writing config.json, train_log.jsonl,
/// periodic checkpoints and model.bin into cfg.out. With `resume`, training
/// continues from that checkpoint's optimizer state.
inline train::TrainState cmd_train(const RunConfig& cfg, const std::string& dataset_path,
                                   const std::string& resume = "", std::ostream& msg = std::cout) {
  const auto ds = data::read_dataset(dataset_path);
  const auto schedule = cfg.diffusion.schedule();
  train::TrainState state;
  if (!resume.empty()) {
    state = train::from_checkpoint(model::load_checkpoint(resume));
    if (const auto d = config_diff(cfg.model, state.config); !d.empty()) {
      throw ConfigError("checkpoint model differs from config: " + d);
    }
    msg << "resuming from step " << state.step << '\n';
  } else {
    state = train::init_state(cfg.model, cfg.seed);
  }
  write_resolved_config(cfg, cfg.out);
  std::ofstream log(fs::path(cfg.out) / "train_log.jsonl", resume.empty() ? std::ios::trunc : std::ios::app);
  train::TrainIo io{&log, cfg.out};
  const auto result = train::train(state, ds, schedule, cfg.train, io);
  model::save_checkpoint((fs::path(cfg.out) / "model.bin").string(), train::to_checkpoint(state));
  if (!result.losses.empty()) {
    const std::size_t tail = std::min<std::size_t>(100, result.losses.size());
    double mean = 0.0;
    for (std::size_t k = result.losses.size() - tail; k < result.losses.size(); ++k) mean += result.losses[k];
    msg << "trained to step " << state.step << ", mean loss over last " << tail << " steps " << mean / tail << '\n';
  }
  return state;
}

struct SampleOptions {
  std::size_t n = 2000;
  std::optional<int> dep_cell;
  std::optional<int> dst_cell;
};

/// Generated dataset for conditions taken in order (cycling) from `cond_source`,
/// denoised by any predictor with the model's call signature.
template <typename Predictor>
data::Dataset sample_with(Predictor&& predictor, const data::Dataset& cond_source, const RunConfig& cfg,
                          const SampleOptions& opt) {
  if (cond_source.size() == 0 && opt.n > 0) throw ContractError("sample: condition source is empty");
  data::Dataset gen = data::empty_like(cond_source, opt.n);
  gen.meta.generated = true;
  for (std::size_t i = 0; i < opt.n; ++i) {
    const std::size_t src = i % cond_source.size();
    auto c = cond_source.conditions[src];
    if (opt.dep_cell) c.dep_cell = *opt.dep_cell;
    if (opt.dst_cell) c.dst_cell = *opt.dst_cell;
    gen.conditions[i] = c;
    gen.depart_times[i] = cond_source.depart_times[src];
    gen.durations[i] = cond_source.durations[src];
  }
  diffusion::SamplerConfig sc;
  sc.steps = cfg.diffusion.steps;
  sc.substeps = cfg.diffusion.substeps;
  sc.sigma_mode = cfg.diffusion.sigma_mode;
  sc.seed = cfg.seed;
  sc.chunk = cfg.diffusion.chunk;
  sc.workers = worker_cap(cfg.diffusion.workers);
  const auto schedule = cfg.diffusion.schedule();
  const auto x = diffusion::generate<float, model::ConditionVector>(
      predictor, std::span<const model::ConditionVector>(gen.conditions), opt.n, cond_source.meta.points, sc,
      schedule, cfg.seed);
  gen.trajectories = x.template cast<double>();
  return gen;
}

inline data::Dataset sample_dataset(const model::TrajTransformer<float>& net, const data::Dataset& cond_source,
                                    const RunConfig& cfg, const SampleOptions& opt) {
  if (static_cast<int>(cond_source.meta.points) > net.config().max_len) {
    throw CapacityError("sample: trajectory length exceeds the model's max_len");
  }
  auto predictor = [&](const TrajBatch<float>& x, std::span<const int> t, std::span<const model::ConditionVector> c) {
    return net.predict(x, t, c);
  };
  return sample_with(predictor, cond_source, cfg, opt);
}

/// Denormalized CSV next to a generated dataset: traj_id, point, lon, lat.
inline void write_points_csv(const data::Dataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot open '" + path + "' for writing");
  out << "traj_id,point,lon,lat\n";
  char buf[96];
  for (std::size_t b = 0; b < ds.size(); ++b) {
    for (std::size_t i = 0; i < ds.meta.points; ++i) {
      const auto p = ds.point_deg(b, i);
      std::snprintf(buf, sizeof buf, "%zu,%zu,%.9f,%.9f\n", b, i, p[0], p[1]);
      out << buf;
    }
  }
}

inline data::Dataset cmd_sample(const RunConfig& cfg, const std::string& checkpoint, const std::string& cond_path,
                                const SampleOptions& opt, const std::string& out_path,
                                std::ostream& msg = std::cout) {
  const auto ck = model::load_checkpoint(checkpoint);
  if (const auto d = config_diff(cfg.model, ck.config); !d.empty()) {
    throw ConfigError("checkpoint model differs from config: " + d);
  }
  const model::TrajTransformer<float> net(ck.config, ck.params);
  const auto source = data::read_dataset(cond_path);
  const auto gen = sample_dataset(net, source, cfg, opt);
  fs::create_directories(fs::path(out_path).parent_path().empty() ? fs::path(".") : fs::path(out_path).parent_path());
  data::write_dataset(gen, out_path);
  write_points_csv(gen, out_path + ".csv");
  msg << "sampled " << gen.size() << " trajectories with " << cfg.diffusion.substeps << " of "
      << cfg.diffusion.steps << " steps -> " << out_path << '\n';
  return gen;
}

inline void check_same_space(const data::Dataset& real, const data::Dataset& gen) {
  if (!(real.meta.box == gen.meta.box) || real.meta.metric_cell != gen.meta.metric_cell) {
    throw FormatError("eval: generated file uses a different bounding box or grid than the real file");
  }
}

inline metrics::MetricReport cmd_eval(const RunConfig& cfg, const std::string& real_path, const std::string& gen_path,
                                      const std::string& report_path, std::ostream& msg = std::cout) {
  const auto real = data::read_dataset(real_path);
  const auto gen = data::read_dataset(gen_path);
  check_same_space(real, gen);
  const auto report = metrics::evaluate(real, gen, real.meta.metric_grid(), cfg.eval);
  if (!report_path.empty()) {
    std::ofstream out(report_path, std::ios::trunc);
    if (!out) throw FormatError("cannot open '" + report_path + "' for writing");
    out << metrics::to_text(report);
  }
  msg << metrics::table_header() << '\n' << metrics::table_row(fs::path(gen_path).stem().string(), report) << '\n';
  if (report.pattern_truncated) msg << "note: fewer than " << cfg.eval.pattern_n << " visited cells\n";
  return report;
}

inline void cmd_plot(const RunConfig& cfg, const std::vector<std::string>& dataset_paths, const std::string& out_path,
                     const std::string& roads_path = "") {
  if (dataset_paths.empty()) throw ConfigError("plot: no dataset given");
  std::vector<data::Dataset> sets;
  for (const auto& p : dataset_paths) sets.push_back(data::read_dataset(p));
  if (cfg.plot.mode == "density") {
    plot_density(sets.front(), cfg.plot.width, cfg.plot.height).save(out_path);
    return;
  }
  std::vector<const data::Dataset*> ptrs;
  for (const auto& s : sets) ptrs.push_back(&s);
  std::optional<data::RoadMap> roads;
  if (!roads_path.empty()) roads = data::read_road_map(roads_path);
  plot_overlay(ptrs, cfg.plot.width, cfg.plot.height, roads ? &*roads : nullptr).save(out_path);
}

}  // namespace trajdiff::cli
