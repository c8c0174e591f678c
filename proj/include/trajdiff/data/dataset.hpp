#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "trajdiff/core.hpp"
#include "trajdiff/data/trajectory.hpp"
#include "trajdiff/io/binary.hpp"
#include "trajdiff/metrics/grid.hpp"
#include "trajdiff/model/config.hpp"

namespace trajdiff::data {

using model::ConditionVector;

struct DatasetMeta {
  BoundingBox box;
  std::uint32_t points = 50;
  metrics::GridSpec cond_grid;                   // coarse grid for dep/dst cells
  double metric_cell = metrics::kDefaultCellDeg;  // evaluation grid cell size
  double length_scale = 1.0;                     // degrees per unit of trip_length
  double utc_offset = 0.0;                       // seconds added before taking time of day
  bool generated = false;                        // model output, may leave [-1, 1]

  /// Evaluation raster covering the bounding box.
  [[nodiscard]] metrics::GridSpec metric_grid() const {
    return metrics::grid_covering(box.lon_min, box.lon_max, box.lat_min, box.lat_max, metric_cell);
  }

  friend bool operator==(const DatasetMeta&, const DatasetMeta&) = default;
};

/// Preprocessed trajectories in normalized coordinates with their conditions.
struct Dataset {
  DatasetMeta meta;
  TrajBatch<double> trajectories;
  std::vector<ConditionVector> conditions;
  std::vector<double> depart_times;  // seconds since epoch
  std::vector<double> durations;     // seconds

  [[nodiscard]] std::size_t size() const { return trajectories.batch; }

  [[nodiscard]] std::array<double, 2> point_deg(std::size_t b, std::size_t i) const {
    return denormalize(trajectories.at(b, i, 0), trajectories.at(b, i, 1), meta.box);
  }

  void validate() const {
    const std::size_t m = size();
    if (trajectories.length != meta.points) throw FormatError("dataset length does not match meta.points");
    if (conditions.size() != m || depart_times.size() != m || durations.size() != m) {
      throw FormatError("dataset side arrays are not aligned with trajectories");
    }
    if (!meta.generated) {
      for (double v : trajectories.data) {
        if (!(v >= -1.0 && v <= 1.0)) throw FormatError("dataset coordinate outside [-1, 1]");
      }
    }
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

inline Dataset empty_like(const Dataset& ds, std::size_t m = 0) {
  Dataset out;
  out.meta = ds.meta;
  out.trajectories = TrajBatch<double>(m, ds.meta.points);
  out.conditions.resize(m);
  out.depart_times.resize(m);
  out.durations.resize(m);
  return out;
}

inline Dataset subset(const Dataset& ds, std::span<const std::size_t> idx) {
  Dataset out = empty_like(ds, idx.size());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const auto src = ds.trajectories.row(idx[k]);
    std::copy(src.begin(), src.end(), out.trajectories.row(k).begin());
    out.conditions[k] = ds.conditions[idx[k]];
    out.depart_times[k] = ds.depart_times[idx[k]];
    out.durations[k] = ds.durations[idx[k]];
  }
  return out;
}

/// Shuffled split into (train, held_out) with round(fraction * M) held out.
inline std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, double held_out_fraction, std::uint64_t seed) {
  if (!(held_out_fraction >= 0.0 && held_out_fraction <= 1.0)) throw ConfigError("held-out fraction must be in [0,1]");
  std::vector<std::size_t> idx(ds.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(stream_seed(seed, 0x5917));
  std::shuffle(idx.begin(), idx.end(), rng);
  const auto hold = static_cast<std::size_t>(std::llround(held_out_fraction * static_cast<double>(idx.size())));
  std::vector<std::size_t> held(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(hold));
  std::vector<std::size_t> train(idx.begin() + static_cast<std::ptrdiff_t>(hold), idx.end());
  std::sort(held.begin(), held.end());
  std::sort(train.begin(), train.end());
  return {subset(ds, train), subset(ds, held)};
}

/// Six-hour departure window, 0..3.
inline int time_bucket(double depart, double utc_offset = 0.0) {
  const double day = 86400.0;
  double sec = std::fmod(depart + utc_offset, day);
  if (sec < 0) sec += day;
  return std::min(model::kTimeBuckets - 1, static_cast<int>(std::floor(model::kTimeBuckets * sec / day)));
}

/// Condition of a trajectory given in degrees.
inline ConditionVector extract_condition(const RawTrajectory& tr, const DatasetMeta& meta,
                                         metrics::ClampCounter* clamp = nullptr) {
  if (tr.points.empty()) throw ContractError("extract_condition: empty trajectory");
  const auto& a = tr.points.front();
  const auto& b = tr.points.back();
  ConditionVector c;
  c.dep_cell = metrics::cell_of(a.lon, a.lat, meta.cond_grid, clamp);
  c.dst_cell = metrics::cell_of(b.lon, b.lat, meta.cond_grid, clamp);
  c.time_bucket = time_bucket(a.t, meta.utc_offset);
  c.trip_length = path_length(tr) / meta.length_scale;
  return c;
}

struct PreprocessConfig {
  std::size_t min_len = 120;
  double max_gap = 25.0;
  std::size_t points = 50;
  ResampleMode mode = ResampleMode::kIndex;
  int cond_cells_per_axis = 8;
  double metric_cell = metrics::kDefaultCellDeg;
  double utc_offset = 0.0;
  std::optional<BoundingBox> box;  // taken from the data when unset
};

struct PreprocessStats {
  std::size_t input = 0;
  std::size_t after_length = 0;
  std::size_t after_gap = 0;
  metrics::ClampCounter clamp;
};

/// Length filter, gap filter and resampling; output stays in degrees.
inline std::vector<RawTrajectory> prepare(const std::vector<RawTrajectory>& raw, const PreprocessConfig& cfg,
                                          PreprocessStats* stats = nullptr) {
  auto kept = filter_min_length(raw, cfg.min_len);
  const std::size_t after_length = kept.size();
  kept = filter_time_gap(kept, cfg.max_gap);
  if (stats != nullptr) {
    stats->input = raw.size();
    stats->after_length = after_length;
    stats->after_gap = kept.size();
  }
  for (auto& tr : kept) tr = resample_uniform(tr, cfg.points, cfg.mode);
  return kept;
}

/// Meta for a set of prepared trajectories.
inline DatasetMeta make_meta(const std::vector<RawTrajectory>& prepared, const PreprocessConfig& cfg) {
  DatasetMeta meta;
  meta.points = static_cast<std::uint32_t>(cfg.points);
  if (cfg.box) {
    meta.box = *cfg.box;
  } else if (!prepared.empty()) {
    meta.box = bounding_box(prepared);
  }
  meta.box.validate();
  meta.metric_cell = cfg.metric_cell;
  meta.utc_offset = cfg.utc_offset;
  meta.cond_grid = metrics::grid_with_cells(meta.box.lon_min, meta.box.lon_max, meta.box.lat_min,
                                            meta.box.lat_max, cfg.cond_cells_per_axis);
  meta.length_scale = std::max(meta.box.lon_max - meta.box.lon_min, meta.box.lat_max - meta.box.lat_min);
  return meta;
}

/// Normalizes prepared trajectories and attaches their conditions.
inline Dataset build_dataset(const std::vector<RawTrajectory>& prepared, const DatasetMeta& meta,
                             metrics::ClampCounter* clamp = nullptr) {
  Dataset ds;
  ds.meta = meta;
  ds.trajectories = TrajBatch<double>(prepared.size(), meta.points);
  for (std::size_t b = 0; b < prepared.size(); ++b) {
    const auto& tr = prepared[b];
    if (tr.size() != meta.points) throw ContractError("build_dataset: trajectory not resampled to meta.points");
    for (std::size_t i = 0; i < tr.size(); ++i) {
      const auto uv = normalize(tr.points[i].lon, tr.points[i].lat, meta.box);
      for (int c = 0; c < 2; ++c) {
        if (!(std::abs(uv[c]) <= 1.0 + 1e-9)) throw NormalizationError("point outside the dataset bounding box");
        ds.trajectories.at(b, i, c) = std::clamp(uv[c], -1.0, 1.0);
      }
    }
    ds.conditions.push_back(extract_condition(tr, meta, clamp));
    ds.depart_times.push_back(tr.points.front().t);
    ds.durations.push_back(tr.duration());
  }
  return ds;
}

/// filter_min_length, filter_time_gap, resample_uniform, normalize.
inline Dataset preprocess(const std::vector<RawTrajectory>& raw, const PreprocessConfig& cfg,
                          PreprocessStats* stats = nullptr) {
  const auto prepared = prepare(raw, cfg, stats);
  const auto meta = make_meta(prepared, cfg);
  return build_dataset(prepared, meta, stats != nullptr ? &stats->clamp : nullptr);
}

/// Dataset rows back in degrees, with timestamps spread evenly over each
/// trajectory's duration.
inline std::vector<RawTrajectory> to_raw(const Dataset& ds) {
  std::vector<RawTrajectory> out(ds.size());
  const std::size_t n = ds.meta.points;
  for (std::size_t b = 0; b < ds.size(); ++b) {
    out[b].points.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto p = ds.point_deg(b, i);
      const double f = n > 1 ? static_cast<double>(i) / static_cast<double>(n - 1) : 0.0;
      out[b].points[i] = {p[0], p[1], ds.depart_times[b] + f * ds.durations[b]};
    }
  }
  return out;
}

// Dataset container, version 1 (see docs/formats.md):
//   magic "TRJDDATA", u32 version
//   meta: f64 lon_min, lon_max, lat_min, lat_max; u32 points;
//         cond grid f64 origin_lon, origin_lat, cell, i32 nx, ny;
//         f64 metric_cell, length_scale, utc_offset; u8 generated
//   u64 M, f64 coordinates (M*points*2)
//   per trajectory: i32 dep_cell, dst_cell, time_bucket; f64 trip_length,
//   depart_time, duration
//   u32 crc32
inline constexpr std::string_view kDatasetMagic = "TRJDDATA";
inline constexpr std::uint32_t kDatasetVersion = 1;

inline void write_dataset(const Dataset& ds, const std::string& path) {
  ds.validate();
  io::BinaryWriter w(kDatasetMagic, kDatasetVersion);
  const auto& m = ds.meta;
  w.put(m.box.lon_min);
  w.put(m.box.lon_max);
  w.put(m.box.lat_min);
  w.put(m.box.lat_max);
  w.put<std::uint32_t>(m.points);
  w.put(m.cond_grid.origin_lon);
  w.put(m.cond_grid.origin_lat);
  w.put(m.cond_grid.cell);
  w.put<std::int32_t>(m.cond_grid.nx);
  w.put<std::int32_t>(m.cond_grid.ny);
  w.put(m.metric_cell);
  w.put(m.length_scale);
  w.put(m.utc_offset);
  w.put<std::uint8_t>(m.generated);
  w.put<std::uint64_t>(ds.size());
  w.put_span(std::span<const double>(ds.trajectories.data));
  for (std::size_t b = 0; b < ds.size(); ++b) {
    const auto& c = ds.conditions[b];
    w.put<std::int32_t>(c.dep_cell);
    w.put<std::int32_t>(c.dst_cell);
    w.put<std::int32_t>(c.time_bucket);
    w.put(c.trip_length);
    w.put(ds.depart_times[b]);
    w.put(ds.durations[b]);
  }
  w.save(path);
}

inline Dataset read_dataset(const std::string& path) {
  io::BinaryReader r(path, kDatasetMagic, kDatasetVersion);
  Dataset ds;
  auto& m = ds.meta;
  m.box.lon_min = r.get<double>();
  m.box.lon_max = r.get<double>();
  m.box.lat_min = r.get<double>();
  m.box.lat_max = r.get<double>();
  m.points = r.get<std::uint32_t>();
  m.cond_grid.origin_lon = r.get<double>();
  m.cond_grid.origin_lat = r.get<double>();
  m.cond_grid.cell = r.get<double>();
  m.cond_grid.nx = r.get<std::int32_t>();
  m.cond_grid.ny = r.get<std::int32_t>();
  m.metric_cell = r.get<double>();
  m.length_scale = r.get<double>();
  m.utc_offset = r.get<double>();
  m.generated = r.get<std::uint8_t>() != 0;
  const auto count = r.get<std::uint64_t>();
  if (count > (std::uint64_t{1} << 32)) throw FormatError("implausible trajectory count in '" + path + "'");
  ds.trajectories = TrajBatch<double>(count, m.points);
  r.get_span(std::span<double>(ds.trajectories.data));
  for (std::uint64_t b = 0; b < count; ++b) {
    ConditionVector c;
    c.dep_cell = r.get<std::int32_t>();
    c.dst_cell = r.get<std::int32_t>();
    c.time_bucket = r.get<std::int32_t>();
    c.trip_length = r.get<double>();
    ds.conditions.push_back(c);
    ds.depart_times.push_back(r.get<double>());
    ds.durations.push_back(r.get<double>());
  }
  if (!r.at_end()) throw FormatError("trailing bytes in '" + path + "'");
  ds.validate();
  return ds;
}

}  // namespace trajdiff::data
