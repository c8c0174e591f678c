#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "trajdiff/core.hpp"
#include "trajdiff/data/dataset.hpp"
#include "trajdiff/metrics/grid.hpp"

namespace trajdiff::metrics {

/// Per-cell point counts on a grid.
struct CellHistogram {
  std::vector<double> counts;
  double total = 0.0;

  explicit CellHistogram(std::size_t cells = 0) : counts(cells, 0.0) {}

  void add(std::size_t cell, double w = 1.0) {
    counts[cell] += w;
    total += w;
  }

  void merge(const CellHistogram& o) {
    for (std::size_t k = 0; k < counts.size(); ++k) counts[k] += o.counts[k];
    total += o.total;
  }

  [[nodiscard]] std::vector<double> normalized() const {
    if (!(total > 0.0)) throw MetricError("cannot normalize an empty histogram");
    std::vector<double> p(counts.size());
    for (std::size_t k = 0; k < p.size(); ++k) p[k] = counts[k] / total;
    return p;
  }
};

/// Jensen-Shannon divergence in nats, in [0, ln 2].
inline double jsd(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw MetricError("jsd: distributions have different support sizes");
  double sp = 0.0, sq = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (!(p[k] >= 0.0) || !(q[k] >= 0.0)) throw MetricError("jsd: negative or non-finite probability");
    sp += p[k];
    sq += q[k];
  }
  if (std::abs(sp - 1.0) > 1e-9 || std::abs(sq - 1.0) > 1e-9) throw MetricError("jsd: input does not sum to 1");
  double acc = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double m = 0.5 * (p[k] + q[k]);
    if (p[k] > 0.0) acc += 0.5 * p[k] * std::log(p[k] / m);
    if (q[k] > 0.0) acc += 0.5 * q[k] * std::log(q[k] / m);
  }
  return std::clamp(acc, 0.0, std::numbers::ln2);
}

inline double jsd(const CellHistogram& a, const CellHistogram& b) { return jsd(a.normalized(), b.normalized()); }

/// Which points of each trajectory a histogram counts.
enum class PointSet { kAll, kStart, kEnd };

inline CellHistogram cell_histogram(const data::Dataset& ds, const GridSpec& grid, PointSet which = PointSet::kAll,
                                    ClampCounter* clamp = nullptr) {
  CellHistogram h(grid.cells());
  const std::size_t n = ds.meta.points;
  for (std::size_t b = 0; b < ds.size(); ++b) {
    const std::size_t lo = which == PointSet::kEnd ? n - 1 : 0;
    const std::size_t hi = which == PointSet::kStart ? 1 : n;
    for (std::size_t i = lo; i < hi; ++i) {
      const auto p = ds.point_deg(b, i);
      h.add(static_cast<std::size_t>(cell_of(p[0], p[1], grid, clamp)));
    }
  }
  return h;
}

namespace detail {
inline void require_nonempty(const data::Dataset& real, const data::Dataset& gen) {
  if (real.size() == 0 || gen.size() == 0) throw MetricError("metric needs two nonempty datasets");
}
}  // namespace detail

inline double density_error(const data::Dataset& real, const data::Dataset& gen, const GridSpec& grid,
                            ClampCounter* clamp = nullptr) {
  detail::require_nonempty(real, gen);
  return jsd(cell_histogram(real, grid, PointSet::kAll, clamp), cell_histogram(gen, grid, PointSet::kAll, clamp));
}

/// Mean of start-cell and end-cell JSD, or the JSD of the joint (start, end)
/// distribution when `joint` is set.
inline double trip_error(const data::Dataset& real, const data::Dataset& gen, const GridSpec& grid,
                         bool joint = false, ClampCounter* clamp = nullptr) {
  detail::require_nonempty(real, gen);
  if (!joint) {
    const double s = jsd(cell_histogram(real, grid, PointSet::kStart, clamp),
                         cell_histogram(gen, grid, PointSet::kStart, clamp));
    const double e =
        jsd(cell_histogram(real, grid, PointSet::kEnd, clamp), cell_histogram(gen, grid, PointSet::kEnd, clamp));
    return 0.5 * (s + e);
  }
  std::map<std::pair<int, int>, std::array<double, 2>> pairs;
  const data::Dataset* sets[2] = {&real, &gen};
  for (int k = 0; k < 2; ++k) {
    const auto& ds = *sets[k];
    for (std::size_t b = 0; b < ds.size(); ++b) {
      const auto a = ds.point_deg(b, 0);
      const auto z = ds.point_deg(b, ds.meta.points - 1);
      pairs[{cell_of(a[0], a[1], grid, clamp), cell_of(z[0], z[1], grid, clamp)}][k] += 1.0;
    }
  }
  std::vector<double> p, q;
  for (const auto& [key, c] : pairs) {
    p.push_back(c[0] / static_cast<double>(real.size()));
    q.push_back(c[1] / static_cast<double>(gen.size()));
  }
  return jsd(p, q);
}

/// Path length of every trajectory, in degrees.
inline std::vector<double> trip_lengths(const data::Dataset& ds) {
  std::vector<double> out(ds.size());
  for (std::size_t b = 0; b < ds.size(); ++b) {
    double acc = 0.0;
    auto prev = ds.point_deg(b, 0);
    for (std::size_t i = 1; i < ds.meta.points; ++i) {
      const auto cur = ds.point_deg(b, i);
      acc += std::hypot(cur[0] - prev[0], cur[1] - prev[1]);
      prev = cur;
    }
    out[b] = acc;
  }
  return out;
}

/// JSD of two value samples binned into `bins` equal bins over the pooled range.
inline double binned_jsd(std::span<const double> a, std::span<const double> b, int bins) {
  if (bins < 1) throw MetricError("length histogram needs at least one bin");
  if (a.empty() || b.empty()) throw MetricError("metric needs two nonempty samples");
  double lo = INFINITY, hi = -INFINITY;
  for (const auto* s : {&a, &b}) {
    for (double v : *s) {
      if (!std::isfinite(v)) throw MetricError("non-finite value in length histogram");
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  const double width = (hi - lo) / bins;
  auto hist = [&](std::span<const double> s) {
    std::vector<double> h(static_cast<std::size_t>(bins), 0.0);
    for (double v : s) {
      int k = width > 0.0 ? static_cast<int>(std::floor((v - lo) / width)) : 0;
      h[static_cast<std::size_t>(std::clamp(k, 0, bins - 1))] += 1.0 / static_cast<double>(s.size());
    }
    return h;
  };
  return jsd(hist(a), hist(b));
}

inline double length_error(const data::Dataset& real, const data::Dataset& gen, int bins = 50) {
  detail::require_nonempty(real, gen);
  return binned_jsd(trip_lengths(real), trip_lengths(gen), bins);
}

struct PatternResult {
  double score = 0.0;
  bool truncated = false;  // fewer than n nonzero cells in either histogram
};

/// Cells with the `n` largest counts, ties broken by ascending index; zero
/// cells are never selected.
inline std::vector<std::size_t> top_cells(const CellHistogram& h, std::size_t n) {
  std::vector<std::size_t> idx;
  for (std::size_t k = 0; k < h.counts.size(); ++k) {
    if (h.counts[k] > 0.0) idx.push_back(k);
  }
  const std::size_t keep = std::min(n, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(keep), idx.end(),
                    [&](std::size_t a, std::size_t b) {
                      return h.counts[a] != h.counts[b] ? h.counts[a] > h.counts[b] : a < b;
                    });
  idx.resize(keep);
  std::sort(idx.begin(), idx.end());
  return idx;
}

inline PatternResult pattern_score(const CellHistogram& real, const CellHistogram& gen, std::size_t n = 50) {
  if (n < 1) throw MetricError("pattern score needs n >= 1");
  const auto p = top_cells(real, n);
  const auto g = top_cells(gen, n);
  PatternResult r;
  r.truncated = p.size() < n || g.size() < n;
  std::vector<std::size_t> both;
  std::set_intersection(p.begin(), p.end(), g.begin(), g.end(), std::back_inserter(both));
  if (both.empty()) return r;
  const double precision = static_cast<double>(both.size()) / static_cast<double>(g.size());
  const double recall = static_cast<double>(both.size()) / static_cast<double>(p.size());
  r.score = 2.0 * precision * recall / (precision + recall);
  return r;
}

inline PatternResult pattern_score(const data::Dataset& real, const data::Dataset& gen, const GridSpec& grid,
                                   std::size_t n = 50) {
  detail::require_nonempty(real, gen);
  return pattern_score(cell_histogram(real, grid), cell_histogram(gen, grid), n);
}

inline data::Dataset bucket_subset(const data::Dataset& ds, int bucket) {
  std::vector<std::size_t> idx;
  for (std::size_t b = 0; b < ds.size(); ++b) {
    if (ds.conditions[b].time_bucket == bucket) idx.push_back(b);
  }
  return data::subset(ds, idx);
}

/// Density error per departure bucket; absent where either side has no
/// trajectories in the bucket.
inline std::array<std::optional<double>, model::kTimeBuckets> timeperiod_density(const data::Dataset& real,
                                                                                  const data::Dataset& gen,
                                                                                  const GridSpec& grid) {
  std::array<std::optional<double>, model::kTimeBuckets> out;
  for (int k = 0; k < model::kTimeBuckets; ++k) {
    const auto r = bucket_subset(real, k);
    const auto g = bucket_subset(gen, k);
    if (r.size() > 0 && g.size() > 0) out[static_cast<std::size_t>(k)] = density_error(r, g, grid);
  }
  return out;
}

struct EvalOptions {
  std::size_t pattern_n = 50;
  int length_bins = 50;
  bool joint_trip = false;
};

struct MetricReport {
  double density = 0.0;
  double trip = 0.0;
  double length = 0.0;
  double pattern = 0.0;
  bool pattern_truncated = false;
  std::array<std::optional<double>, model::kTimeBuckets> period;
  std::size_t real_count = 0;
  std::size_t gen_count = 0;
  std::size_t clamped = 0;  // generated or real points outside the grid

  friend bool operator==(const MetricReport&, const MetricReport&) = default;
};

inline MetricReport evaluate(const data::Dataset& real, const data::Dataset& gen, const GridSpec& grid,
                             const EvalOptions& opt = {}) {
  detail::require_nonempty(real, gen);
  ClampCounter clamp;
  MetricReport r;
  const auto hr = cell_histogram(real, grid, PointSet::kAll, &clamp);
  const auto hg = cell_histogram(gen, grid, PointSet::kAll, &clamp);
  r.density = jsd(hr, hg);
  r.trip = trip_error(real, gen, grid, opt.joint_trip);
  r.length = length_error(real, gen, opt.length_bins);
  const auto pat = pattern_score(hr, hg, opt.pattern_n);
  r.pattern = pat.score;
  r.pattern_truncated = pat.truncated;
  r.period = timeperiod_density(real, gen, grid);
  r.real_count = real.size();
  r.gen_count = gen.size();
  r.clamped = clamp.clamped;
  return r;
}

namespace detail {
inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}
}  // namespace detail

/// One `key=value` line per field; absent periods are written as `absent`.
inline std::string to_text(const MetricReport& r) {
  std::ostringstream out;
  out << "density_error=" << detail::fmt17(r.density) << '\n'
      << "trip_error=" << detail::fmt17(r.trip) << '\n'
      << "length_error=" << detail::fmt17(r.length) << '\n'
      << "pattern_score=" << detail::fmt17(r.pattern) << '\n'
      << "pattern_truncated=" << (r.pattern_truncated ? 1 : 0) << '\n';
  for (std::size_t k = 0; k < r.period.size(); ++k) {
    out << "period" << k << "_density=" << (r.period[k] ? detail::fmt17(*r.period[k]) : "absent") << '\n';
  }
  out << "real_count=" << r.real_count << '\n' << "gen_count=" << r.gen_count << '\n' << "clamped=" << r.clamped << '\n';
  return out.str();
}

inline MetricReport report_from_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("malformed report line: " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto get = [&](const std::string& k) -> const std::string& {
    const auto it = kv.find(k);
    if (it == kv.end()) throw FormatError("report lacks key '" + k + "'");
    return it->second;
  };
  auto num = [&](const std::string& k) {
    try {
      return std::stod(get(k));
    } catch (const std::logic_error&) {
      throw FormatError("report key '" + k + "' is not a number");
    }
  };
  MetricReport r;
  r.density = num("density_error");
  r.trip = num("trip_error");
  r.length = num("length_error");
  r.pattern = num("pattern_score");
  r.pattern_truncated = get("pattern_truncated") == "1";
  for (std::size_t k = 0; k < r.period.size(); ++k) {
    const auto key = "period" + std::to_string(k) + "_density";
    if (get(key) != "absent") r.period[k] = num(key);
  }
  r.real_count = static_cast<std::size_t>(num("real_count"));
  r.gen_count = static_cast<std::size_t>(num("gen_count"));
  r.clamped = static_cast<std::size_t>(num("clamped"));
  return r;
}

/// Console row: density, trip, length, pattern.
inline std::string table_row(const std::string& label, const MetricReport& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-16s | %8.4f | %8.4f | %8.4f | %8.3f", label.c_str(), r.density, r.trip, r.length,
                r.pattern);
  return buf;
}

inline std::string table_header() {
  return "model            |  density |     trip |   length |  pattern";
}

}  // namespace trajdiff::metrics
