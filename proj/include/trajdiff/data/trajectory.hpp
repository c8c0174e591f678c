#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "trajdiff/core.hpp"

namespace trajdiff::data {

struct RawPoint {
  double lon = 0.0;  // degrees
  double lat = 0.0;  // degrees
  double t = 0.0;    // seconds since epoch

  friend bool operator==(const RawPoint&, const RawPoint&) = default;
};

/// Variable-length GPS log with strictly increasing timestamps.
struct RawTrajectory {
  std::vector<RawPoint> points;

  [[nodiscard]] std::size_t size() const { return points.size(); }
  [[nodiscard]] double duration() const { return points.empty() ? 0.0 : points.back().t - points.front().t; }
  friend bool operator==(const RawTrajectory&, const RawTrajectory&) = default;
};

/// Sum of Euclidean distances between consecutive points, in degrees.
template <typename Points>
double path_length(const Points& pts) {
  double acc = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    acc += std::hypot(pts[i][0] - pts[i - 1][0], pts[i][1] - pts[i - 1][1]);
  }
  return acc;
}

inline double path_length(const RawTrajectory& tr) {
  double acc = 0.0;
  for (std::size_t i = 1; i < tr.points.size(); ++i) {
    acc += std::hypot(tr.points[i].lon - tr.points[i - 1].lon, tr.points[i].lat - tr.points[i - 1].lat);
  }
  return acc;
}

/// Keeps trajectories with at least `min_len` points, in order.
inline std::vector<RawTrajectory> filter_min_length(const std::vector<RawTrajectory>& trajs,
                                                    std::size_t min_len = 120) {
  std::vector<RawTrajectory> out;
  std::copy_if(trajs.begin(), trajs.end(), std::back_inserter(out),
               [&](const RawTrajectory& t) { return t.size() >= min_len; });
  return out;
}

/// Drops any trajectory with a consecutive-point gap strictly above `max_gap`
/// seconds; a gap of exactly `max_gap` is kept.
inline std::vector<RawTrajectory> filter_time_gap(const std::vector<RawTrajectory>& trajs,
                                                  double max_gap = 25.0) {
  std::vector<RawTrajectory> out;
  for (const auto& tr : trajs) {
    bool ok = true;
    for (std::size_t i = 1; i < tr.points.size() && ok; ++i) {
      ok = tr.points[i].t - tr.points[i - 1].t <= max_gap;
    }
    if (ok) out.push_back(tr);
  }
  return out;
}

enum class ResampleMode { kIndex, kArcLength };

inline std::string to_string(ResampleMode m) { return m == ResampleMode::kIndex ? "index" : "arclength"; }

inline ResampleMode resample_mode_from_string(const std::string& s) {
  if (s == "index") return ResampleMode::kIndex;
  if (s == "arclength") return ResampleMode::kArcLength;
  throw ConfigError("unknown resample mode '" + s + "'");
}

namespace detail {
inline RawPoint lerp(const RawPoint& a, const RawPoint& b, double f) {
  if (f == 0.0) return a;
  return {a.lon + (b.lon - a.lon) * f, a.lat + (b.lat - a.lat) * f, a.t + (b.t - a.t) * f};
}
}  // namespace detail

/// Resamples to exactly `n` points by linear interpolation. Index mode places
/// samples at fractional indices k(L-1)/(n-1); arc-length mode spaces them
/// evenly along the path. Endpoints are copied exactly; timestamps are
/// interpolated alongside the coordinates.
inline RawTrajectory resample_uniform(const RawTrajectory& tr, std::size_t n = 200,
                                      ResampleMode mode = ResampleMode::kIndex) {
  const std::size_t len = tr.size();
  if (len < 2) throw ResampleError("resampling needs at least 2 points, got " + std::to_string(len));
  if (n < 2) throw ResampleError("resample target must be >= 2 points");
  RawTrajectory out;
  out.points.resize(n);
  if (mode == ResampleMode::kIndex) {
    for (std::size_t k = 0; k < n; ++k) {
      const double pos = static_cast<double>(k * (len - 1)) / static_cast<double>(n - 1);
      const auto i = std::min(static_cast<std::size_t>(pos), len - 2);
      out.points[k] = detail::lerp(tr.points[i], tr.points[i + 1], pos - static_cast<double>(i));
    }
  } else {
    std::vector<double> cum(len, 0.0);
    for (std::size_t i = 1; i < len; ++i) {
      cum[i] = cum[i - 1] + std::hypot(tr.points[i].lon - tr.points[i - 1].lon, tr.points[i].lat - tr.points[i - 1].lat);
    }
    const double total = cum.back();
    std::size_t seg = 0;
    for (std::size_t k = 0; k < n; ++k) {
      const double target = total * static_cast<double>(k) / static_cast<double>(n - 1);
      while (seg + 2 < len && cum[seg + 1] < target) ++seg;
      const double span = cum[seg + 1] - cum[seg];
      const double f = span > 0.0 ? std::clamp((target - cum[seg]) / span, 0.0, 1.0) : 0.0;
      out.points[k] = detail::lerp(tr.points[seg], tr.points[seg + 1], f);
    }
  }
  out.points.front() = tr.points.front();
  out.points.back() = tr.points.back();
  return out;
}

/// Longitude/latitude box used to map coordinates onto [-1, 1]^2.
struct BoundingBox {
  double lon_min = 0.0;
  double lon_max = 1.0;
  double lat_min = 0.0;
  double lat_max = 1.0;

  void validate() const {
    if (!(lon_max > lon_min) || !(lat_max > lat_min)) {
      throw NormalizationError("degenerate bounding box");
    }
  }
  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

inline BoundingBox bounding_box(const std::vector<RawTrajectory>& trajs) {
  BoundingBox b{INFINITY, -INFINITY, INFINITY, -INFINITY};
  for (const auto& tr : trajs) {
    for (const auto& p : tr.points) {
      b.lon_min = std::min(b.lon_min, p.lon);
      b.lon_max = std::max(b.lon_max, p.lon);
      b.lat_min = std::min(b.lat_min, p.lat);
      b.lat_max = std::max(b.lat_max, p.lat);
    }
  }
  return b;
}

inline std::array<double, 2> normalize(double lon, double lat, const BoundingBox& box) {
  box.validate();
  return {2.0 * (lon - box.lon_min) / (box.lon_max - box.lon_min) - 1.0,
          2.0 * (lat - box.lat_min) / (box.lat_max - box.lat_min) - 1.0};
}

inline std::array<double, 2> denormalize(double u, double v, const BoundingBox& box) {
  box.validate();
  return {box.lon_min + (u + 1.0) * (box.lon_max - box.lon_min) / 2.0,
          box.lat_min + (v + 1.0) * (box.lat_max - box.lat_min) / 2.0};
}

}  // namespace trajdiff::data
