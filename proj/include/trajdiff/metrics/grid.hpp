#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>

#include "trajdiff/core.hpp"

namespace trajdiff::metrics {

/// About 50 m at mid latitudes.
inline constexpr double kDefaultCellDeg = 0.00045;

/// Square-cell raster anchored at (origin_lon, origin_lat), row-major with
/// longitude varying fastest.
struct GridSpec {
  double origin_lon = 0.0;
  double origin_lat = 0.0;
  double cell = kDefaultCellDeg;
  int nx = 1;
  int ny = 1;

  [[nodiscard]] std::size_t cells() const { return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny); }

  void validate() const {
    if (!(cell > 0.0)) throw ConfigError("grid cell size must be positive");
    if (nx < 1 || ny < 1) throw ConfigError("grid needs at least one cell per axis");
  }

  friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

/// Counts points that fell outside the grid and were clamped to its border.
struct ClampCounter {
  std::size_t clamped = 0;
};

namespace detail {
inline int axis_index(double v, double origin, double cell, int n, bool& outside) {
  const double f = (v - origin) / cell;
  // Points computed as origin + k * cell may land a few ulps past an edge.
  const double slack = 1e-9 * static_cast<double>(n);
  if (!(f >= -slack && f <= static_cast<double>(n) + slack)) outside = true;
  if (!std::isfinite(f)) return f > 0 ? n - 1 : 0;
  const double fl = std::floor(f);
  if (fl < 0.0) return 0;
  if (fl >= static_cast<double>(n)) return n - 1;  // includes the exact upper edge
  return static_cast<int>(fl);
}
}  // namespace detail

/// floor((lon - origin) / cell) + nx * floor((lat - origin) / cell). Points on
/// the closed upper edge belong to the last cell; points outside the closed
/// extent are clamped and counted.
inline int cell_of(double lon, double lat, const GridSpec& g, ClampCounter* counter = nullptr) {
  bool outside = false;
  const int ix = detail::axis_index(lon, g.origin_lon, g.cell, g.nx, outside);
  const int iy = detail::axis_index(lat, g.origin_lat, g.cell, g.ny, outside);
  if (outside && counter != nullptr) ++counter->clamped;
  return ix + g.nx * iy;
}

/// Grid with cells of `cell` degrees covering [lon_min, lon_max] x [lat_min, lat_max].
inline GridSpec grid_covering(double lon_min, double lon_max, double lat_min, double lat_max, double cell) {
  GridSpec g{lon_min, lat_min, cell, 1, 1};
  g.nx = std::max(1, static_cast<int>(std::ceil((lon_max - lon_min) / cell)));
  g.ny = std::max(1, static_cast<int>(std::ceil((lat_max - lat_min) / cell)));
  g.validate();
  return g;
}

/// Coarse grid with `per_axis` square cells along the longer side of the box.
inline GridSpec grid_with_cells(double lon_min, double lon_max, double lat_min, double lat_max, int per_axis) {
  if (per_axis < 1) throw ConfigError("grid needs at least one cell per axis");
  const double span = std::max(lon_max - lon_min, lat_max - lat_min);
  if (!(span > 0.0)) throw ConfigError("cannot grid a degenerate bounding box");
  const double cell = span / per_axis;
  GridSpec g{lon_min, lat_min, cell, per_axis, per_axis};
  g.nx = std::clamp(static_cast<int>(std::ceil((lon_max - lon_min) / cell - 1e-9)), 1, per_axis);
  g.ny = std::clamp(static_cast<int>(std::ceil((lat_max - lat_min) / cell - 1e-9)), 1, per_axis);
  return g;
}

}  // namespace trajdiff::metrics
