#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "trajdiff/core.hpp"
#include "trajdiff/data/dataset.hpp"
#include "trajdiff/data/synth_city.hpp"
#include "trajdiff/metrics/metrics.hpp"

namespace trajdiff::cli {

using Rgb = std::array<std::uint8_t, 3>;

/// RGB raster with a plotting frame mapping a bounding box onto the inner area.
class Canvas {
 public:
  static constexpr int kMargin = 24;

  Canvas(int width, int height, data::BoundingBox box)
      : w_(width), h_(height), box_(box), px_(static_cast<std::size_t>(width) * height, Rgb{255, 255, 255}) {
    box_.validate();
    draw_axes();
  }

  [[nodiscard]] int width() const { return w_; }
  [[nodiscard]] int height() const { return h_; }
  [[nodiscard]] const Rgb& at(int x, int y) const { return px_[static_cast<std::size_t>(y) * w_ + x]; }

  void set(int x, int y, Rgb c) {
    if (x >= 0 && y >= 0 && x < w_ && y < h_) px_[static_cast<std::size_t>(y) * w_ + x] = c;
  }

  /// Pixel of a point in degrees; latitude grows upwards.
  [[nodiscard]] std::array<int, 2> to_pixel(double lon, double lat) const {
    const double fx = (lon - box_.lon_min) / (box_.lon_max - box_.lon_min);
    const double fy = (lat - box_.lat_min) / (box_.lat_max - box_.lat_min);
    const int iw = w_ - 2 * kMargin - 1;
    const int ih = h_ - 2 * kMargin - 1;
    return {kMargin + static_cast<int>(std::lround(std::clamp(fx, -0.05, 1.05) * iw)),
            h_ - 1 - kMargin - static_cast<int>(std::lround(std::clamp(fy, -0.05, 1.05) * ih))};
  }

  void line(std::array<int, 2> a, std::array<int, 2> b, Rgb c) {
    int x0 = a[0], y0 = a[1];
    const int dx = std::abs(b[0] - x0), dy = -std::abs(b[1] - y0);
    const int sx = x0 < b[0] ? 1 : -1, sy = y0 < b[1] ? 1 : -1;
    int err = dx + dy;
    while (true) {
      set(x0, y0, c);
      if (x0 == b[0] && y0 == b[1]) break;
      const int e2 = 2 * err;
      if (e2 >= dy) {
        err += dy;
        x0 += sx;
      }
      if (e2 <= dx) {
        err += dx;
        y0 += sy;
      }
    }
  }

  void fill(int x0, int y0, int x1, int y1, Rgb c) {
    for (int y = std::min(y0, y1); y <= std::max(y0, y1); ++y) {
      for (int x = std::min(x0, x1); x <= std::max(x0, x1); ++x) set(x, y, c);
    }
  }

  /// Binary PPM (P6).
  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open '" + path + "' for writing");
    out << "P6\n" << w_ << ' ' << h_ << "\n255\n";
    for (const auto& p : px_) out.write(reinterpret_cast<const char*>(p.data()), 3);
    if (!out) throw FormatError("write failed for '" + path + "'");
  }

 private:
  void draw_axes() {
    const Rgb ink{0, 0, 0};
    const int l = kMargin - 1, r = w_ - kMargin, t = kMargin - 1, b = h_ - kMargin;
    line({l, t}, {r, t}, ink);
    line({l, b}, {r, b}, ink);
    line({l, t}, {l, b}, ink);
    line({r, t}, {r, b}, ink);
    for (int k = 0; k <= 10; ++k) {
      const int x = l + (r - l) * k / 10;
      const int y = t + (b - t) * k / 10;
      line({x, b}, {x, b + 5}, ink);
      line({l - 5, y}, {l, y}, ink);
    }
  }

  int w_, h_;
  data::BoundingBox box_;
  std::vector<Rgb> px_;
};

/// Dark-to-bright ramp for v in [0, 1].
inline Rgb heat(double v) {
  v = std::clamp(v, 0.0, 1.0);
  const double r = std::clamp(1.5 * v, 0.0, 1.0);
  const double g = std::clamp(1.5 * v - 0.5, 0.0, 1.0);
  const double b = std::clamp(0.4 + 0.6 * v - 0.8 * std::abs(v - 0.35), 0.0, 1.0);
  return {static_cast<std::uint8_t>(std::lround(255 * r)), static_cast<std::uint8_t>(std::lround(255 * g)),
          static_cast<std::uint8_t>(std::lround(255 * b))};
}

/// Cell-count heat map on the dataset's evaluation grid, log-scaled.
inline Canvas plot_density(const data::Dataset& ds, int width, int height) {
  Canvas cv(width, height, ds.meta.box);
  if (ds.size() == 0) return cv;
  const auto grid = ds.meta.metric_grid();
  const auto h = metrics::cell_histogram(ds, grid);
  const double top = std::log1p(*std::max_element(h.counts.begin(), h.counts.end()));
  for (int iy = 0; iy < grid.ny; ++iy) {
    for (int ix = 0; ix < grid.nx; ++ix) {
      const double c = h.counts[static_cast<std::size_t>(ix + grid.nx * iy)];
      if (c <= 0.0) continue;
      const auto a = cv.to_pixel(grid.origin_lon + ix * grid.cell, grid.origin_lat + iy * grid.cell);
      const auto b = cv.to_pixel(grid.origin_lon + (ix + 1) * grid.cell, grid.origin_lat + (iy + 1) * grid.cell);
      cv.fill(a[0], a[1], std::max(a[0], b[0] - 1), std::min(a[1], b[1] + 1), heat(std::log1p(c) / top));
    }
  }
  return cv;
}

inline constexpr Rgb kRoadColor{170, 170, 170};
inline constexpr Rgb kAvenueColor{110, 110, 110};

inline void draw_roads(Canvas& cv, const data::RoadMap& roads) {
  for (const auto& s : roads.segments) {
    cv.line(cv.to_pixel(s.lon0, s.lat0), cv.to_pixel(s.lon1, s.lat1), s.avenue ? kAvenueColor : kRoadColor);
  }
}

/// Trajectory polylines, optionally drawn over a road map.
inline Canvas plot_overlay(const std::vector<const data::Dataset*>& sets, int width, int height,
                           const data::RoadMap* roads = nullptr) {
  static constexpr Rgb kPalette[] = {{200, 30, 30}, {30, 90, 200}, {20, 150, 60}, {200, 120, 0}};
  const data::BoundingBox box = sets.empty() ? data::BoundingBox{} : sets.front()->meta.box;
  Canvas cv(width, height, box);
  if (roads != nullptr) draw_roads(cv, *roads);
  for (std::size_t k = 0; k < sets.size(); ++k) {
    const auto& ds = *sets[k];
    const Rgb c = kPalette[k % 4];
    for (std::size_t b = 0; b < ds.size(); ++b) {
      auto prev = ds.point_deg(b, 0);
      cv.set(cv.to_pixel(prev[0], prev[1])[0], cv.to_pixel(prev[0], prev[1])[1], c);
      for (std::size_t i = 1; i < ds.meta.points; ++i) {
        const auto cur = ds.point_deg(b, i);
        cv.line(cv.to_pixel(prev[0], prev[1]), cv.to_pixel(cur[0], cur[1]), c);
        prev = cur;
      }
    }
  }
  return cv;
}

}  // namespace trajdiff::cli
