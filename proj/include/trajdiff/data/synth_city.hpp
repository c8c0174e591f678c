#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "trajdiff/core.hpp"
#include "trajdiff/data/trajectory.hpp"

namespace trajdiff::data {

struct SynthCityConfig {
  int lattice = 20;                    // streets per axis
  double block_deg = 0.0018;           // spacing between parallel streets
  double origin_lon = 104.04;
  double origin_lat = 30.65;
  double avenue_fraction = 0.25;       // share of streets that are avenues
  double avenue_weight = 3.0;          // turn-rate multiplier towards avenues
  double turn_prob = 0.3;              // per-intersection turn probability
  double speed_min = 0.2;              // grid cells per sample
  double speed_max = 0.6;
  double cell_deg = 0.00045;
  double jitter_deg = 0.00002;
  std::size_t trips = 1000;
  std::uint64_t seed = 1;
  std::size_t min_points = 120;
  std::size_t max_points = 200;
  double sample_interval = 3.0;        // seconds
  double gap_prob = 0.05;              // chance a trip contains one logging gap
  double gap_min = 26.0;
  double gap_max = 90.0;
  double day_start = 1475280000.0;     // departure window start, seconds since epoch
  double day_window = 86400.0;

  void validate() const {
    if (lattice < 2) throw ConfigError("synth city lattice must be at least 2x2");
    if (!(block_deg > 0.0) || !(cell_deg > 0.0)) throw ConfigError("synth city block and cell sizes must be positive");
    if (!(jitter_deg >= 0.0)) throw ConfigError("synth city jitter must be >= 0");
    if (!(avenue_fraction >= 0.0 && avenue_fraction <= 1.0)) throw ConfigError("avenue_fraction must be in [0,1]");
    if (!(turn_prob >= 0.0 && turn_prob <= 1.0)) throw ConfigError("turn_prob must be in [0,1]");
    if (!(avenue_weight > 0.0)) throw ConfigError("avenue_weight must be positive");
    if (!(speed_min > 0.0) || speed_max < speed_min) throw ConfigError("speed range must satisfy 0 < min <= max");
    if (min_points < 2 || max_points < min_points) throw ConfigError("point range must satisfy 2 <= min <= max");
    if (!(sample_interval > 0.0)) throw ConfigError("sample_interval must be positive");
    if (!(gap_prob >= 0.0 && gap_prob <= 1.0) || gap_max < gap_min) throw ConfigError("invalid gap settings");
    if (!(day_window >= 0.0)) throw ConfigError("day_window must be >= 0");
  }
};

struct RoadSegment {
  double lon0, lat0, lon1, lat1;
  bool avenue;
};

struct RoadMap {
  std::vector<RoadSegment> segments;
};

struct SynthCity {
  std::vector<RawTrajectory> trips;
  RoadMap roads;
};

namespace detail {

struct Lattice {
  const SynthCityConfig& cfg;
  int period;

  explicit Lattice(const SynthCityConfig& c)
      : cfg(c), period(c.avenue_fraction > 0.0 ? std::max(1, static_cast<int>(std::lround(1.0 / c.avenue_fraction))) : 0) {}

  [[nodiscard]] bool avenue(int street) const { return period > 0 && street % period == 0; }
  [[nodiscard]] double lon(double x) const { return cfg.origin_lon + x * cfg.block_deg; }
  [[nodiscard]] double lat(double y) const { return cfg.origin_lat + y * cfg.block_deg; }
};

// Vehicle on the lattice. Coordinates are in block units; the coordinate
// across the current street is always an integer.
struct Walker {
  double pos[2];
  int axis;  // 0 moving along x, 1 along y
  int dir;   // +1 or -1

  void advance(double dist, const Lattice& lat, Rng& rng) {
    const int last = lat.cfg.lattice - 1;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    while (dist > 0.0) {
      double& p = pos[axis];
      const double next = dir > 0 ? std::floor(p) + 1.0 : std::ceil(p) - 1.0;
      const double gap = std::abs(next - p);
      if (dist < gap) {
        p += dir * dist;
        return;
      }
      p = next;
      dist -= gap;
      const int here = static_cast<int>(next);
      const int cross = static_cast<int>(pos[1 - axis]);
      const bool blocked = (dir > 0 && here == last) || (dir < 0 && here == 0);
      double prob = lat.cfg.turn_prob;
      if (lat.avenue(here)) prob *= lat.cfg.avenue_weight;
      if (lat.avenue(cross)) prob /= lat.cfg.avenue_weight;
      if (blocked || u(rng) < std::min(1.0, prob)) {
        const bool up = cross < last;
        const bool down = cross > 0;
        axis = 1 - axis;
        dir = (up && down) ? (u(rng) < 0.5 ? 1 : -1) : (up ? 1 : -1);
      }
    }
  }
};

inline RawTrajectory simulate_trip(const SynthCityConfig& cfg, const Lattice& lat, std::size_t index) {
  Rng rng(stream_seed(cfg.seed, index));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> centre(0.0, cfg.lattice / 4.0);
  const int last = cfg.lattice - 1;
  const double mid = last / 2.0;

  Walker w{};
  for (double& p : w.pos) p = std::clamp(std::round(mid + centre(rng)), 0.0, static_cast<double>(last));
  w.axis = u(rng) < 0.5 ? 0 : 1;
  const double along = w.pos[w.axis];
  w.dir = along < mid ? 1 : (along > mid ? -1 : (u(rng) < 0.5 ? 1 : -1));

  std::uniform_int_distribution<std::size_t> count(cfg.min_points, cfg.max_points);
  const std::size_t n = count(rng);
  const double speed = cfg.speed_min + (cfg.speed_max - cfg.speed_min) * u(rng);
  const double step_blocks = speed * cfg.cell_deg / cfg.block_deg;
  const double depart = cfg.day_start + cfg.day_window * u(rng);

  std::size_t gap_at = n;
  double gap_len = 0.0;
  if (u(rng) < cfg.gap_prob && n > 1) {
    gap_at = 1 + static_cast<std::size_t>(u(rng) * static_cast<double>(n - 1));
    gap_len = cfg.gap_min + (cfg.gap_max - cfg.gap_min) * u(rng);
  }

  std::normal_distribution<double> jitter(0.0, 1.0);
  RawTrajectory tr;
  tr.points.reserve(n);
  double t = depart;
  for (std::size_t k = 0; k < n; ++k) {
    if (k > 0) {
      double dt = cfg.sample_interval;
      if (k == gap_at) dt += gap_len;
      w.advance(step_blocks * dt / cfg.sample_interval, lat, rng);
      t += dt;
    }
    RawPoint p{lat.lon(w.pos[0]), lat.lat(w.pos[1]), t};
    if (cfg.jitter_deg > 0.0) {
      p.lon += cfg.jitter_deg * jitter(rng);
      p.lat += cfg.jitter_deg * jitter(rng);
    }
    tr.points.push_back(p);
  }
  return tr;
}

}  // namespace detail

inline RoadMap road_map(const SynthCityConfig& cfg) {
  cfg.validate();
  const detail::Lattice lat(cfg);
  const double last = cfg.lattice - 1;
  RoadMap m;
  for (int i = 0; i < cfg.lattice; ++i) {
    m.segments.push_back({lat.lon(i), lat.lat(0), lat.lon(i), lat.lat(last), lat.avenue(i)});
    m.segments.push_back({lat.lon(0), lat.lat(i), lat.lon(last), lat.lat(i), lat.avenue(i)});
  }
  return m;
}

/// Manhattan-lattice trip simulator. Each trip draws from its own stream so
/// the output does not depend on generation order.
inline SynthCity synth_city(const SynthCityConfig& cfg) {
  cfg.validate();
  const detail::Lattice lat(cfg);
  SynthCity city;
  city.trips.reserve(cfg.trips);
  for (std::size_t i = 0; i < cfg.trips; ++i) city.trips.push_back(detail::simulate_trip(cfg, lat, i));
  city.roads = road_map(cfg);
  return city;
}

/// Road map as text, one `lon0,lat0,lon1,lat1,avenue` segment per line.
inline void write_road_map(const RoadMap& m, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot open '" + path + "' for writing");
  out.precision(17);
  for (const auto& s : m.segments) {
    out << s.lon0 << ',' << s.lat0 << ',' << s.lon1 << ',' << s.lat1 << ',' << (s.avenue ? 1 : 0) << '\n';
  }
}

inline RoadMap read_road_map(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open '" + path + "'");
  RoadMap m;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    RoadSegment s{};
    int avenue = 0;
    char c1, c2, c3, c4;
    if (!(ss >> s.lon0 >> c1 >> s.lat0 >> c2 >> s.lon1 >> c3 >> s.lat1 >> c4 >> avenue)) {
      throw FormatError("malformed road map line: " + line);
    }
    s.avenue = avenue != 0;
    m.segments.push_back(s);
  }
  return m;
}

}  // namespace trajdiff::data
