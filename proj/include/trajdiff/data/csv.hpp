#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "trajdiff/core.hpp"
#include "trajdiff/data/trajectory.hpp"

namespace trajdiff::data {

struct CsvSchema {
  std::string traj_id = "traj_id";
  std::string lon = "lon";
  std::string lat = "lat";
  std::string timestamp = "timestamp";
  char delimiter = ',';
};

struct CsvImportStats {
  std::size_t rows = 0;
  std::size_t malformed = 0;    // skipped rows, including duplicate timestamps
};

namespace detail {
inline std::vector<std::string_view> split_row(std::string_view line, char delim) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(delim, start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  for (auto& f : out) {
    while (!f.empty() && (f.front() == ' ' || f.front() == '"')) f.remove_prefix(1);
    while (!f.empty() && (f.back() == ' ' || f.back() == '"' || f.back() == '\r')) f.remove_suffix(1);
  }
  return out;
}

inline bool parse_double(std::string_view s, double& out) {
  if (s.empty()) return false;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}
}  // namespace detail

/// Reads a point-per-row GPS log. Rows are grouped by id in order of first
/// appearance and sorted by timestamp; unparseable rows and repeated
/// timestamps are skipped and counted.
inline std::vector<RawTrajectory> import_csv(const std::string& path, const CsvSchema& schema = {},
                                             CsvImportStats* stats = nullptr) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw IngestError("'" + path + "' has no header row");
  const auto header = detail::split_row(line, schema.delimiter);
  auto column = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw IngestError("'" + path + "' header lacks column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t c_id = column(schema.traj_id);
  const std::size_t c_lon = column(schema.lon);
  const std::size_t c_lat = column(schema.lat);
  const std::size_t c_t = column(schema.timestamp);
  const std::size_t need = std::max({c_id, c_lon, c_lat, c_t}) + 1;

  CsvImportStats local;
  std::unordered_map<std::string, std::size_t> slot;
  std::vector<RawTrajectory> out;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    ++local.rows;
    const auto f = detail::split_row(line, schema.delimiter);
    RawPoint p;
    if (f.size() < need || f[c_id].empty() || !detail::parse_double(f[c_lon], p.lon) ||
        !detail::parse_double(f[c_lat], p.lat) || !detail::parse_double(f[c_t], p.t)) {
      ++local.malformed;
      continue;
    }
    const auto [it, fresh] = slot.try_emplace(std::string(f[c_id]), out.size());
    if (fresh) out.emplace_back();
    out[it->second].points.push_back(p);
  }
  for (auto& tr : out) {
    std::stable_sort(tr.points.begin(), tr.points.end(),
                     [](const RawPoint& a, const RawPoint& b) { return a.t < b.t; });
    const auto end = std::unique(tr.points.begin(), tr.points.end(),
                                 [](const RawPoint& a, const RawPoint& b) { return a.t == b.t; });
    local.malformed += static_cast<std::size_t>(tr.points.end() - end);
    tr.points.erase(end, tr.points.end());
  }
  if (stats != nullptr) *stats = local;
  return out;
}

}  // namespace trajdiff::data
