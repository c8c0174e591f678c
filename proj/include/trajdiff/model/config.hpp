#pragma once

#include <cmath>
#include <string>

#include "trajdiff/core.hpp"

namespace trajdiff::model {

/// How a GPS point becomes tokens: one token per (lon, lat) pair, or two
/// interleaved tokens per point (lon at 2i, lat at 2i + 1).
enum class EmbMode { kLoc, kLonLat };

inline std::string to_string(EmbMode m) { return m == EmbMode::kLoc ? "loc" : "lonlat"; }

inline EmbMode emb_mode_from_string(const std::string& s) {
  if (s == "loc") return EmbMode::kLoc;
  if (s == "lonlat") return EmbMode::kLonLat;
  throw ConfigError("unknown emb_mode '" + s + "' (expected loc or lonlat)");
}

struct ModelConfig {
  int layers = 4;
  int dim = 64;
  int heads = 4;
  EmbMode emb_mode = EmbMode::kLonLat;
  int max_len = 50;        // GPS points per trajectory
  int cond_cells = 64;     // rows of the departure/destination tables
  double mlp_ratio = 4.0;
  // Use the positional-encoding exponent with a positive sign (frequencies
  // 10^{+4j/(d/2)}) instead of the standard decaying frequencies.
  bool pe_printed_sign = false;
  bool use_cells = true;
  bool use_time_bucket = true;
  bool use_trip_length = true;

  [[nodiscard]] int hidden() const { return static_cast<int>(std::lround(mlp_ratio * dim)); }
  [[nodiscard]] int head_dim() const { return dim / heads; }
  [[nodiscard]] int seq_len(int points) const {
    return emb_mode == EmbMode::kLonLat ? 2 * points : points;
  }
  [[nodiscard]] int out_per_token() const { return emb_mode == EmbMode::kLonLat ? 1 : 2; }

  void validate() const {
    if (layers < 1) throw ConfigError("model.layers must be >= 1");
    if (heads < 1 || dim % heads != 0) throw ConfigError("model.dim must be divisible by model.heads");
    if (dim % 4 != 0) throw ConfigError("model.dim must be divisible by 4");
    if (max_len < 2) throw ConfigError("model.max_len must be >= 2");
    if (cond_cells < 1) throw ConfigError("model.cond_cells must be >= 1");
    if (!(mlp_ratio > 0.0) || hidden() < 1) throw ConfigError("model.mlp_ratio must be positive");
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// The four sizes of the original model ladder (layers, dim, heads).
inline ModelConfig preset(char size, EmbMode mode = EmbMode::kLonLat) {
  ModelConfig c;
  c.emb_mode = mode;
  c.heads = 6;
  c.max_len = 200;
  switch (size) {
    case 'T': c.layers = 6; c.dim = 192; break;
    case 'S': c.layers = 12; c.dim = 192; break;
    case 'B': c.layers = 6; c.dim = 384; break;
    case 'L': c.layers = 12; c.dim = 384; break;
    default: throw ConfigError(std::string("unknown preset '") + size + "'");
  }
  return c;
}

/// Side information for conditional generation.
struct ConditionVector {
  int dep_cell = 0;
  int dst_cell = 0;
  int time_bucket = 0;     // 6-hour departure window, 0..3
  double trip_length = 0;  // path length divided by the dataset length scale

  friend bool operator==(const ConditionVector&, const ConditionVector&) = default;
};

inline constexpr int kTimeBuckets = 4;

}  // namespace trajdiff::model
