#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "trajdiff/io/binary.hpp"
#include "trajdiff/model/parameters.hpp"

namespace trajdiff::model {

// Checkpoint container, version 1 (see docs/formats.md):
//   magic "TRJDCKPT", u32 version
//   config: i32 layers, i32 dim, i32 heads, u8 emb_mode (0 loc, 1 lonlat),
//           i32 max_len, i32 cond_cells, f64 mlp_ratio, u8 pe_printed_sign,
//           u8 use_cells, u8 use_time_bucket, u8 use_trip_length
//   u32 scalar_bytes (4)
//   u32 blob count, then per blob: string name, u32 rows, u32 cols, f32 data
//   u8 has_optimizer; if set: u64 step, string rng_state, then the first and
//   second Adam moments as raw f32 data in the same blob order
//   u32 crc32
inline constexpr std::string_view kCheckpointMagic = "TRJDCKPT";
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct OptimizerSnapshot {
  std::uint64_t step = 0;
  std::string rng_state;
  Parameters<float> m;
  Parameters<float> v;
};

struct Checkpoint {
  ModelConfig config;
  Parameters<float> params;
  std::optional<OptimizerSnapshot> optimizer;
};

namespace detail {
inline void write_config(io::BinaryWriter& w, const ModelConfig& c) {
  w.put<std::int32_t>(c.layers);
  w.put<std::int32_t>(c.dim);
  w.put<std::int32_t>(c.heads);
  w.put<std::uint8_t>(c.emb_mode == EmbMode::kLoc ? 0 : 1);
  w.put<std::int32_t>(c.max_len);
  w.put<std::int32_t>(c.cond_cells);
  w.put<double>(c.mlp_ratio);
  w.put<std::uint8_t>(c.pe_printed_sign);
  w.put<std::uint8_t>(c.use_cells);
  w.put<std::uint8_t>(c.use_time_bucket);
  w.put<std::uint8_t>(c.use_trip_length);
}

inline ModelConfig read_config(io::BinaryReader& r) {
  ModelConfig c;
  c.layers = r.get<std::int32_t>();
  c.dim = r.get<std::int32_t>();
  c.heads = r.get<std::int32_t>();
  c.emb_mode = r.get<std::uint8_t>() == 0 ? EmbMode::kLoc : EmbMode::kLonLat;
  c.max_len = r.get<std::int32_t>();
  c.cond_cells = r.get<std::int32_t>();
  c.mlp_ratio = r.get<double>();
  c.pe_printed_sign = r.get<std::uint8_t>() != 0;
  c.use_cells = r.get<std::uint8_t>() != 0;
  c.use_time_bucket = r.get<std::uint8_t>() != 0;
  c.use_trip_length = r.get<std::uint8_t>() != 0;
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint config invalid: ") + e.what());
  }
  return c;
}

inline void write_raw(io::BinaryWriter& w, Parameters<float>& p) {
  for (const auto& r : param_refs(p)) w.put_span(std::span<const float>(r.data, static_cast<std::size_t>(r.size())));
}

inline void read_raw(io::BinaryReader& r, Parameters<float>& p) {
  for (const auto& ref : param_refs(p)) r.get_span(std::span<float>(ref.data, static_cast<std::size_t>(ref.size())));
}
}  // namespace detail

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  io::BinaryWriter w(kCheckpointMagic, kCheckpointVersion);
  detail::write_config(w, ck.config);
  w.put<std::uint32_t>(sizeof(float));
  auto params = ck.params;
  const auto refs = param_refs(params);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(refs.size()));
  for (const auto& r : refs) {
    w.put_string(r.name);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(r.rows));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(r.cols));
    w.put_span(std::span<const float>(r.data, static_cast<std::size_t>(r.size())));
  }
  w.put<std::uint8_t>(ck.optimizer.has_value());
  if (ck.optimizer) {
    w.put<std::uint64_t>(ck.optimizer->step);
    w.put_string(ck.optimizer->rng_state);
    auto m = ck.optimizer->m;
    auto v = ck.optimizer->v;
    detail::write_raw(w, m);
    detail::write_raw(w, v);
  }
  w.save(path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  io::BinaryReader r(path, kCheckpointMagic, kCheckpointVersion);
  Checkpoint ck;
  ck.config = detail::read_config(r);
  if (r.get<std::uint32_t>() != sizeof(float)) throw FormatError("checkpoint scalar width is not f32");
  ck.params = zero_parameters<float>(ck.config);
  const auto refs = param_refs(ck.params);
  const auto count = r.get<std::uint32_t>();
  if (count != refs.size()) throw FormatError("checkpoint blob count does not match its config");
  for (const auto& ref : refs) {
    const auto name = r.get_string();
    const auto rows = r.get<std::uint32_t>();
    const auto cols = r.get<std::uint32_t>();
    if (name != ref.name || rows != ref.rows || cols != ref.cols) {
      throw FormatError("checkpoint blob '" + name + "' does not match expected '" + ref.name + "'");
    }
    r.get_span(std::span<float>(ref.data, static_cast<std::size_t>(ref.size())));
  }
  if (r.get<std::uint8_t>() != 0) {
    OptimizerSnapshot snap;
    snap.step = r.get<std::uint64_t>();
    snap.rng_state = r.get_string();
    snap.m = zero_parameters<float>(ck.config);
    snap.v = zero_parameters<float>(ck.config);
    detail::read_raw(r, snap.m);
    detail::read_raw(r, snap.v);
    ck.optimizer = std::move(snap);
  }
  if (!r.at_end()) throw FormatError("trailing bytes in checkpoint");
  return ck;
}

}  // namespace trajdiff::model
