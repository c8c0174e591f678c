#pragma once

#include <algorithm>
#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "trajdiff/model/config.hpp"

namespace trajdiff::model {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;
template <typename S>
using RowVec = Eigen::Matrix<S, 1, Eigen::Dynamic>;

// Linear maps store weights as (out, in) and compute y = W x + b.
template <typename S>
struct BlockParams {
  Mat<S> w_qkv;  // (3d, d)
  Vec<S> b_qkv;
  Mat<S> w_out;  // (d, d)
  Vec<S> b_out;
  Mat<S> w_ff1;  // (hidden, d)
  Vec<S> b_ff1;
  Mat<S> w_ff2;  // (d, hidden)
  Vec<S> b_ff2;
  // (6d, d), no bias. Output chunks: shift1, scale1, gate1, shift2, scale2, gate2.
  Mat<S> w_mod;
};

template <typename S>
struct Parameters {
  // loc: embed_w is (d, 2). lonlat: embed_lon_w / embed_lat_w are (d, 1).
  Mat<S> embed_w;
  Vec<S> embed_b;
  Mat<S> embed_lon_w;
  Vec<S> embed_lon_b;
  Mat<S> embed_lat_w;
  Vec<S> embed_lat_b;

  Mat<S> time_w1;  // (d, d)
  Vec<S> time_b1;
  Mat<S> time_w2;  // (d, d)
  Vec<S> time_b2;

  Mat<S> dep_table;   // (cond_cells, d)
  Mat<S> dst_table;   // (cond_cells, d)
  Mat<S> time_table;  // (4, d)
  Vec<S> length_w;
  Vec<S> length_b;

  std::vector<BlockParams<S>> blocks;

  Mat<S> final_mod;  // (2d, d), chunks: shift, scale
  Mat<S> decode_w;   // (out_per_token, d)
  Vec<S> decode_b;

  EmbMode emb_mode = EmbMode::kLonLat;
};

/// Named view of one learned tensor. Visiting order is fixed and is the
/// order used by checkpoints.
template <typename S>
struct ParamRef {
  std::string name;
  Eigen::Index rows;
  Eigen::Index cols;
  S* data;
  [[nodiscard]] Eigen::Index size() const { return rows * cols; }
};

template <typename S, typename M>
void push_ref(std::vector<ParamRef<S>>& out, std::string name, M& m) {
  out.push_back({std::move(name), m.rows(), m.cols(), m.data()});
}

template <typename S>
std::vector<ParamRef<S>> param_refs(Parameters<S>& p) {
  std::vector<ParamRef<S>> out;
  if (p.emb_mode == EmbMode::kLoc) {
    push_ref(out, "embed.weight", p.embed_w);
    push_ref(out, "embed.bias", p.embed_b);
  } else {
    push_ref(out, "embed_lon.weight", p.embed_lon_w);
    push_ref(out, "embed_lon.bias", p.embed_lon_b);
    push_ref(out, "embed_lat.weight", p.embed_lat_w);
    push_ref(out, "embed_lat.bias", p.embed_lat_b);
  }
  push_ref(out, "time.w1", p.time_w1);
  push_ref(out, "time.b1", p.time_b1);
  push_ref(out, "time.w2", p.time_w2);
  push_ref(out, "time.b2", p.time_b2);
  push_ref(out, "cond.dep_table", p.dep_table);
  push_ref(out, "cond.dst_table", p.dst_table);
  push_ref(out, "cond.time_table", p.time_table);
  push_ref(out, "cond.length_w", p.length_w);
  push_ref(out, "cond.length_b", p.length_b);
  for (std::size_t i = 0; i < p.blocks.size(); ++i) {
    auto& b = p.blocks[i];
    const std::string pre = "blocks." + std::to_string(i) + ".";
    push_ref(out, pre + "w_qkv", b.w_qkv);
    push_ref(out, pre + "b_qkv", b.b_qkv);
    push_ref(out, pre + "w_out", b.w_out);
    push_ref(out, pre + "b_out", b.b_out);
    push_ref(out, pre + "w_ff1", b.w_ff1);
    push_ref(out, pre + "b_ff1", b.b_ff1);
    push_ref(out, pre + "w_ff2", b.w_ff2);
    push_ref(out, pre + "b_ff2", b.b_ff2);
    push_ref(out, pre + "w_mod", b.w_mod);
  }
  push_ref(out, "final.mod", p.final_mod);
  push_ref(out, "decode.weight", p.decode_w);
  push_ref(out, "decode.bias", p.decode_b);
  return out;
}

/// Same mode, same shapes and bitwise-equal values.
template <typename S>
bool operator==(const Parameters<S>& a, const Parameters<S>& b) {
  if (a.emb_mode != b.emb_mode || a.blocks.size() != b.blocks.size()) return false;
  const auto ra = param_refs(const_cast<Parameters<S>&>(a));
  const auto rb = param_refs(const_cast<Parameters<S>&>(b));
  for (std::size_t i = 0; i < ra.size(); ++i) {
    if (ra[i].rows != rb[i].rows || ra[i].cols != rb[i].cols) return false;
    if (!std::equal(ra[i].data, ra[i].data + ra[i].size(), rb[i].data)) return false;
  }
  return true;
}

/// All-zero parameter set with the shapes implied by `cfg`.
template <typename S>
Parameters<S> zero_parameters(const ModelConfig& cfg) {
  cfg.validate();
  const Eigen::Index d = cfg.dim;
  const Eigen::Index h = cfg.hidden();
  Parameters<S> p;
  p.emb_mode = cfg.emb_mode;
  if (cfg.emb_mode == EmbMode::kLoc) {
    p.embed_w = Mat<S>::Zero(d, 2);
    p.embed_b = Vec<S>::Zero(d);
  } else {
    p.embed_lon_w = Mat<S>::Zero(d, 1);
    p.embed_lon_b = Vec<S>::Zero(d);
    p.embed_lat_w = Mat<S>::Zero(d, 1);
    p.embed_lat_b = Vec<S>::Zero(d);
  }
  p.time_w1 = Mat<S>::Zero(d, d);
  p.time_b1 = Vec<S>::Zero(d);
  p.time_w2 = Mat<S>::Zero(d, d);
  p.time_b2 = Vec<S>::Zero(d);
  p.dep_table = Mat<S>::Zero(cfg.cond_cells, d);
  p.dst_table = Mat<S>::Zero(cfg.cond_cells, d);
  p.time_table = Mat<S>::Zero(kTimeBuckets, d);
  p.length_w = Vec<S>::Zero(d);
  p.length_b = Vec<S>::Zero(d);
  p.blocks.resize(static_cast<std::size_t>(cfg.layers));
  for (auto& b : p.blocks) {
    b.w_qkv = Mat<S>::Zero(3 * d, d);
    b.b_qkv = Vec<S>::Zero(3 * d);
    b.w_out = Mat<S>::Zero(d, d);
    b.b_out = Vec<S>::Zero(d);
    b.w_ff1 = Mat<S>::Zero(h, d);
    b.b_ff1 = Vec<S>::Zero(h);
    b.w_ff2 = Mat<S>::Zero(d, h);
    b.b_ff2 = Vec<S>::Zero(d);
    b.w_mod = Mat<S>::Zero(6 * d, d);
  }
  p.final_mod = Mat<S>::Zero(2 * d, d);
  p.decode_w = Mat<S>::Zero(cfg.out_per_token(), d);
  p.decode_b = Vec<S>::Zero(cfg.out_per_token());
  return p;
}

namespace detail {
template <typename S, typename M>
void xavier(M& m, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
  std::uniform_real_distribution<double> u(-a, a);
  for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = static_cast<S>(u(rng));
}
template <typename S, typename M>
void normal(M& m, double stddev, Rng& rng) {
  std::normal_distribution<double> nd(0.0, stddev);
  for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = static_cast<S>(nd(rng));
}
}  // namespace detail

/// Fresh parameters. Every adaLN modulation map and the decode projection
/// start at zero, so each block is the identity and the prediction is 0.
template <typename S>
Parameters<S> init_parameters(const ModelConfig& cfg, std::uint64_t seed) {
  auto p = zero_parameters<S>(cfg);
  Rng rng(seed);
  if (cfg.emb_mode == EmbMode::kLoc) {
    detail::xavier<S>(p.embed_w, rng);
  } else {
    detail::xavier<S>(p.embed_lon_w, rng);
    detail::xavier<S>(p.embed_lat_w, rng);
  }
  detail::normal<S>(p.time_w1, 0.02, rng);
  detail::normal<S>(p.time_w2, 0.02, rng);
  detail::normal<S>(p.dep_table, 0.02, rng);
  detail::normal<S>(p.dst_table, 0.02, rng);
  detail::normal<S>(p.time_table, 0.02, rng);
  detail::normal<S>(p.length_w, 0.02, rng);
  for (auto& b : p.blocks) {
    detail::xavier<S>(b.w_qkv, rng);
    detail::xavier<S>(b.w_out, rng);
    detail::xavier<S>(b.w_ff1, rng);
    detail::xavier<S>(b.w_ff2, rng);
  }
  return p;
}

/// Closed-form learned-scalar count; must equal the sum over param_refs.
inline std::int64_t count_block_params(const ModelConfig& cfg) {
  const std::int64_t d = cfg.dim;
  const std::int64_t h = cfg.hidden();
  return (3 * d * d + 3 * d) + (d * d + d) + (h * d + h) + (d * h + d) + 6 * d * d;
}

inline std::int64_t count_params(const ModelConfig& cfg) {
  cfg.validate();
  const std::int64_t d = cfg.dim;
  const std::int64_t o = cfg.out_per_token();
  const std::int64_t embed = cfg.emb_mode == EmbMode::kLoc ? 3 * d : 4 * d;
  const std::int64_t time = 2 * (d * d + d);
  const std::int64_t cond = 2 * cfg.cond_cells * d + kTimeBuckets * d + 2 * d;
  const std::int64_t final_layer = 2 * d * d + o * d + o;
  return embed + time + cond + cfg.layers * count_block_params(cfg) + final_layer;
}

}  // namespace trajdiff::model
