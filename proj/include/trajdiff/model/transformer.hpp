#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <span>
#include <vector>

#include "trajdiff/core.hpp"
#include "trajdiff/model/config.hpp"
#include "trajdiff/model/encoding.hpp"
#include "trajdiff/model/parameters.hpp"

namespace trajdiff::model {

namespace ops {

template <typename S>
inline constexpr S kLayerNormEps = S(1e-6);

/// Row-wise layer norm without affine parameters; the adaLN modulation
/// supplies scale and shift.
template <typename S>
void layer_norm(const Mat<S>& x, Mat<S>& n, Vec<S>& rstd) {
  const Eigen::Index d = x.cols();
  n.resize(x.rows(), d);
  rstd.resize(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const S mean = x.row(r).sum() / S(d);
    n.row(r) = x.row(r).array() - mean;
    const S var = n.row(r).squaredNorm() / S(d);
    rstd(r) = S(1) / std::sqrt(var + kLayerNormEps<S>);
    n.row(r) *= rstd(r);
  }
}

template <typename S>
Mat<S> layer_norm_backward(const Mat<S>& dn, const Mat<S>& n, const Vec<S>& rstd) {
  const S d = S(n.cols());
  Mat<S> dx(dn.rows(), dn.cols());
  for (Eigen::Index r = 0; r < dn.rows(); ++r) {
    const S mean_dn = dn.row(r).sum() / d;
    const S mean_dn_n = dn.row(r).dot(n.row(r)) / d;
    dx.row(r) = rstd(r) * (dn.row(r).array() - mean_dn - n.row(r).array() * mean_dn_n);
  }
  return dx;
}

template <typename S>
Mat<S> silu(const Mat<S>& h) {
  return (h.array() * h.array().logistic()).matrix();
}

template <typename S>
Mat<S> silu_grad(const Mat<S>& h) {
  const auto s = h.array().logistic();
  return (s * (S(1) + h.array() * (S(1) - s))).matrix();
}

/// y = x W^T + b, row per sample/token.
template <typename S>
void linear(const Mat<S>& x, const Mat<S>& w, const Vec<S>& b, Mat<S>& y) {
  y.noalias() = x * w.transpose();
  y.rowwise() += b.transpose();
}

/// u = n * (1 + scale_b) + shift_b on each sample's rows, reading shift and
/// scale from `mod` columns [shift_off, shift_off + d) and [scale_off, ...).
template <typename S>
void modulate(const Mat<S>& n, const Mat<S>& mod, Eigen::Index shift_off, Eigen::Index scale_off,
              Eigen::Index seq, Mat<S>& u) {
  const Eigen::Index d = n.cols();
  u.resize(n.rows(), d);
  for (Eigen::Index b = 0; b < mod.rows(); ++b) {
    const RowVec<S> scale = mod.row(b).segment(scale_off, d).array() + S(1);
    const RowVec<S> shift = mod.row(b).segment(shift_off, d);
    u.middleRows(b * seq, seq) =
        (n.middleRows(b * seq, seq).array().rowwise() * scale.array()).rowwise() + shift.array();
  }
}

/// Backward of modulate: writes d shift / d scale into `dmod` and returns dn.
template <typename S>
Mat<S> modulate_backward(const Mat<S>& du, const Mat<S>& n, const Mat<S>& mod,
                         Eigen::Index shift_off, Eigen::Index scale_off, Eigen::Index seq,
                         Mat<S>& dmod) {
  const Eigen::Index d = n.cols();
  Mat<S> dn(du.rows(), d);
  for (Eigen::Index b = 0; b < mod.rows(); ++b) {
    const auto du_b = du.middleRows(b * seq, seq);
    dmod.row(b).segment(shift_off, d) = du_b.colwise().sum();
    dmod.row(b).segment(scale_off, d) =
        (du_b.array() * n.middleRows(b * seq, seq).array()).colwise().sum();
    const RowVec<S> scale = mod.row(b).segment(scale_off, d).array() + S(1);
    dn.middleRows(b * seq, seq) = du_b.array().rowwise() * scale.array();
  }
  return dn;
}

/// In-place row softmax. Row-wise passes over contiguous rows with a single
/// whole-block exp; broadcasting column vectors over row-major storage is slow.
template <typename Block>
void softmax_rows(Block&& p) {
  using S = typename std::decay_t<Block>::Scalar;
  const Vec<S> row_max = p.rowwise().maxCoeff();
  for (Eigen::Index r = 0; r < p.rows(); ++r) p.row(r).array() -= row_max(r);
  p = p.array().exp().matrix();
  const Vec<S> row_sum = p.rowwise().sum();
  for (Eigen::Index r = 0; r < p.rows(); ++r) p.row(r) *= S(1) / row_sum(r);
}

/// Bidirectional multi-head attention core on packed qkv rows (q | k | v).
/// `probs` keeps every (sample, head) softmax matrix when `keep_probs`.
template <typename S>
void attention(const Mat<S>& qkv, Eigen::Index batch, Eigen::Index seq, int dim, int heads,
               Mat<S>& probs, Mat<S>& out, bool keep_probs) {
  const Eigen::Index dh = dim / heads;
  const S scale = S(1) / std::sqrt(S(dh));
  out.resize(batch * seq, dim);
  probs.resize(keep_probs ? batch * heads * seq : seq, seq);
  for (Eigen::Index b = 0; b < batch; ++b) {
    for (int h = 0; h < heads; ++h) {
      const auto q = qkv.block(b * seq, h * dh, seq, dh);
      const auto k = qkv.block(b * seq, dim + h * dh, seq, dh);
      const auto v = qkv.block(b * seq, 2 * dim + h * dh, seq, dh);
      auto p = probs.block(keep_probs ? (b * heads + h) * seq : 0, 0, seq, seq);
      p.noalias() = (q * k.transpose()) * scale;
      softmax_rows(p);
      out.block(b * seq, h * dh, seq, dh).noalias() = p * v;
    }
  }
}

template <typename S>
Mat<S> attention_backward(const Mat<S>& dout, const Mat<S>& qkv, const Mat<S>& probs,
                          Eigen::Index batch, Eigen::Index seq, int dim, int heads) {
  const Eigen::Index dh = dim / heads;
  const S scale = S(1) / std::sqrt(S(dh));
  Mat<S> dqkv(batch * seq, 3 * dim);
  Mat<S> dp(seq, seq);
  for (Eigen::Index b = 0; b < batch; ++b) {
    for (int h = 0; h < heads; ++h) {
      const auto q = qkv.block(b * seq, h * dh, seq, dh);
      const auto k = qkv.block(b * seq, dim + h * dh, seq, dh);
      const auto v = qkv.block(b * seq, 2 * dim + h * dh, seq, dh);
      const auto p = probs.block((b * heads + h) * seq, 0, seq, seq);
      const auto d_o = dout.block(b * seq, h * dh, seq, dh);
      dp.noalias() = d_o * v.transpose();
      dqkv.block(b * seq, 2 * dim + h * dh, seq, dh).noalias() = p.transpose() * d_o;
      const Vec<S> rs = (p.array() * dp.array()).rowwise().sum();
      for (Eigen::Index r = 0; r < seq; ++r) dp.row(r).array() -= rs(r);
      dp.array() *= p.array();
      dqkv.block(b * seq, h * dh, seq, dh).noalias() = (dp * k) * scale;
      dqkv.block(b * seq, dim + h * dh, seq, dh).noalias() = (dp.transpose() * q) * scale;
    }
  }
  return dqkv;
}

template <typename S>
struct BlockCache {
  Mat<S> mod;  // (B, 6d)
  Mat<S> n1, u1, qkv, probs, attn, att_out;
  Mat<S> n2, u2, h1, g, f;
  Vec<S> rstd1, rstd2;
};

/// Six modulation vectors per sample: y W^T, chunks
/// (shift1, scale1, gate1, shift2, scale2, gate2).
template <typename S>
Mat<S> adaln_modulation(const Mat<S>& y, const BlockParams<S>& blk) {
  return y * blk.w_mod.transpose();
}

/// x + gate1 * Attn(modulate(LN(x))) followed by
/// x + gate2 * FFN(modulate(LN(x))), in place on `x`.
template <typename S>
void transformer_block(Mat<S>& x, const Mat<S>& y, const BlockParams<S>& blk, Eigen::Index seq,
                       int heads, BlockCache<S>& c, bool keep_probs) {
  const Eigen::Index d = x.cols();
  const Eigen::Index batch = y.rows();
  c.mod = adaln_modulation(y, blk);

  layer_norm(x, c.n1, c.rstd1);
  modulate(c.n1, c.mod, 0, d, seq, c.u1);
  linear(c.u1, blk.w_qkv, blk.b_qkv, c.qkv);
  attention(c.qkv, batch, seq, static_cast<int>(d), heads, c.probs, c.attn, keep_probs);
  linear(c.attn, blk.w_out, blk.b_out, c.att_out);
  for (Eigen::Index b = 0; b < batch; ++b) {
    x.middleRows(b * seq, seq).array() +=
        c.att_out.middleRows(b * seq, seq).array().rowwise() * c.mod.row(b).segment(2 * d, d).array();
  }

  layer_norm(x, c.n2, c.rstd2);
  modulate(c.n2, c.mod, 3 * d, 4 * d, seq, c.u2);
  linear(c.u2, blk.w_ff1, blk.b_ff1, c.h1);
  c.g = silu(c.h1);
  linear(c.g, blk.w_ff2, blk.b_ff2, c.f);
  for (Eigen::Index b = 0; b < batch; ++b) {
    x.middleRows(b * seq, seq).array() +=
        c.f.middleRows(b * seq, seq).array().rowwise() * c.mod.row(b).segment(5 * d, d).array();
  }
}

/// Gradient of a block w.r.t. its input; parameter gradients are added to
/// `gb` and the gradient w.r.t. y is added to `dy`.
template <typename S>
Mat<S> transformer_block_backward(const Mat<S>& dx_out, const Mat<S>& y, const BlockParams<S>& blk,
                                  const BlockCache<S>& c, Eigen::Index seq, int heads,
                                  BlockParams<S>& gb, Mat<S>& dy) {
  const Eigen::Index d = dx_out.cols();
  const Eigen::Index batch = y.rows();
  Mat<S> dmod = Mat<S>::Zero(batch, 6 * d);

  // Feed-forward branch.
  Mat<S> df(dx_out.rows(), d);
  for (Eigen::Index b = 0; b < batch; ++b) {
    const auto g = dx_out.middleRows(b * seq, seq);
    dmod.row(b).segment(5 * d, d) = (g.array() * c.f.middleRows(b * seq, seq).array()).colwise().sum();
    df.middleRows(b * seq, seq) = g.array().rowwise() * c.mod.row(b).segment(5 * d, d).array();
  }
  gb.w_ff2.noalias() += df.transpose() * c.g;
  gb.b_ff2 += df.colwise().sum().transpose();
  Mat<S> dh1 = df * blk.w_ff2;
  dh1.array() *= silu_grad(c.h1).array();
  gb.w_ff1.noalias() += dh1.transpose() * c.u2;
  gb.b_ff1 += dh1.colwise().sum().transpose();
  const Mat<S> du2 = dh1 * blk.w_ff1;
  const Mat<S> dn2 = modulate_backward(du2, c.n2, c.mod, 3 * d, 4 * d, seq, dmod);
  Mat<S> dx1 = dx_out + layer_norm_backward(dn2, c.n2, c.rstd2);

  // Attention branch.
  Mat<S> da(dx1.rows(), d);
  for (Eigen::Index b = 0; b < batch; ++b) {
    const auto g = dx1.middleRows(b * seq, seq);
    dmod.row(b).segment(2 * d, d) =
        (g.array() * c.att_out.middleRows(b * seq, seq).array()).colwise().sum();
    da.middleRows(b * seq, seq) = g.array().rowwise() * c.mod.row(b).segment(2 * d, d).array();
  }
  gb.w_out.noalias() += da.transpose() * c.attn;
  gb.b_out += da.colwise().sum().transpose();
  const Mat<S> dattn = da * blk.w_out;
  const Mat<S> dqkv = attention_backward(dattn, c.qkv, c.probs, batch, seq, static_cast<int>(d), heads);
  gb.w_qkv.noalias() += dqkv.transpose() * c.u1;
  gb.b_qkv += dqkv.colwise().sum().transpose();
  const Mat<S> du1 = dqkv * blk.w_qkv;
  const Mat<S> dn1 = modulate_backward(du1, c.n1, c.mod, 0, d, seq, dmod);
  Mat<S> dx = dx1 + layer_norm_backward(dn1, c.n1, c.rstd1);

  gb.w_mod.noalias() += dmod.transpose() * y;
  dy.noalias() += dmod * blk.w_mod;
  return dx;
}

}  // namespace ops

/// Positional table for a sequence of `points` GPS points: one row per token.
template <typename S>
Mat<S> position_table(const ModelConfig& cfg, int points) {
  const int seq = cfg.seq_len(points);
  Mat<S> pe(seq, cfg.dim);
  for (int i = 0; i < points; ++i) {
    if (cfg.emb_mode == EmbMode::kLoc) {
      const auto v = pe_1d(i, cfg.dim, cfg.pe_printed_sign);
      for (int j = 0; j < cfg.dim; ++j) pe(i, j) = static_cast<S>(v[static_cast<std::size_t>(j)]);
    } else {
      const auto lon = pe_2d(i, cfg.dim, Axis::kLon, cfg.pe_printed_sign);
      const auto lat = pe_2d(i, cfg.dim, Axis::kLat, cfg.pe_printed_sign);
      for (int j = 0; j < cfg.dim; ++j) {
        pe(2 * i, j) = static_cast<S>(lon[static_cast<std::size_t>(j)]);
        pe(2 * i + 1, j) = static_cast<S>(lat[static_cast<std::size_t>(j)]);
      }
    }
  }
  return pe;
}

/// One token per point: affine([lon, lat]) + PE. `pe` may be null.
template <typename S>
Mat<S> embed_loc(const TrajBatch<S>& x, const Parameters<S>& p, const Mat<S>* pe) {
  const Eigen::Index d = p.embed_w.rows();
  const auto n = static_cast<Eigen::Index>(x.length);
  Mat<S> tokens(static_cast<Eigen::Index>(x.batch) * n, d);
  for (std::size_t b = 0; b < x.batch; ++b) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::Index r = static_cast<Eigen::Index>(b) * n + i;
      const auto ii = static_cast<std::size_t>(i);
      tokens.row(r) = (p.embed_w.col(0) * x.at(b, ii, 0) + p.embed_w.col(1) * x.at(b, ii, 1) + p.embed_b)
                          .transpose();
      if (pe != nullptr) tokens.row(r) += pe->row(i);
    }
  }
  return tokens;
}

/// Two interleaved tokens per point: lon at row 2i, lat at row 2i + 1.
template <typename S>
Mat<S> embed_lonlat(const TrajBatch<S>& x, const Parameters<S>& p, const Mat<S>* pe) {
  const Eigen::Index d = p.embed_lon_w.rows();
  const auto n = static_cast<Eigen::Index>(x.length);
  Mat<S> tokens(static_cast<Eigen::Index>(x.batch) * 2 * n, d);
  for (std::size_t b = 0; b < x.batch; ++b) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::Index r = (static_cast<Eigen::Index>(b) * n + i) * 2;
      const auto ii = static_cast<std::size_t>(i);
      tokens.row(r) = (p.embed_lon_w.col(0) * x.at(b, ii, 0) + p.embed_lon_b).transpose();
      tokens.row(r + 1) = (p.embed_lat_w.col(0) * x.at(b, ii, 1) + p.embed_lat_b).transpose();
      if (pe != nullptr) {
        tokens.row(r) += pe->row(2 * i);
        tokens.row(r + 1) += pe->row(2 * i + 1);
      }
    }
  }
  return tokens;
}

/// Noise prediction model: embedding, adaLN transformer blocks, decoder.
/// Parameters are owned; inference is const and safe to call concurrently.
template <typename S>
class TrajTransformer {
 public:
  explicit TrajTransformer(const ModelConfig& cfg) : TrajTransformer(cfg, zero_parameters<S>(cfg)) {}

  TrajTransformer(const ModelConfig& cfg, Parameters<S> params)
      : cfg_(cfg), params_(std::move(params)), pe_(position_table<S>(cfg, cfg.max_len)) {
    cfg_.validate();
  }

  static TrajTransformer initialized(const ModelConfig& cfg, std::uint64_t seed) {
    return TrajTransformer(cfg, init_parameters<S>(cfg, seed));
  }

  [[nodiscard]] const ModelConfig& config() const { return cfg_; }
  [[nodiscard]] const Parameters<S>& params() const { return params_; }
  Parameters<S>& params() { return params_; }
  [[nodiscard]] const Mat<S>& positions() const { return pe_; }

  /// Sinusoid bank of t through Linear -> SiLU -> Linear; one row per sample.
  Mat<S> timestep_embedding(std::span<const int> t, Mat<S>* bank = nullptr,
                            Mat<S>* pre_act = nullptr, Mat<S>* act = nullptr) const {
    const int d = cfg_.dim;
    Mat<S> s(static_cast<Eigen::Index>(t.size()), d);
    for (std::size_t b = 0; b < t.size(); ++b) {
      if (t[b] < 1) throw ContractError("timestep must be >= 1");
      const auto v = timestep_sinusoid(t[b], d);
      for (int j = 0; j < d; ++j) s(static_cast<Eigen::Index>(b), j) = static_cast<S>(v[static_cast<std::size_t>(j)]);
    }
    Mat<S> h;
    ops::linear(s, params_.time_w1, params_.time_b1, h);
    Mat<S> a = ops::silu(h);
    Mat<S> out;
    ops::linear(a, params_.time_w2, params_.time_b2, out);
    if (bank != nullptr) *bank = std::move(s);
    if (pre_act != nullptr) *pre_act = std::move(h);
    if (act != nullptr) *act = std::move(a);
    return out;
  }

  /// dep/dst cell rows + time-bucket row + trip_length * w + b.
  Mat<S> condition_embedding(std::span<const ConditionVector> c) const {
    Mat<S> out = Mat<S>::Zero(static_cast<Eigen::Index>(c.size()), cfg_.dim);
    for (std::size_t b = 0; b < c.size(); ++b) {
      check_condition(c[b]);
      const auto r = static_cast<Eigen::Index>(b);
      if (cfg_.use_cells) {
        out.row(r) += params_.dep_table.row(c[b].dep_cell) + params_.dst_table.row(c[b].dst_cell);
      }
      if (cfg_.use_time_bucket) out.row(r) += params_.time_table.row(c[b].time_bucket);
      if (cfg_.use_trip_length) {
        out.row(r) += (params_.length_w * static_cast<S>(c[b].trip_length) + params_.length_b).transpose();
      }
    }
    return out;
  }

  Mat<S> embed(const TrajBatch<S>& x) const {
    if (static_cast<int>(x.length) > cfg_.max_len) {
      throw CapacityError("trajectory length " + std::to_string(x.length) + " exceeds max_len " +
                          std::to_string(cfg_.max_len));
    }
    return cfg_.emb_mode == EmbMode::kLoc ? embed_loc(x, params_, &pe_) : embed_lonlat(x, params_, &pe_);
  }

  /// Final layer norm + (shift, scale) modulation, then per-token linear
  /// projection de-interleaved back to (B, N, 2).
  TrajBatch<S> decode(const Mat<S>& tokens, const Mat<S>& y, std::size_t points) const {
    Cache tmp;
    return decode_impl(tokens, y, points, tmp);
  }

  TrajBatch<S> predict(const TrajBatch<S>& x, std::span<const int> t,
                       std::span<const ConditionVector> c) const {
    check_batch(x, t, c);
    const auto seq = static_cast<Eigen::Index>(cfg_.seq_len(static_cast<int>(x.length)));
    const Mat<S> y = timestep_embedding(t) + condition_embedding(c);
    Mat<S> tokens = embed(x);
    ops::BlockCache<S> bc;
    for (const auto& blk : params_.blocks) ops::transformer_block(tokens, y, blk, seq, cfg_.heads, bc, false);
    return decode(tokens, y, x.length);
  }

  /// Mean squared error between `target` and the prediction at (x_t, t, c).
  /// Parameter gradients are written into `grads` (overwritten).
  S loss_and_grad(const TrajBatch<S>& x, std::span<const int> t, std::span<const ConditionVector> c,
                  const TrajBatch<S>& target, Parameters<S>& grads) const {
    check_batch(x, t, c);
    if (!x.same_shape(target)) throw ContractError("loss: target shape differs from input");
    const auto batch = static_cast<Eigen::Index>(x.batch);
    const auto seq = static_cast<Eigen::Index>(cfg_.seq_len(static_cast<int>(x.length)));
    const int d = cfg_.dim;
    grads = zero_parameters<S>(cfg_);

    Cache cache;
    const Mat<S> te = timestep_embedding(t, &cache.time_bank, &cache.time_h, &cache.time_a);
    const Mat<S> y = te + condition_embedding(c);
    Mat<S> tokens = embed(x);
    std::vector<ops::BlockCache<S>> blocks(params_.blocks.size());
    for (std::size_t k = 0; k < blocks.size(); ++k) {
      ops::transformer_block(tokens, y, params_.blocks[k], seq, cfg_.heads, blocks[k], true);
    }
    const TrajBatch<S> pred = decode_impl(tokens, y, x.length, cache);

    const S count = S(pred.size());
    S loss = 0;
    for (std::size_t k = 0; k < pred.size(); ++k) {
      const S r = pred.data[k] - target.data[k];
      loss += r * r;
    }
    loss /= count;

    // Prediction memory order equals the (tokens x out_per_token) layout.
    const int o = cfg_.out_per_token();
    Mat<S> dout(batch * seq, o);
    for (std::size_t k = 0; k < pred.size(); ++k) {
      dout.data()[k] = S(2) * (pred.data[k] - target.data[k]) / count;
    }

    Mat<S> dy = Mat<S>::Zero(batch, d);
    grads.decode_w.noalias() += dout.transpose() * cache.uf;
    grads.decode_b += dout.colwise().sum().transpose();
    const Mat<S> duf = dout * params_.decode_w;
    Mat<S> dmodf = Mat<S>::Zero(batch, 2 * d);
    const Mat<S> dnf = ops::modulate_backward(duf, cache.nf, cache.modf, 0, d, seq, dmodf);
    grads.final_mod.noalias() += dmodf.transpose() * y;
    dy.noalias() += dmodf * params_.final_mod;
    Mat<S> dx = ops::layer_norm_backward(dnf, cache.nf, cache.rstdf);

    for (std::size_t k = blocks.size(); k-- > 0;) {
      dx = ops::transformer_block_backward(dx, y, params_.blocks[k], blocks[k], seq, cfg_.heads,
                                           grads.blocks[k], dy);
    }

    embed_backward(x, dx, grads);
    condition_backward(c, dy, grads);
    grads.time_w2.noalias() += dy.transpose() * cache.time_a;
    grads.time_b2 += dy.colwise().sum().transpose();
    Mat<S> dh = dy * params_.time_w2;
    dh.array() *= ops::silu_grad(cache.time_h).array();
    grads.time_w1.noalias() += dh.transpose() * cache.time_bank;
    grads.time_b1 += dh.colwise().sum().transpose();
    return loss;
  }

 private:
  struct Cache {
    Mat<S> time_bank, time_h, time_a;
    Mat<S> nf, uf, modf;
    Vec<S> rstdf;
  };

  void check_condition(const ConditionVector& c) const {
    if (c.dep_cell < 0 || c.dep_cell >= cfg_.cond_cells || c.dst_cell < 0 || c.dst_cell >= cfg_.cond_cells) {
      throw ConditionError("condition cell out of range [0, " + std::to_string(cfg_.cond_cells) + ")");
    }
    if (c.time_bucket < 0 || c.time_bucket >= kTimeBuckets) throw ConditionError("time bucket must be 0..3");
    if (!std::isfinite(c.trip_length)) throw ConditionError("trip length must be finite");
  }

  void check_batch(const TrajBatch<S>& x, std::span<const int> t, std::span<const ConditionVector> c) const {
    if (t.size() != x.batch || c.size() != x.batch) {
      throw ContractError("batch size mismatch between trajectories, timesteps and conditions");
    }
  }

  TrajBatch<S> decode_impl(const Mat<S>& tokens, const Mat<S>& y, std::size_t points, Cache& cache) const {
    const auto seq = static_cast<Eigen::Index>(cfg_.seq_len(static_cast<int>(points)));
    if (y.rows() == 0 ? tokens.rows() != 0 : tokens.rows() != y.rows() * seq) {
      throw ContractError("decode: token count does not match " + std::to_string(seq) + " per sample");
    }
    const int d = cfg_.dim;
    ops::layer_norm(tokens, cache.nf, cache.rstdf);
    cache.modf = y * params_.final_mod.transpose();
    ops::modulate(cache.nf, cache.modf, 0, d, seq, cache.uf);
    Mat<S> out;
    ops::linear(cache.uf, params_.decode_w, params_.decode_b, out);
    TrajBatch<S> pred(static_cast<std::size_t>(y.rows()), points);
    std::copy(out.data(), out.data() + out.size(), pred.data.begin());
    return pred;
  }

  void embed_backward(const TrajBatch<S>& x, const Mat<S>& dx, Parameters<S>& g) const {
    const auto n = static_cast<Eigen::Index>(x.length);
    for (std::size_t b = 0; b < x.batch; ++b) {
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto ii = static_cast<std::size_t>(i);
        if (cfg_.emb_mode == EmbMode::kLoc) {
          const auto row = dx.row(static_cast<Eigen::Index>(b) * n + i).transpose();
          g.embed_w.col(0) += row * x.at(b, ii, 0);
          g.embed_w.col(1) += row * x.at(b, ii, 1);
          g.embed_b += row;
        } else {
          const Eigen::Index r = (static_cast<Eigen::Index>(b) * n + i) * 2;
          g.embed_lon_w.col(0) += dx.row(r).transpose() * x.at(b, ii, 0);
          g.embed_lon_b += dx.row(r).transpose();
          g.embed_lat_w.col(0) += dx.row(r + 1).transpose() * x.at(b, ii, 1);
          g.embed_lat_b += dx.row(r + 1).transpose();
        }
      }
    }
  }

  void condition_backward(std::span<const ConditionVector> c, const Mat<S>& dy, Parameters<S>& g) const {
    for (std::size_t b = 0; b < c.size(); ++b) {
      const auto r = static_cast<Eigen::Index>(b);
      if (cfg_.use_cells) {
        g.dep_table.row(c[b].dep_cell) += dy.row(r);
        g.dst_table.row(c[b].dst_cell) += dy.row(r);
      }
      if (cfg_.use_time_bucket) g.time_table.row(c[b].time_bucket) += dy.row(r);
      if (cfg_.use_trip_length) {
        g.length_w += dy.row(r).transpose() * static_cast<S>(c[b].trip_length);
        g.length_b += dy.row(r).transpose();
      }
    }
  }

  ModelConfig cfg_;
  Parameters<S> params_;
  Mat<S> pe_;
};

}  // namespace trajdiff::model
