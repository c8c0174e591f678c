#pragma once

#include <cmath>
#include <cstdint>

#include "trajdiff/model/parameters.hpp"

namespace trajdiff::train {

struct AdamWConfig {
  double learning_rate = 1e-4;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One AdamW update with bias correction; `step` is the 1-based index of
/// this update. Weight decay is decoupled from the gradient.
template <typename S>
void adamw_update(model::Parameters<S>& params, model::Parameters<S>& grads, model::Parameters<S>& m,
                  model::Parameters<S>& v, std::uint64_t step, const AdamWConfig& cfg) {
  const auto p = model::param_refs(params);
  const auto g = model::param_refs(grads);
  const auto mm = model::param_refs(m);
  const auto vv = model::param_refs(v);
  const S b1 = static_cast<S>(cfg.beta1);
  const S b2 = static_cast<S>(cfg.beta2);
  const S c1 = static_cast<S>(1.0 / (1.0 - std::pow(cfg.beta1, static_cast<double>(step))));
  const S c2 = static_cast<S>(1.0 / (1.0 - std::pow(cfg.beta2, static_cast<double>(step))));
  const S lr = static_cast<S>(cfg.learning_rate);
  const S decay = static_cast<S>(1.0 - cfg.learning_rate * cfg.weight_decay);
  const S eps = static_cast<S>(cfg.eps);
  for (std::size_t k = 0; k < p.size(); ++k) {
    const Eigen::Index n = p[k].size();
    Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>> pa(p[k].data, n), ga(g[k].data, n), ma(mm[k].data, n),
        va(vv[k].data, n);
    ma = b1 * ma + (S(1) - b1) * ga;
    va = b2 * va + (S(1) - b2) * ga.square();
    if (cfg.weight_decay != 0.0) pa *= decay;
    pa -= lr * (ma * c1) / ((va * c2).sqrt() + eps);
  }
}

template <typename S>
double squared_norm(model::Parameters<S>& p) {
  double acc = 0.0;
  for (const auto& r : model::param_refs(p)) {
    for (Eigen::Index k = 0; k < r.size(); ++k) acc += static_cast<double>(r.data[k]) * static_cast<double>(r.data[k]);
  }
  return acc;
}

}  // namespace trajdiff::train
