#pragma once

#include <cmath>
#include <random>
#include <span>
#include <vector>

#include "trajdiff/core.hpp"
#include "trajdiff/diffusion/schedule.hpp"
#include "trajdiff/model/transformer.hpp"

namespace trajdiff::train {

using model::ConditionVector;

/// One draw of the training objective's randomness: a timestep per element,
/// standard-normal noise, and the resulting noisy input.
template <typename S>
struct NoisedBatch {
  TrajBatch<S> x_t;
  std::vector<int> t;
  TrajBatch<S> eps;
};

template <typename S>
NoisedBatch<S> draw_noised_batch(const TrajBatch<S>& x0, const diffusion::NoiseSchedule& schedule,
                                 Rng& rng) {
  NoisedBatch<S> nb{TrajBatch<S>(x0.batch, x0.length), std::vector<int>(x0.batch),
                    TrajBatch<S>(x0.batch, x0.length)};
  std::uniform_int_distribution<int> pick_t(1, schedule.steps());
  for (auto& t : nb.t) t = pick_t(rng);
  fill_normal<S>(rng, std::span<S>(nb.eps.data));
  for (std::size_t b = 0; b < x0.batch; ++b) {
    const double ab = schedule.alpha_bar(nb.t[b]);
    const double a = std::sqrt(ab);
    const double s = std::sqrt(1.0 - ab);
    const auto src = x0.row(b);
    const auto noise = nb.eps.row(b);
    auto dst = nb.x_t.row(b);
    for (std::size_t k = 0; k < src.size(); ++k) {
      dst[k] = static_cast<S>(a * static_cast<double>(src[k]) + s * static_cast<double>(noise[k]));
    }
  }
  return nb;
}

template <typename S>
S mean_squared(const TrajBatch<S>& a, const TrajBatch<S>& b) {
  S acc = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const S r = a.data[k] - b.data[k];
    acc += r * r;
  }
  return a.size() == 0 ? S(0) : acc / S(a.size());
}

/// Simple noise-prediction objective with an arbitrary predictor
/// `(x_t, t, cond) -> eps_hat`.
template <typename S, typename Predictor>
S diffusion_loss(Predictor&& predictor, const TrajBatch<S>& x0, std::span<const ConditionVector> cond,
                 const diffusion::NoiseSchedule& schedule, Rng& rng) {
  if (x0.batch == 0) throw ContractError("diffusion_loss: empty batch");
  if (cond.size() != x0.batch) throw ContractError("diffusion_loss: conditions not aligned with batch");
  const auto nb = draw_noised_batch(x0, schedule, rng);
  const TrajBatch<S> pred = predictor(nb.x_t, std::span<const int>(nb.t), cond);
  const S loss = mean_squared(pred, nb.eps);
  if (!std::isfinite(static_cast<double>(loss))) throw DivergenceError("non-finite diffusion loss");
  return loss;
}

/// Same objective evaluated on the transformer, with parameter gradients.
template <typename S>
S diffusion_loss_and_grad(const model::TrajTransformer<S>& net, const TrajBatch<S>& x0,
                          std::span<const ConditionVector> cond, const diffusion::NoiseSchedule& schedule,
                          Rng& rng, model::Parameters<S>& grads) {
  if (x0.batch == 0) throw ContractError("diffusion_loss: empty batch");
  if (cond.size() != x0.batch) throw ContractError("diffusion_loss: conditions not aligned with batch");
  const auto nb = draw_noised_batch(x0, schedule, rng);
  const S loss = net.loss_and_grad(nb.x_t, std::span<const int>(nb.t), cond, nb.eps, grads);
  if (!std::isfinite(static_cast<double>(loss))) throw DivergenceError("non-finite diffusion loss");
  return loss;
}

}  // namespace trajdiff::train
