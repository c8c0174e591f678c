#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "trajdiff/train/loss.hpp"

namespace trajdiff::train {

struct GradCheckEntry {
  std::string name;
  long double max_rel_error = 0;
  long double max_abs_grad = 0;
};

struct GradCheckReport {
  long double max_rel_error = 0;
  std::string worst_param;
  std::size_t checked = 0;
  std::vector<GradCheckEntry> per_param;
  bool passed = false;
};

struct GradCheckOptions {
  std::uint64_t seed = 7;
  std::size_t batch = 3;
  long double step = 1e-6L;
  // Gradients smaller than this are compared on an absolute scale, since
  // the central difference carries ~eps/step of roundoff.
  long double floor = 1e-8L;
  // Standard deviation used to randomize every tensor (including the
  // zero-initialized ones, which would otherwise give trivial zeros).
  double param_scale = 0.3;
};

/// Analytic gradient of the diffusion loss versus central differences in
/// extended precision (long double), with all parameters randomized.
inline GradCheckReport grad_check(const model::ModelConfig& cfg, double tolerance,
                                  const GradCheckOptions& opt = {}) {
  using S = long double;
  if (model::count_params(cfg) > 5000) throw ContractError("grad_check: config too large for finite differences");
  auto params = model::zero_parameters<S>(cfg);
  Rng rng(opt.seed);
  {
    std::normal_distribution<double> nd(0.0, opt.param_scale);
    for (auto& r : model::param_refs(params)) {
      for (Eigen::Index k = 0; k < r.size(); ++k) r.data[k] = static_cast<S>(nd(rng));
    }
  }
  model::TrajTransformer<S> net(cfg, params);

  const auto n = static_cast<std::size_t>(cfg.max_len);
  TrajBatch<S> x0(opt.batch, n);
  std::uniform_real_distribution<double> coord(-1.0, 1.0);
  for (auto& v : x0.data) v = static_cast<S>(coord(rng));
  std::vector<ConditionVector> cond(opt.batch);
  std::uniform_int_distribution<int> cell(0, cfg.cond_cells - 1);
  std::uniform_int_distribution<int> bucket(0, model::kTimeBuckets - 1);
  for (auto& c : cond) {
    c = {cell(rng), cell(rng), bucket(rng), coord(rng) + 1.0};
  }
  const auto schedule = diffusion::build_linear_schedule(1000, 1e-4, 0.02);
  const auto nb = draw_noised_batch(x0, schedule, rng);
  const std::span<const int> ts(nb.t);
  const std::span<const ConditionVector> cs(cond);

  model::Parameters<S> grads;
  net.loss_and_grad(nb.x_t, ts, cs, nb.eps, grads);
  auto loss_at = [&]() { return mean_squared(net.predict(nb.x_t, ts, cs), nb.eps); };

  GradCheckReport report;
  auto prefs = model::param_refs(net.params());
  auto grefs = model::param_refs(grads);
  for (std::size_t i = 0; i < prefs.size(); ++i) {
    GradCheckEntry entry{prefs[i].name};
    for (Eigen::Index k = 0; k < prefs[i].size(); ++k) {
      S& p = prefs[i].data[k];
      const S saved = p;
      p = saved + opt.step;
      const S up = loss_at();
      p = saved - opt.step;
      const S down = loss_at();
      p = saved;
      const S numeric = (up - down) / (2 * opt.step);
      const S analytic = grefs[i].data[k];
      const S denom = std::max({std::fabs(numeric), std::fabs(analytic), opt.floor});
      const S rel = std::fabs(numeric - analytic) / denom;
      entry.max_rel_error = std::max(entry.max_rel_error, rel);
      entry.max_abs_grad = std::max(entry.max_abs_grad, std::fabs(analytic));
      ++report.checked;
    }
    if (entry.max_rel_error >= report.max_rel_error) {
      report.max_rel_error = entry.max_rel_error;
      report.worst_param = entry.name;
    }
    report.per_param.push_back(std::move(entry));
  }
  report.passed = report.max_rel_error <= static_cast<S>(tolerance);
  return report;
}

/// The toy configuration used for gradient verification.
inline model::ModelConfig grad_check_config(model::EmbMode mode = model::EmbMode::kLonLat) {
  model::ModelConfig c;
  c.layers = 1;
  c.dim = 8;
  c.heads = 2;
  c.max_len = 4;
  c.cond_cells = 4;
  c.emb_mode = mode;
  return c;
}

}  // namespace trajdiff::train
