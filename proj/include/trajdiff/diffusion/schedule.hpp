#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "trajdiff/core.hpp"

namespace trajdiff::diffusion {

/// Per-timestep noise variances and their derived products. Timesteps are
/// 1-based: beta(1) .. beta(T). alpha_bar(0) is defined as 1 so the first
/// reverse step and the final hop to t = 0 need no special cases.
class NoiseSchedule {
 public:
  NoiseSchedule() = default;

  explicit NoiseSchedule(std::vector<double> betas) : beta_(std::move(betas)) {
    if (beta_.empty()) throw ScheduleError("noise schedule needs at least one timestep");
    alpha_.resize(beta_.size());
    alpha_bar_.resize(beta_.size());
    double prod = 1.0;
    for (std::size_t i = 0; i < beta_.size(); ++i) {
      const double b = beta_[i];
      if (!(b > 0.0 && b < 1.0)) {
        throw ScheduleError("beta_" + std::to_string(i + 1) + " = " + std::to_string(b) +
                            " outside (0, 1)");
      }
      alpha_[i] = 1.0 - b;
      prod *= alpha_[i];
      alpha_bar_[i] = prod;
    }
  }

  [[nodiscard]] int steps() const { return static_cast<int>(beta_.size()); }
  [[nodiscard]] double beta(int t) const { return beta_[index(t)]; }
  [[nodiscard]] double alpha(int t) const { return alpha_[index(t)]; }
  [[nodiscard]] double alpha_bar(int t) const { return t == 0 ? 1.0 : alpha_bar_[index(t)]; }

  [[nodiscard]] const std::vector<double>& betas() const { return beta_; }
  [[nodiscard]] const std::vector<double>& alphas() const { return alpha_; }
  [[nodiscard]] const std::vector<double>& alpha_bars() const { return alpha_bar_; }

 private:
  [[nodiscard]] std::size_t index(int t) const {
    if (t < 1 || t > steps()) {
      throw ContractError("timestep " + std::to_string(t) + " outside [1, " +
                          std::to_string(steps()) + "]");
    }
    return static_cast<std::size_t>(t - 1);
  }

  std::vector<double> beta_;
  std::vector<double> alpha_;
  std::vector<double> alpha_bar_;
};

/// Linearly spaced betas, both endpoints included.
inline NoiseSchedule build_linear_schedule(int steps, double beta_start, double beta_end) {
  if (steps < 1) throw ScheduleError("schedule length must be >= 1");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    throw ScheduleError("need 0 < beta_start <= beta_end < 1");
  }
  std::vector<double> betas(static_cast<std::size_t>(steps));
  if (steps == 1) {
    betas[0] = beta_start;
  } else {
    const double span = beta_end - beta_start;
    for (int i = 0; i < steps; ++i) {
      betas[static_cast<std::size_t>(i)] =
          beta_start + span * static_cast<double>(i) / static_cast<double>(steps - 1);
    }
    betas.back() = beta_end;
  }
  return NoiseSchedule(std::move(betas));
}

/// x_t = a * x_t + b * eps_hat + c * z. Both reverse samplers reduce to this
/// affine form, which is what the DDPM/DDIM equivalence is checked on.
struct StepCoefficients {
  double x = 0.0;
  double eps = 0.0;
  double z = 0.0;
};

inline StepCoefficients ddpm_coefficients(int t, const NoiseSchedule& s) {
  const double a = s.alpha(t);
  const double ab = s.alpha_bar(t);
  const double ab_prev = s.alpha_bar(t - 1);
  StepCoefficients c;
  c.x = 1.0 / std::sqrt(a);
  c.eps = -c.x * (1.0 - a) / std::sqrt(1.0 - ab);
  c.z = t == 1 ? 0.0 : std::sqrt((1.0 - ab_prev) * (1.0 - a) / (1.0 - ab));
  return c;
}

inline double sigma_ddpm_equivalent(int t, int t_prev, const NoiseSchedule& s) {
  if (!(0 <= t_prev && t_prev < t && t <= s.steps())) {
    throw ContractError("need 0 <= t_prev < t <= T");
  }
  const double ab = s.alpha_bar(t);
  const double ab_prev = s.alpha_bar(t_prev);
  const double v = (1.0 - ab_prev) / (1.0 - ab) * (1.0 - ab / ab_prev);
  return v > 0.0 ? std::sqrt(v) : 0.0;
}

inline StepCoefficients ddim_coefficients(int t, int t_prev, double sigma, const NoiseSchedule& s) {
  if (!(0 <= t_prev && t_prev < t && t <= s.steps())) {
    throw ContractError("need 0 <= t_prev < t <= T");
  }
  if (sigma < 0.0) throw SigmaError("sigma must be nonnegative");
  const double ab = s.alpha_bar(t);
  const double ab_prev = s.alpha_bar(t_prev);
  double radicand = 1.0 - ab_prev - sigma * sigma;
  if (radicand < 0.0) {
    if (radicand < -1e-12) {
      throw SigmaError("sigma " + std::to_string(sigma) + " too large for step " +
                       std::to_string(t) + " -> " + std::to_string(t_prev));
    }
    radicand = 0.0;
  }
  StepCoefficients c;
  const double root_prev = std::sqrt(ab_prev);
  c.x = root_prev / std::sqrt(ab);
  c.eps = -root_prev * std::sqrt(1.0 - ab) / std::sqrt(ab) + std::sqrt(radicand);
  c.z = sigma;
  return c;
}

template <typename Scalar>
struct NoisyState {
  TrajBatch<Scalar> x;
  int t = 0;
};

namespace detail {
template <typename Scalar>
TrajBatch<Scalar> apply(const StepCoefficients& c, const TrajBatch<Scalar>& x,
                        const TrajBatch<Scalar>& eps_hat, const TrajBatch<Scalar>* z) {
  if (!x.same_shape(eps_hat) || (z != nullptr && !x.same_shape(*z))) {
    throw ContractError("reverse step: shape mismatch between state, noise estimate and z");
  }
  TrajBatch<Scalar> out(x.batch, x.length);
  for (std::size_t k = 0; k < x.size(); ++k) {
    double v = c.x * static_cast<double>(x.data[k]) + c.eps * static_cast<double>(eps_hat.data[k]);
    if (z != nullptr && c.z != 0.0) v += c.z * static_cast<double>(z->data[k]);
    out.data[k] = static_cast<Scalar>(v);
  }
  return out;
}
}  // namespace detail

/// x_t = sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps.
template <typename Scalar>
NoisyState<Scalar> forward_sample(const TrajBatch<Scalar>& x0, int t, const TrajBatch<Scalar>& eps,
                                  const NoiseSchedule& s) {
  if (!x0.same_shape(eps)) throw ContractError("forward_sample: eps shape differs from x0");
  if (t < 1 || t > s.steps()) throw ContractError("forward_sample: timestep out of range");
  const double ab = s.alpha_bar(t);
  const double a = std::sqrt(ab);
  const double b = std::sqrt(1.0 - ab);
  NoisyState<Scalar> out{TrajBatch<Scalar>(x0.batch, x0.length), t};
  for (std::size_t k = 0; k < x0.size(); ++k) {
    out.x.data[k] = static_cast<Scalar>(a * static_cast<double>(x0.data[k]) +
                                        b * static_cast<double>(eps.data[k]));
  }
  return out;
}

/// One ancestral step t -> t-1. `z` is ignored at t = 1.
template <typename Scalar>
NoisyState<Scalar> ddpm_step(const NoisyState<Scalar>& state, const TrajBatch<Scalar>& eps_hat,
                             const NoiseSchedule& s, const TrajBatch<Scalar>& z) {
  const auto c = ddpm_coefficients(state.t, s);
  return {detail::apply(c, state.x, eps_hat, state.t == 1 ? nullptr : &z), state.t - 1};
}

/// Implicit step t -> t_prev with explicit sigma (alpha symbols read as
/// cumulative products, alpha_bar(0) = 1).
template <typename Scalar>
NoisyState<Scalar> ddim_step(const NoisyState<Scalar>& state, int t_prev,
                             const TrajBatch<Scalar>& eps_hat, double sigma,
                             const TrajBatch<Scalar>& z, const NoiseSchedule& s) {
  const auto c = ddim_coefficients(state.t, t_prev, sigma, s);
  return {detail::apply(c, state.x, eps_hat, sigma == 0.0 ? nullptr : &z), t_prev};
}

/// Strictly increasing timesteps ending at T, spaced by ceil(T / S).
inline std::vector<int> make_substep_schedule(int steps, int substeps) {
  if (substeps < 1 || substeps > steps) throw ContractError("need 1 <= S <= T");
  const int stride = (steps + substeps - 1) / substeps;
  std::vector<int> out;
  for (int t = steps; t >= 1; t -= stride) out.push_back(t);
  return {out.rbegin(), out.rend()};
}

}  // namespace trajdiff::diffusion
