#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "trajdiff/diffusion/schedule.hpp"

namespace trajdiff::diffusion {

enum class SigmaMode { kDeterministic, kDdpmEquivalent };

inline std::string to_string(SigmaMode m) {
  return m == SigmaMode::kDeterministic ? "deterministic_eta0" : "ddpm_equivalent";
}

inline SigmaMode sigma_mode_from_string(const std::string& s) {
  if (s == "deterministic_eta0") return SigmaMode::kDeterministic;
  if (s == "ddpm_equivalent") return SigmaMode::kDdpmEquivalent;
  throw ConfigError("unknown sigma_mode '" + s + "'");
}

struct SamplerConfig {
  int steps = 1000;
  int substeps = 200;
  SigmaMode sigma_mode = SigmaMode::kDeterministic;
  std::uint64_t seed = 0;
  // Elements per predictor call. Fixed independently of the worker count so
  // the batch composition seen by the predictor never depends on scheduling.
  std::size_t chunk = 128;
  unsigned workers = 1;
};

/// Runs the strided reverse loop from x_T ~ N(0, I) for `n` trajectories of
/// length `length`. `predictor(x, t, cond)` must return a batch shaped like x.
///
/// Element i draws its initial latent and every z from its own stream seeded
/// by stream_seed(seed, i); chunks are evaluated independently, optionally on
/// several threads, so the result depends only on the arguments.
template <typename Scalar, typename Cond, typename Predictor>
TrajBatch<Scalar> generate(Predictor&& predictor, std::span<const Cond> cond, std::size_t n,
                           std::size_t length, const SamplerConfig& sampler,
                           const NoiseSchedule& schedule, std::uint64_t seed) {
  if (cond.size() != n) throw ContractError("generate: need one condition per trajectory");
  if (sampler.steps != schedule.steps()) {
    throw ContractError("generate: sampler T differs from schedule length");
  }
  TrajBatch<Scalar> out(n, length);
  if (n == 0) return out;
  const auto timesteps = make_substep_schedule(sampler.steps, sampler.substeps);
  const std::size_t chunk = std::max<std::size_t>(1, sampler.chunk);
  const std::size_t n_chunks = (n + chunk - 1) / chunk;

  auto run_chunk = [&](std::size_t ci) {
    const std::size_t begin = ci * chunk;
    const std::size_t count = std::min(chunk, n - begin);
    std::vector<Rng> streams;
    streams.reserve(count);
    for (std::size_t e = 0; e < count; ++e) streams.emplace_back(stream_seed(seed, begin + e));

    NoisyState<Scalar> state{TrajBatch<Scalar>(count, length), sampler.steps};
    for (std::size_t e = 0; e < count; ++e) fill_normal<Scalar>(streams[e], state.x.row(e));
    const auto conds = cond.subspan(begin, count);
    std::vector<int> tvec(count);
    TrajBatch<Scalar> z(count, length);

    for (std::size_t k = timesteps.size(); k-- > 0;) {
      const int t = timesteps[k];
      const int t_prev = k > 0 ? timesteps[k - 1] : 0;
      std::fill(tvec.begin(), tvec.end(), t);
      TrajBatch<Scalar> eps = predictor(state.x, std::span<const int>(tvec), conds);
      if (!eps.same_shape(state.x)) throw ContractError("generate: predictor output shape mismatch");
      double sigma = 0.0;
      if (t_prev > 0 && sampler.sigma_mode == SigmaMode::kDdpmEquivalent) {
        sigma = sigma_ddpm_equivalent(t, t_prev, schedule);
      }
      if (sigma > 0.0) {
        for (std::size_t e = 0; e < count; ++e) fill_normal<Scalar>(streams[e], z.row(e));
      }
      state = ddim_step(state, t_prev, eps, sigma, z, schedule);
    }
    std::copy(state.x.data.begin(), state.x.data.end(), out.data.begin() + begin * length * 2);
  };

  const unsigned workers =
      static_cast<unsigned>(std::min<std::size_t>(std::max(1u, sampler.workers), n_chunks));
  if (workers <= 1) {
    for (std::size_t ci = 0; ci < n_chunks; ++ci) run_chunk(ci);
    return out;
  }
  std::vector<std::exception_ptr> errors(workers);
  {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t ci = w; ci < n_chunks; ci += workers) run_chunk(ci);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

}  // namespace trajdiff::diffusion
