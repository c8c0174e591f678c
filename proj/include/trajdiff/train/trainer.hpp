#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "trajdiff/core.hpp"
#include "trajdiff/data/dataset.hpp"
#include "trajdiff/diffusion/schedule.hpp"
#include "trajdiff/model/checkpoint.hpp"
#include "trajdiff/model/transformer.hpp"
#include "trajdiff/train/adamw.hpp"
#include "trajdiff/train/loss.hpp"

namespace trajdiff::train {

struct TrainConfig {
  double learning_rate = 1e-4;
  double weight_decay = 0.0;
  std::size_t batch_size = 64;
  std::uint64_t max_steps = 1000;  // absolute step count to reach
  std::uint64_t checkpoint_every = 0;
  std::uint64_t log_every = 100;
  std::uint64_t seed = 0;
  std::optional<double> grad_clip;

  void validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("train.learning_rate must be > 0");
    if (!(weight_decay >= 0.0)) throw ConfigError("train.weight_decay must be >= 0");
    if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
    if (grad_clip && !(*grad_clip > 0.0)) throw ConfigError("train.grad_clip must be > 0");
  }
};

struct TrainState {
  model::ModelConfig config;
  std::uint64_t step = 0;
  model::Parameters<float> params;
  model::Parameters<float> m;
  model::Parameters<float> v;
  Rng rng;

  friend bool operator==(const TrainState&, const TrainState&) = default;
};

/// Fresh parameters from `seed`; the data/noise stream is split from the same seed.
inline TrainState init_state(const model::ModelConfig& cfg, std::uint64_t seed) {
  TrainState s{cfg, 0, model::init_parameters<float>(cfg, seed), model::zero_parameters<float>(cfg),
               model::zero_parameters<float>(cfg), Rng(stream_seed(seed, 0x7A11))};
  return s;
}

inline model::Checkpoint to_checkpoint(const TrainState& s) {
  std::ostringstream rng;
  rng << s.rng;
  return {s.config, s.params, model::OptimizerSnapshot{s.step, rng.str(), s.m, s.v}};
}

inline TrainState from_checkpoint(const model::Checkpoint& ck) {
  if (!ck.optimizer) throw FormatError("checkpoint has no optimizer state to resume from");
  TrainState s{ck.config, ck.optimizer->step, ck.params, ck.optimizer->m, ck.optimizer->v, Rng()};
  std::istringstream in(ck.optimizer->rng_state);
  in >> s.rng;
  if (!in) throw FormatError("checkpoint rng state is unreadable");
  return s;
}

struct TrainIo {
  std::ostream* log = nullptr;      // JSON lines {step, loss, wall_ms}
  std::string checkpoint_dir;       // empty: no periodic checkpoints
};

struct TrainResult {
  std::vector<float> losses;  // one entry per step run in this call
};

inline std::string checkpoint_path(const std::string& dir, std::uint64_t step) {
  return (std::filesystem::path(dir) / ("ckpt_" + std::to_string(step) + ".bin")).string();
}

/// Runs AdamW updates until `state.step == cfg.max_steps`. Batches are drawn
/// with replacement; all randomness comes from `state.rng`, so resuming from
/// a checkpoint continues the same run.
inline TrainResult train(TrainState& state, const data::Dataset& ds, const diffusion::NoiseSchedule& schedule,
                         const TrainConfig& cfg, const TrainIo& io = {}) {
  cfg.validate();
  state.config.validate();
  TrainResult result;
  if (state.step >= cfg.max_steps) return result;
  if (ds.size() == 0) throw ContractError("train: empty dataset");
  if (static_cast<int>(ds.meta.points) > state.config.max_len) {
    throw CapacityError("dataset length exceeds the model's max_len");
  }
  if (state.config.use_cells && static_cast<int>(ds.meta.cond_grid.cells()) > state.config.cond_cells) {
    throw ConfigError("dataset condition grid has more cells than model.cond_cells");
  }
  const auto all = ds.trajectories.cast<float>();
  const std::size_t n = ds.meta.points;
  const std::size_t bsz = cfg.batch_size;
  model::TrajTransformer<float> net(state.config, std::move(state.params));
  auto grads = model::zero_parameters<float>(state.config);
  AdamWConfig opt{cfg.learning_rate, cfg.weight_decay};
  TrajBatch<float> x0(bsz, n);
  std::vector<model::ConditionVector> cond(bsz);
  std::uniform_int_distribution<std::size_t> pick(0, ds.size() - 1);
  const auto t0 = std::chrono::steady_clock::now();
  double window = 0.0;
  std::uint64_t window_n = 0;

  try {
    while (state.step < cfg.max_steps) {
      for (std::size_t b = 0; b < bsz; ++b) {
        const std::size_t i = pick(state.rng);
        const auto src = all.row(i);
        std::copy(src.begin(), src.end(), x0.row(b).begin());
        cond[b] = ds.conditions[i];
      }
      const float loss = diffusion_loss_and_grad(net, x0, std::span<const model::ConditionVector>(cond), schedule,
                                                 state.rng, grads);
      const double gnorm = std::sqrt(squared_norm(grads));
      if (!std::isfinite(gnorm)) throw DivergenceError("non-finite gradient");
      if (cfg.grad_clip && gnorm > *cfg.grad_clip) {
        const auto scale = static_cast<float>(*cfg.grad_clip / gnorm);
        for (const auto& r : model::param_refs(grads)) {
          for (Eigen::Index k = 0; k < r.size(); ++k) r.data[k] *= scale;
        }
      }
      ++state.step;
      adamw_update(net.params(), grads, state.m, state.v, state.step, opt);
      result.losses.push_back(loss);
      window += loss;
      ++window_n;

      if (io.log != nullptr && cfg.log_every > 0 && (state.step % cfg.log_every == 0 || state.step == cfg.max_steps)) {
        const auto ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        char buf[128];
        std::snprintf(buf, sizeof buf, "{\"step\": %llu, \"loss\": %.6g, \"wall_ms\": %.0f}\n",
                      static_cast<unsigned long long>(state.step), window / static_cast<double>(window_n), ms);
        *io.log << buf << std::flush;
        window = 0.0;
        window_n = 0;
      }
      if (!io.checkpoint_dir.empty() && cfg.checkpoint_every > 0 &&
          (state.step % cfg.checkpoint_every == 0 || state.step == cfg.max_steps)) {
        state.params = net.params();
        model::save_checkpoint(checkpoint_path(io.checkpoint_dir, state.step), to_checkpoint(state));
      }
    }
  } catch (const DivergenceError& e) {
    state.params = std::move(net.params());
    std::ostringstream msg;
    msg << e.what() << " at step " << state.step + 1 << " (parameter norm "
        << std::sqrt(squared_norm(state.params)) << ")";
    throw DivergenceError(msg.str());
  }
  state.params = std::move(net.params());
  return result;
}

}  // namespace trajdiff::train
