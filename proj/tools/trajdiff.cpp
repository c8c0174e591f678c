#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "trajdiff/cli/commands.hpp"

namespace fs = std::filesystem;
using namespace trajdiff;

namespace {

int exit_code(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) != nullptr) return 1;
  if (dynamic_cast<const DivergenceError*>(&e) != nullptr || dynamic_cast<const SigmaError*>(&e) != nullptr ||
      dynamic_cast<const ScheduleError*>(&e) != nullptr) {
    return 3;
  }
  return 2;
}

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::vector<std::string> overrides;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config, "JSON run config")->check(CLI::ExistingFile);
    cmd->add_option("--seed", seed, "Master seed");
    cmd->add_option("--out", out, "Output directory");
    cmd->add_option("--set", overrides, "Override, e.g. train.max_steps=500")->take_all();
  }

  [[nodiscard]] cli::RunConfig resolve() const { return cli::resolve_config(config, overrides, seed, out); }
};

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"Trajectory diffusion transformer toolkit"};
  app.require_subcommand(1);

  Common gen_opts, train_opts, sample_opts, eval_opts, plot_opts;

  auto* gen = app.add_subcommand("gen-data", "Synthesize or import trajectories and preprocess them");
  gen_opts.attach(gen);

  auto* trn = app.add_subcommand("train", "Train the noise-prediction model");
  train_opts.attach(trn);
  std::string train_data, resume;
  trn->add_option("--data", train_data, "Training dataset (default <out>/train.bin)");
  trn->add_option("--resume", resume, "Checkpoint to resume from")->check(CLI::ExistingFile);

  auto* smp = app.add_subcommand("sample", "Generate trajectories from a checkpoint");
  sample_opts.attach(smp);
  std::string ckpt, cond_path, sample_out;
  cli::SampleOptions sopt;
  smp->add_option("--checkpoint", ckpt, "Model checkpoint (default <out>/model.bin)");
  smp->add_option("--conditions", cond_path, "Dataset supplying conditions (default <out>/test.bin)");
  smp->add_option("-n,--count", sopt.n, "Number of trajectories");
  smp->add_option("--dep-cell", sopt.dep_cell, "Fix the departure cell");
  smp->add_option("--dst-cell", sopt.dst_cell, "Fix the destination cell");
  smp->add_option("--output", sample_out, "Generated dataset path (default <out>/generated.bin)");

  auto* evl = app.add_subcommand("eval", "Compare generated trajectories with real ones");
  eval_opts.attach(evl);
  std::string real_path, gen_path, report_path;
  evl->add_option("--real", real_path, "Real dataset")->required();
  evl->add_option("--gen", gen_path, "Generated dataset")->required();
  evl->add_option("--report", report_path, "Report path (default <out>/report.txt)");

  auto* plt = app.add_subcommand("plot", "Render a density map or trajectory overlay");
  plot_opts.attach(plt);
  std::vector<std::string> plot_inputs;
  std::string plot_out, roads;
  plt->add_option("inputs", plot_inputs, "Dataset files")->required();
  plt->add_option("--image", plot_out, "Output PPM path")->required();
  plt->add_option("--roads", roads, "Road map CSV drawn under an overlay");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) {
      cli::cmd_gen_data(gen_opts.resolve());
    } else if (trn->parsed()) {
      const auto cfg = train_opts.resolve();
      cli::cmd_train(cfg, train_data.empty() ? (fs::path(cfg.out) / "train.bin").string() : train_data, resume);
    } else if (smp->parsed()) {
      const auto cfg = sample_opts.resolve();
      const auto dir = fs::path(cfg.out);
      cli::cmd_sample(cfg, ckpt.empty() ? (dir / "model.bin").string() : ckpt,
                      cond_path.empty() ? (dir / "test.bin").string() : cond_path, sopt,
                      sample_out.empty() ? (dir / "generated.bin").string() : sample_out);
    } else if (evl->parsed()) {
      const auto cfg = eval_opts.resolve();
      cli::cmd_eval(cfg, real_path, gen_path,
                    report_path.empty() ? (fs::path(cfg.out) / "report.txt").string() : report_path);
    } else if (plt->parsed()) {
      cli::cmd_plot(plot_opts.resolve(), plot_inputs, plot_out, roads);
    }
  } catch (const trajdiff::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
