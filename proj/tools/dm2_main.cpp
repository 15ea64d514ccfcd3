#include <CLI11.hpp>

#include <iostream>

#include "dm2/errors.hpp"
#include "dm2/harness.hpp"

namespace h = dm2::harness;

int main(int argc, char** argv) {
  CLI::App app{"dm2: tabular decentralized distribution-matching MARL experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::uint64_t seed = 0;
  h::CommandOptions opts;
  std::vector<std::string> inputs;

  auto add_common = [&](CLI::App* cmd, bool needs_config) {
    auto* c = cmd->add_option("--config", config_path, "experiment config (JSON)");
    if (needs_config) c->required()->check(CLI::ExistingFile);
    cmd->add_option("--seed", seed, "run this single seed instead of the config's list");
    cmd->add_option("--out", opts.out, "output root (default: config output_dir, then $DM2_OUT_ROOT, then ./runs)");
    cmd->add_option("--jobs", opts.jobs, "parallel worker slots")->check(CLI::PositiveNumber);
  };

  auto* train = app.add_subcommand("train-experts", "train co-trained and separately trained expert bundles");
  auto* sample = app.add_subcommand("sample-demos", "sample per-agent demonstration sets");
  auto* run = app.add_subcommand("run", "train learners (dm2, gail_only, task_only, turn_by_turn)");
  auto* ablate = app.add_subcommand("ablate", "run the 2x2 demonstration-style matrix");
  auto* verify = app.add_subcommand("verify", "certificates and invariant suite");
  auto* report = app.add_subcommand("report", "summarize run directories");
  for (auto* c : {train, sample, run, ablate, verify}) add_common(c, true);
  add_common(report, false);
  report->add_option("runs", inputs, "run directories to summarize")->required()->check(CLI::ExistingDirectory);

  CLI11_PARSE(app, argc, argv);

  try {
    for (auto* c : {train, sample, run, ablate, verify, report}) {
      if (c->get_option("--seed")->count() > 0) opts.seed = seed;
    }
    h::CommandResult res;
    if (report->parsed()) {
      for (const auto& in : inputs) opts.inputs.emplace_back(in);
      res = h::cmd_report(opts);
    } else {
      h::ExperimentConfig cfg = h::load_config(config_path);
      if (train->parsed()) res = h::cmd_train_experts(cfg, opts);
      if (sample->parsed()) res = h::cmd_sample_demos(cfg, opts);
      if (run->parsed()) res = h::cmd_run(cfg, opts);
      if (ablate->parsed()) res = h::cmd_ablate(cfg, opts);
      if (verify->parsed()) res = h::cmd_verify(cfg, opts);
    }
    std::cout << res.run_dir.string() << '\n';
    return res.ok ? 0 : 1;
  } catch (const dm2::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
}
