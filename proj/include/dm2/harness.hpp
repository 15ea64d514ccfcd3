#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "dm2/environments.hpp"
#include "dm2/learner.hpp"

namespace dm2::harness {

inline constexpr const char* kCodeVersion = "0.1.0";
inline constexpr const char* kOutRootEnv = "DM2_OUT_ROOT";

enum class Algorithm { kDm2, kGailOnly, kTaskOnly, kTurnByTurn };
std::string to_string(Algorithm a);

struct DemoConfig {
  std::vector<std::string> styles{"co_conc"};
  int episodes = 1000;
  int max_length = 1000;
  std::uint64_t seed = 7;
  bool with_actions = false;
  std::string path;  // existing demonstration directory; empty = sample fresh
};

struct ExpertConfig {
  double quality = 1.0;
  std::uint64_t seed = 0;
  std::vector<std::uint64_t> separate_seeds{1, 2};
  std::string path;  // existing expert bundle file; empty = train fresh
};

struct TrainingConfig {
  int epochs = 600;
  int steps_per_epoch = 500;
  int demo_samples = 0;
  int max_episode_length = 1000;
  double threshold_fraction = 0.8;
  bool stop_at_threshold = false;
  LearnerConfig learner;
  // turn_by_turn only
  int max_rounds = 500;
  int H = 1;
  TurnReward turn_reward = TurnReward::kAssumption1;
  double imitation_c = 1.0;
  double step_size = 5.0;
  int steps_per_turn = 1;
  int max_backtracks = 30;
  int plateau_rounds = 20;
  double plateau_tolerance = 1e-6;
  double epsilon = 0.0;
};

struct EvaluationConfig {
  int every = 10;
  int episodes = 32;
  int max_length = 1000;
  int bound_chain_samples = 200;  // verify: random (policy, expert) draws
};

struct ExperimentConfig {
  EnvSpec env;
  Algorithm algorithm = Algorithm::kDm2;
  double mixing_c = 0.3;
  std::vector<double> alphas{0.1, 1.0, 10.0};
  std::vector<double> betas{0.1, 1.0, 10.0};
  DemoConfig demos;
  ExpertConfig expert;
  std::vector<std::uint64_t> seeds{0};
  TrainingConfig training;
  EvaluationConfig evaluation;
  std::string output_dir;
};

// Validates every key; unknown keys and bad values are all collected and
// reported together in one ConfigError.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);
// Fully resolved form (every default filled in); parse_config(to_json(c)) == c.
nlohmann::json to_json(const ExperimentConfig& config);

std::uint64_t fnv1a64(std::string_view bytes);
// 16 hex digits of FNV-1a over the canonical resolved JSON.
std::string config_hash(const ExperimentConfig& config);
// Round-trippable decimal ("%.17g"); empty for NaN.
std::string format_double(double x);

struct CommandOptions {
  std::optional<std::uint64_t> seed;  // replaces the config's seed list
  std::string out;                    // output root override
  int jobs = 1;
  std::vector<std::filesystem::path> inputs;  // report only
};

struct CommandResult {
  std::filesystem::path run_dir;
  bool ok = true;
  nlohmann::json summary;
};

// Silences the progress lines commands print to stderr.
void set_quiet(bool quiet);

// --out, else the config's output_dir, else $DM2_OUT_ROOT, else ./runs.
std::filesystem::path output_root(const ExperimentConfig* config, const CommandOptions& options);

CommandResult cmd_train_experts(ExperimentConfig config, const CommandOptions& options);
CommandResult cmd_sample_demos(ExperimentConfig config, const CommandOptions& options);
CommandResult cmd_run(ExperimentConfig config, const CommandOptions& options);
CommandResult cmd_ablate(ExperimentConfig config, const CommandOptions& options);
CommandResult cmd_verify(ExperimentConfig config, const CommandOptions& options);
CommandResult cmd_report(const CommandOptions& options);

// CSV headers, in column order, for a game with `num_agents` agents.
std::vector<std::string> dm2_metric_columns(int num_agents);
std::vector<std::string> turn_metric_columns();
std::vector<std::string> turn_detail_columns();

}  // namespace dm2::harness
