#include "dm2/harness.hpp"

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>
#include <thread>

#include "dm2/demos.hpp"
#include "dm2/equilibrium.hpp"
#include "dm2/errors.hpp"
#include "dm2/experts.hpp"
#include "dm2/objectives.hpp"

namespace dm2::harness {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::mutex log_mutex;
std::atomic<bool> quiet_logs{false};

void log(const std::string& msg) {
  if (quiet_logs) return;
  std::lock_guard lock(log_mutex);
  std::cerr << msg << '\n';
}

// Runs f(0..n-1) on up to `jobs` threads. Each index is independent; the
// first exception (lowest index) is rethrown after all workers finish.
template <class F>
void parallel_for(int n, int jobs, F&& f) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int i = next++; i < n; i = next++) {
      try {
        f(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int threads = std::max(1, std::min(jobs, n));
  std::vector<std::thread> pool;
  for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

void write_file(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << content;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// Everything is written under a hidden temporary directory that is renamed
// into place once complete, so a run directory is either whole or absent.
class RunDir {
 public:
  RunDir(const fs::path& root, std::string name) : root_(root), name_(std::move(name)) {
    fs::create_directories(root_);
    tmp_ = root_ / ("." + name_ + ".tmp-" + std::to_string(::getpid()));
    fs::remove_all(tmp_);
    fs::create_directories(tmp_);
  }
  RunDir(const RunDir&) = delete;
  RunDir& operator=(const RunDir&) = delete;
  ~RunDir() {
    if (!committed_) {
      std::error_code ec;
      fs::remove_all(tmp_, ec);
    }
  }

  const fs::path& path() const { return tmp_; }

  fs::path commit() {
    for (int k = 1;; ++k) {
      const fs::path target = root_ / (k == 1 ? name_ : name_ + "-" + std::to_string(k));
      if (fs::exists(target)) continue;
      std::error_code ec;
      fs::rename(tmp_, target, ec);
      if (!ec) {
        committed_ = true;
        return target;
      }
      if (k > 10000) throw std::runtime_error("cannot create a fresh run directory under " + root_.string());
    }
  }

 private:
  fs::path root_;
  std::string name_;
  fs::path tmp_;
  bool committed_ = false;
};

class Csv {
 public:
  explicit Csv(const std::vector<std::string>& header) : width_(header.size()) { row(header); }

  void row(const std::vector<std::string>& cells) {
    if (cells.size() != width_) throw std::logic_error("csv row width mismatch");
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out_ << ',';
      out_ << cells[i];
    }
    out_ << '\n';
  }
  std::string str() const { return out_.str(); }

 private:
  std::size_t width_;
  std::ostringstream out_;
};

std::string fmt(double x) { return format_double(x); }
std::string fmt(std::optional<double> x) { return x ? format_double(*x) : ""; }
std::string fmt_bool(bool b) { return b ? "1" : "0"; }

double median(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct Context {
  ExperimentConfig cfg;
  std::string hash;
  std::unique_ptr<MarkovGame> game;
  std::unique_ptr<ExpertBundle> co;
  std::unique_ptr<ExpertBundle> sep;
};

fs::path find_in(const std::string& base, const std::string& leaf, const std::string& sub) {
  const fs::path p(base);
  if (fs::exists(p / leaf)) return p / leaf;
  if (fs::exists(p / sub / leaf)) return p / sub / leaf;
  throw ConfigError("cannot find " + leaf + " under " + base);
}

ExpertBundle load_bundle(const std::string& base, const std::string& file) {
  return bundle_from_json(json::parse(read_file(find_in(base, file, "experts"))));
}

Context make_context(ExperimentConfig cfg, const CommandOptions& opt, bool need_co, bool need_sep) {
  if (opt.seed) cfg.seeds = {*opt.seed};
  Context ctx;
  ctx.hash = config_hash(cfg);
  ctx.game = std::make_unique<MarkovGame>(make_env(cfg.env));
  const MarkovGame& g = *ctx.game;
  if (need_co) {
    ctx.co = std::make_unique<ExpertBundle>(cfg.expert.path.empty() ? cotrain_experts(g, cfg.expert.quality, cfg.expert.seed)
                                                                      : load_bundle(cfg.expert.path, "co_trained.json"));
    validate_policy(g, ctx.co->joint_policy);
  }
  if (need_sep) {
    ctx.sep = std::make_unique<ExpertBundle>(cfg.expert.path.empty()
                                                 ? independent_train(g, cfg.expert.separate_seeds)
                                                 : load_bundle(cfg.expert.path, "separately_trained.json"));
    validate_policy(g, ctx.sep->joint_policy);
  }
  ctx.cfg = std::move(cfg);
  return ctx;
}

bool needs_sep(const std::vector<std::string>& styles) {
  return std::any_of(styles.begin(), styles.end(),
                     [](const std::string& s) { return DemoStyle::from_tag(s).source == DemoSource::kSeparate; });
}

const ExpertBundle& bundle_for(const Context& ctx, const DemoStyle& style) {
  return style.source == DemoSource::kCoTrained ? *ctx.co : *ctx.sep;
}

std::vector<DemonstrationSet> demos_for(const Context& ctx, const DemoStyle& style) {
  const DemoConfig& d = ctx.cfg.demos;
  if (!d.path.empty()) {
    const fs::path base(d.path);
    fs::path dir = base / style.tag();
    if (!fs::exists(dir)) dir = base / "demos" / style.tag();
    if (!fs::exists(dir)) throw ConfigError("no " + style.tag() + " demonstrations under " + d.path);
    auto sets = read_demonstrations(dir);
    if (static_cast<int>(sets.size()) != ctx.game->num_agents()) throw InputError("demonstrations do not match the game");
    return sets;
  }
  Rng rng(d.seed);
  return sample_demonstrations(*ctx.game, bundle_for(ctx, style), style, d.episodes, d.max_length, rng, d.with_actions);
}

json resolved_config(const Context& ctx, std::optional<std::uint64_t> seed = std::nullopt) {
  ExperimentConfig c = ctx.cfg;
  if (seed) c.seeds = {*seed};
  return to_json(c);
}

void write_config(const fs::path& dir, const Context& ctx, std::optional<std::uint64_t> seed = std::nullopt) {
  write_file(dir / "config.json", resolved_config(ctx, seed).dump(2) + "\n");
}

std::vector<std::string> prefix_columns() { return {"run_id", "config_hash", "code_version", "seed"}; }

std::vector<std::string> prefix(const std::string& run_id, const Context& ctx, std::uint64_t seed) {
  return {run_id, ctx.hash, kCodeVersion, std::to_string(seed)};
}

std::vector<RewardModel> assumption1_models(const JointPolicy& expert, double c) {
  std::vector<RewardModel> out;
  for (const auto& p : expert.policies()) out.push_back(RewardModel::assumption1(p, c));
  return out;
}

json objective_json(const ObjectiveReport& r) {
  return {{"J", r.J},
          {"L", r.L},
          {"L_eps", r.L_eps},
          {"epsilon", r.epsilon},
          {"min_rho", r.min_rho},
          {"task_return", r.task_return},
          {"match_probability", r.match_probability}};
}

// ---------------------------------------------------------------------------
// One training run (one seed, one demonstration style).

struct CellOutput {
  std::string run_id;
  std::string tag;
  std::uint64_t seed = 0;
  std::string metrics_csv;
  std::string turns_csv;
  json summary;
};

CellOutput run_sample_based(const Context& ctx, const std::string& tag, std::uint64_t seed,
                            const std::vector<DemonstrationSet>& demos) {
  const ExperimentConfig& cfg = ctx.cfg;
  const MarkovGame& g = *ctx.game;
  const int K = g.num_agents();
  CellOutput out;
  out.tag = tag;
  out.seed = seed;
  out.run_id = to_string(cfg.algorithm) + "-" + tag + "-" + ctx.hash.substr(0, 8) + "-s" + std::to_string(seed);

  Dm2Config dc;
  dc.mode = cfg.algorithm == Algorithm::kDm2 ? Dm2Mode::kDm2
            : cfg.algorithm == Algorithm::kGailOnly ? Dm2Mode::kGailOnly
                                                    : Dm2Mode::kTaskOnly;
  dc.c = cfg.mixing_c;
  dc.epochs = cfg.training.epochs;
  dc.steps_per_epoch = cfg.training.steps_per_epoch;
  dc.demo_samples = cfg.training.demo_samples;
  dc.eval_every = cfg.evaluation.every;
  dc.eval_episodes = cfg.evaluation.episodes;
  dc.eval_max_length = cfg.evaluation.max_length;
  dc.max_episode_length = cfg.training.max_episode_length;
  dc.threshold_fraction = cfg.training.threshold_fraction;
  dc.stop_at_threshold = cfg.training.stop_at_threshold;
  dc.seed = seed;

  const ExpertBundle* bundle = ctx.co.get();
  if (dc.mode != Dm2Mode::kTaskOnly) bundle = &bundle_for(ctx, DemoStyle::from_tag(tag));
  auto learners = make_learners(g, cfg.training.learner, seed);
  const Dm2Result res = run_dm2(g, learners, demos, dc, &bundle->joint_policy);

  auto cols = dm2_metric_columns(K);
  Csv csv(cols);
  for (const auto& e : res.epochs) {
    auto row = prefix(out.run_id, ctx, seed);
    for (const std::string& s : {to_string(cfg.algorithm), tag, fmt(cfg.mixing_c), std::to_string(e.epoch),
                                 std::to_string(e.env_steps), fmt(e.task_return), fmt(e.behavior_return),
                                 fmt(e.batch_env_reward), fmt(e.eval_return), fmt(e.J)}) {
      row.push_back(s);
    }
    auto per_agent = [&](const std::vector<double>& v) {
      for (int k = 0; k < K; ++k) row.push_back(k < static_cast<int>(v.size()) ? fmt(v[k]) : "");
    };
    per_agent(e.gail_reward);
    per_agent(e.disc_loss);
    per_agent(e.w1);
    per_agent(e.tv);
    csv.row(row);
  }
  out.metrics_csv = csv.str();

  const auto models = assumption1_models(bundle->joint_policy, 1.0);
  const auto report = evaluate_objectives(g, res.learned, bundle->joint_policy, models, 0.0);
  const auto cert = certify_nash(g, res.learned, RewardSpec::task(), kNashTolerance, out.run_id);
  out.summary = {{"run_id", out.run_id},
                 {"config_hash", ctx.hash},
                 {"code_version", kCodeVersion},
                 {"seed", seed},
                 {"algorithm", to_string(cfg.algorithm)},
                 {"demo_style", tag},
                 {"expert_bundle", bundle->id},
                 {"mixing_c", cfg.mixing_c},
                 {"epochs_run", res.epochs.size()},
                 {"epochs_to_threshold", res.epochs_to_threshold},
                 {"threshold", res.threshold},
                 {"optimal_return", res.optimal_return},
                 {"final_task_return", res.epochs.empty() ? 0.0 : res.epochs.back().task_return},
                 {"final_J", report.J},
                 {"final_objectives", objective_json(report)},
                 {"certificate", certificate_to_json(cert)}};
  return out;
}

CellOutput run_turn_based(const Context& ctx, std::uint64_t seed) {
  const ExperimentConfig& cfg = ctx.cfg;
  const MarkovGame& g = *ctx.game;
  CellOutput out;
  out.tag = "expert";
  out.seed = seed;
  out.run_id = "turn_by_turn-" + to_string(cfg.training.turn_reward) + "-" + ctx.hash.substr(0, 8) + "-s" +
               std::to_string(seed);

  TurnByTurnConfig tc;
  const TrainingConfig& t = cfg.training;
  tc.max_rounds = t.max_rounds;
  tc.H = t.H;
  tc.reward = t.turn_reward;
  tc.c = t.imitation_c;
  tc.step_size = t.step_size;
  tc.steps_per_turn = t.steps_per_turn;
  tc.max_backtracks = t.max_backtracks;
  tc.plateau_rounds = t.plateau_rounds;
  tc.plateau_tolerance = t.plateau_tolerance;
  tc.epsilon = t.epsilon;
  auto learners = make_learners(g, t.learner, seed);
  const TurnByTurnResult res = run_turn_by_turn(g, learners, *ctx.co, tc);

  Csv rounds(turn_metric_columns());
  for (const auto& r : res.monitor.rounds) {
    auto row = prefix(out.run_id, ctx, seed);
    for (const std::string& s : {to_string(cfg.algorithm), std::to_string(r.round), fmt(r.J), fmt(r.J_behavior),
                                 fmt(r.L), fmt(r.L_eps), fmt(r.epsilon), fmt(r.min_rho), fmt(r.task_return),
                                 fmt_bool(r.changed)}) {
      row.push_back(s);
    }
    rounds.row(row);
  }
  out.metrics_csv = rounds.str();
  Csv turns(turn_detail_columns());
  for (const auto& r : res.monitor.turns) {
    auto row = prefix(out.run_id, ctx, seed);
    for (const std::string& s : {std::to_string(r.round), std::to_string(r.agent), fmt(r.value_before),
                                 fmt(r.value_after), fmt(r.gail_loss_before), fmt(r.gail_loss_after), fmt(r.max_tv),
                                 std::to_string(r.backtracks), fmt_bool(r.accepted), fmt_bool(r.converged),
                                 fmt_bool(r.condition2_violation)}) {
      row.push_back(s);
    }
    turns.row(row);
  }
  out.turns_csv = turns.str();

  const auto cert = certify_nash(g, res.learned, RewardSpec::task(), kNashTolerance, out.run_id);
  const auto& last = res.monitor.rounds.back();
  out.summary = {{"run_id", out.run_id},
                 {"config_hash", ctx.hash},
                 {"code_version", kCodeVersion},
                 {"seed", seed},
                 {"algorithm", to_string(cfg.algorithm)},
                 {"demo_style", out.tag},
                 {"turn_reward", to_string(t.turn_reward)},
                 {"expert_bundle", ctx.co->id},
                 {"rounds", res.rounds},
                 {"stop_reason", res.stop_reason},
                 {"final_J", last.J},
                 {"final_J_behavior", last.J_behavior},
                 {"final_task_return", last.task_return},
                 {"target_J", g.num_agents() - 0.05},
                 {"reached_target", last.J >= g.num_agents() - 0.05},
                 {"L_eps_non_decreasing", res.monitor.L_eps_non_decreasing()},
                 {"condition2_violations", res.monitor.condition2_violations()},
                 {"worst_accepted_delta", res.monitor.worst_accepted_delta()},
                 {"certificate", certificate_to_json(cert)}};
  return out;
}

CellOutput run_cell(const Context& ctx, const std::string& tag, std::uint64_t seed,
                    const std::vector<DemonstrationSet>& demos) {
  CellOutput out = ctx.cfg.algorithm == Algorithm::kTurnByTurn ? run_turn_based(ctx, seed)
                                                                 : run_sample_based(ctx, tag, seed, demos);
  std::ostringstream msg;
  msg << "[" << out.run_id << "] done";
  if (out.summary.contains("epochs_to_threshold")) msg << ", epochs_to_threshold " << out.summary["epochs_to_threshold"];
  msg << ", final_J " << out.summary["final_J"].get<double>();
  log(msg.str());
  return out;
}

void write_cell(const fs::path& dir, const Context& ctx, const CellOutput& c) {
  write_config(dir, ctx, c.seed);
  write_file(dir / "metrics.csv", c.metrics_csv);
  if (!c.turns_csv.empty()) write_file(dir / "turns.csv", c.turns_csv);
  write_file(dir / "summary.json", c.summary.dump(2) + "\n");
}

std::vector<std::string> summary_columns() {
  return {"run_id", "config_hash", "code_version", "seed", "algorithm", "demo_style", "epochs_to_threshold",
          "final_task_return", "final_J"};
}

std::vector<std::string> summary_row(const json& s) {
  auto num = [&](const char* k) { return s.contains(k) ? fmt(s.at(k).get<double>()) : std::string(); };
  std::string ett = s.contains("epochs_to_threshold") ? std::to_string(s.at("epochs_to_threshold").get<int>()) : "";
  return {s.at("run_id").get<std::string>(), s.at("config_hash").get<std::string>(),
          s.at("code_version").get<std::string>(), std::to_string(s.at("seed").get<std::uint64_t>()),
          s.at("algorithm").get<std::string>(), s.at("demo_style").get<std::string>(), ett,
          num("final_task_return"), num("final_J")};
}

// Epochs to threshold with never-reached runs censored at epochs + 1.
double censored_epochs(const json& s, int epochs) {
  const int e = s.at("epochs_to_threshold").get<int>();
  return e < 0 ? epochs + 1.0 : static_cast<double>(e);
}

std::string dir_name(const std::string& cmd, const Context& ctx) { return cmd + "-" + ctx.hash.substr(0, 8); }

}  // namespace

std::vector<std::string> dm2_metric_columns(int num_agents) {
  auto cols = prefix_columns();
  for (const char* c : {"algorithm", "demo_style", "mixing_c", "epoch", "env_steps", "task_return", "behavior_return",
                        "batch_env_reward", "eval_return", "J"}) {
    cols.emplace_back(c);
  }
  for (const char* m : {"gail_reward", "disc_loss", "w1", "tv"}) {
    for (int k = 0; k < num_agents; ++k) cols.push_back(std::string(m) + "_a" + std::to_string(k));
  }
  return cols;
}

std::vector<std::string> turn_metric_columns() {
  auto cols = prefix_columns();
  for (const char* c : {"algorithm", "round", "J", "J_behavior", "L", "L_eps", "epsilon", "min_rho", "task_return",
                        "changed"}) {
    cols.emplace_back(c);
  }
  return cols;
}

std::vector<std::string> turn_detail_columns() {
  auto cols = prefix_columns();
  for (const char* c : {"round", "agent", "value_before", "value_after", "gail_loss_before", "gail_loss_after",
                        "max_tv", "backtracks", "accepted", "converged", "condition2_violation"}) {
    cols.emplace_back(c);
  }
  return cols;
}

void set_quiet(bool quiet) { quiet_logs = quiet; }

fs::path output_root(const ExperimentConfig* config, const CommandOptions& options) {
  if (!options.out.empty()) return options.out;
  if (config && !config->output_dir.empty()) return config->output_dir;
  if (const char* env = std::getenv(kOutRootEnv); env && *env) return env;
  return "runs";
}

// ---------------------------------------------------------------------------

CommandResult cmd_train_experts(ExperimentConfig config, const CommandOptions& options) {
  Context ctx = make_context(std::move(config), options, true, true);
  const MarkovGame& g = *ctx.game;
  RunDir dir(output_root(&ctx.cfg, options), dir_name("experts", ctx));
  write_config(dir.path(), ctx);
  save_game(g, (dir.path() / "game.json").string());

  Csv csv({"config_hash", "code_version", "bundle_id", "provenance", "seeds", "achieved_return", "optimal_return",
           "quality_tag", "requested_quality", "checkpoint_iteration", "nash_epsilon", "nash_pass"});
  json certs = json::array();
  json summary = {{"config_hash", ctx.hash}, {"code_version", kCodeVersion}, {"bundles", json::array()}};
  for (const ExpertBundle* b : {ctx.co.get(), ctx.sep.get()}) {
    write_file(dir.path() / "experts" / (to_string(b->provenance) + ".json"), bundle_to_json(*b).dump(2) + "\n");
    const auto cert = certify_nash(g, b->joint_policy, RewardSpec::task(), kNashTolerance, b->id);
    certs.push_back(certificate_to_json(cert));
    std::string seeds;
    for (auto s : b->seeds) seeds += (seeds.empty() ? "" : ";") + std::to_string(s);
    csv.row({ctx.hash, kCodeVersion, b->id, to_string(b->provenance), seeds, fmt(b->achieved_return),
             fmt(b->optimal_return), fmt(b->quality_tag), fmt(b->requested_quality),
             std::to_string(b->checkpoint_iteration), fmt(cert.epsilon), fmt_bool(cert.pass)});
    summary["bundles"].push_back({{"id", b->id}, {"achieved_return", b->achieved_return}, {"nash_pass", cert.pass}});
    log("[experts] " + b->id + " return " + fmt(b->achieved_return) + " (optimal " + fmt(b->optimal_return) +
        "), R_T Nash " + (cert.pass ? "pass" : "fail"));
  }
  write_file(dir.path() / "experts.csv", csv.str());
  write_file(dir.path() / "certificates.json", certs.dump(2) + "\n");
  write_file(dir.path() / "summary.json", summary.dump(2) + "\n");
  return {dir.commit(), true, summary};
}

CommandResult cmd_sample_demos(ExperimentConfig config, const CommandOptions& options) {
  const bool sep = needs_sep(config.demos.styles);
  Context ctx = make_context(std::move(config), options, true, sep);
  const MarkovGame& g = *ctx.game;
  const auto& styles = ctx.cfg.demos.styles;
  RunDir dir(output_root(&ctx.cfg, options), dir_name("demos", ctx));
  write_config(dir.path(), ctx);

  const int n = static_cast<int>(styles.size());
  std::vector<std::vector<DemonstrationSet>> sets(n);
  parallel_for(n, options.jobs, [&](int i) { sets[i] = demos_for(ctx, DemoStyle::from_tag(styles[i])); });

  const auto metric = ground_metric(g);
  Csv csv({"config_hash", "code_version", "demo_style", "agent", "bundle_id", "episodes", "steps", "tv_to_exact",
           "w1_to_exact"});
  json summary = {{"config_hash", ctx.hash}, {"code_version", kCodeVersion}, {"styles", json::array()}};
  for (int i = 0; i < n; ++i) {
    const DemoStyle style = DemoStyle::from_tag(styles[i]);
    write_demonstrations(dir.path() / "demos" / styles[i], sets[i]);
    const auto rho = exact_state_visitation(g, bundle_for(ctx, style).joint_policy);
    for (const auto& s : sets[i]) {
      const auto freq = s.state_frequencies(g.num_states());
      csv.row({ctx.hash, kCodeVersion, styles[i], std::to_string(s.agent_id), s.bundle_id,
               std::to_string(s.n_episodes), std::to_string(s.num_steps()), fmt(tv_distance(freq, rho.values)),
               fmt(wasserstein1(freq, rho.values, metric))});
    }
    summary["styles"].push_back(styles[i]);
  }
  write_file(dir.path() / "demos.csv", csv.str());
  write_file(dir.path() / "summary.json", summary.dump(2) + "\n");
  return {dir.commit(), true, summary};
}

CommandResult cmd_run(ExperimentConfig config, const CommandOptions& options) {
  const bool imitation = config.algorithm == Algorithm::kDm2 || config.algorithm == Algorithm::kGailOnly;
  if (imitation && config.demos.styles.size() != 1) {
    throw ConfigError("run uses exactly one demos.styles entry; use ablate for the style matrix");
  }
  const std::string tag = imitation ? config.demos.styles.front() : "none";
  const bool sep = imitation && needs_sep(config.demos.styles);
  Context ctx = make_context(std::move(config), options, true, sep);
  std::vector<DemonstrationSet> demos;
  if (imitation) demos = demos_for(ctx, DemoStyle::from_tag(tag));
  const auto& seeds = ctx.cfg.seeds;
  const int n = static_cast<int>(seeds.size());
  std::vector<CellOutput> cells(n);
  parallel_for(n, options.jobs, [&](int i) { cells[i] = run_cell(ctx, tag, seeds[i], demos); });

  RunDir dir(output_root(&ctx.cfg, options), dir_name(to_string(ctx.cfg.algorithm), ctx));
  write_config(dir.path(), ctx);
  Csv csv(summary_columns());
  json summary = {{"config_hash", ctx.hash}, {"code_version", kCodeVersion}, {"runs", json::array()}};
  std::vector<double> ett;
  for (const auto& c : cells) {
    write_cell(dir.path() / ("s" + std::to_string(c.seed)), ctx, c);
    csv.row(summary_row(c.summary));
    summary["runs"].push_back(c.summary["run_id"]);
    if (c.summary.contains("epochs_to_threshold")) ett.push_back(censored_epochs(c.summary, ctx.cfg.training.epochs));
  }
  if (!ett.empty()) summary["median_epochs_to_threshold"] = median(ett);
  write_file(dir.path() / "summary.csv", csv.str());
  write_file(dir.path() / "summary.json", summary.dump(2) + "\n");
  return {dir.commit(), true, summary};
}

CommandResult cmd_ablate(ExperimentConfig config, const CommandOptions& options) {
  if (config.algorithm != Algorithm::kDm2 && config.algorithm != Algorithm::kGailOnly) {
    throw ConfigError("ablate needs an imitation algorithm (dm2 or gail_only)");
  }
  config.demos.styles.clear();
  for (const auto& s : DemoStyle::all()) config.demos.styles.push_back(s.tag());
  Context ctx = make_context(std::move(config), options, true, true);
  const auto& styles = ctx.cfg.demos.styles;
  const auto& seeds = ctx.cfg.seeds;
  const int S = static_cast<int>(seeds.size());
  const int n = static_cast<int>(styles.size()) * S;

  // Demonstrations are shared by every seed of a style; sample them once.
  std::map<std::string, std::vector<DemonstrationSet>> cache;
  for (const auto& tag : styles) cache[tag] = demos_for(ctx, DemoStyle::from_tag(tag));

  std::vector<CellOutput> cells(n);
  parallel_for(n, options.jobs,
               [&](int i) { cells[i] = run_cell(ctx, styles[i / S], seeds[i % S], cache.at(styles[i / S])); });

  RunDir dir(output_root(&ctx.cfg, options), dir_name("ablate", ctx));
  write_config(dir.path(), ctx);
  Csv all(summary_columns());
  Csv table({"config_hash", "code_version", "demo_style", "seeds", "reached", "median_epochs_to_threshold"});
  json summary = {{"config_hash", ctx.hash}, {"code_version", kCodeVersion}, {"styles", json::object()}};
  std::map<std::string, double> med;
  for (std::size_t si = 0; si < styles.size(); ++si) {
    const fs::path sub = dir.path() / styles[si];
    write_config(sub, ctx);
    write_demonstrations(sub / "demos", cache[styles[si]]);
    Csv csv(summary_columns());
    std::vector<double> ett;
    int reached = 0;
    for (int k = 0; k < S; ++k) {
      const CellOutput& c = cells[si * S + k];
      write_cell(sub / ("s" + std::to_string(c.seed)), ctx, c);
      csv.row(summary_row(c.summary));
      all.row(summary_row(c.summary));
      ett.push_back(censored_epochs(c.summary, ctx.cfg.training.epochs));
      reached += c.summary["epochs_to_threshold"].get<int>() >= 0;
    }
    write_file(sub / "summary.csv", csv.str());
    med[styles[si]] = median(ett);
    table.row({ctx.hash, kCodeVersion, styles[si], std::to_string(S), std::to_string(reached), fmt(med[styles[si]])});
    summary["styles"][styles[si]] = {{"median_epochs_to_threshold", med[styles[si]]}, {"reached", reached}};
  }
  const double co_worst = std::max(med["co_conc"], med["co_nonconc"]);
  const double sep_best = std::min(med["sep_conc"], med["sep_nonconc"]);
  const double rel = std::abs(med["co_conc"] - med["co_nonconc"]) / std::min(med["co_conc"], med["co_nonconc"]);
  summary["co_faster_than_sep"] = co_worst < sep_best;
  summary["co_conc_vs_nonconc_relative_gap"] = rel;
  summary["co_sampling_within_20pct"] = rel <= 0.2;
  write_file(dir.path() / "summary.csv", all.str());
  write_file(dir.path() / "ablation.csv", table.str());
  write_file(dir.path() / "summary.json", summary.dump(2) + "\n");
  log("[ablate] co_faster_than_sep " + std::string(co_worst < sep_best ? "yes" : "no") +
      ", co conc/nonconc gap " + fmt(rel));
  return {dir.commit(), true, summary};
}

// ---------------------------------------------------------------------------
// verify: the invariant suite on the configured environment.

namespace {

struct Check {
  std::string name;
  std::string status;  // pass | fail | skip
  double value = 0.0;
  std::string detail;
};

Check verdict(std::string name, bool ok, double value, std::string detail) {
  return {std::move(name), ok ? "pass" : "fail", value, std::move(detail)};
}

TabularPolicy random_policy(int agent, int S, int A, Rng& rng) {
  std::vector<double> p(static_cast<std::size_t>(S) * A);
  for (int s = 0; s < S; ++s) {
    double tot = 0.0;
    for (int a = 0; a < A; ++a) tot += p[s * A + a] = -std::log(1.0 - rng.uniform());
    for (int a = 0; a < A; ++a) p[s * A + a] /= tot;
  }
  return TabularPolicy(agent, S, A, std::move(p));
}

JointPolicy random_joint(const MarkovGame& g, Rng& rng) {
  std::vector<TabularPolicy> ps;
  for (int i = 0; i < g.num_agents(); ++i) ps.push_back(random_policy(i, g.num_states(), g.num_actions(i), rng));
  return JointPolicy(std::move(ps));
}

JointPolicy random_deterministic(const MarkovGame& g, Rng& rng) {
  std::vector<TabularPolicy> ps;
  for (int i = 0; i < g.num_agents(); ++i) {
    std::vector<ActionId> acts(g.num_states());
    for (auto& a : acts) a = rng.uniform_int(g.num_actions(i));
    ps.push_back(TabularPolicy::deterministic(i, g.num_actions(i), acts));
  }
  return JointPolicy(std::move(ps));
}

std::vector<double> random_distribution(int n, Rng& rng) {
  std::vector<double> p(n);
  double tot = 0.0;
  for (auto& x : p) tot += x = -std::log(1.0 - rng.uniform());
  for (auto& x : p) x /= tot;
  return p;
}

double truncated_sum_gap(const MarkovGame& g, const JointPolicy& pi) {
  const auto exact = exact_state_visitation(g, pi);
  const Eigen::MatrixXd M = state_transition_matrix(g, pi);
  Eigen::VectorXd p(g.num_states());
  for (int s = 0; s < g.num_states(); ++s) p(s) = g.start()[s];
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(g.num_states());
  double w = 1.0 - g.gamma();
  for (int t = 0; w > 1e-16; ++t) {
    acc += w * p;
    p = M.transpose() * p;
    w *= g.gamma();
  }
  double gap = 0.0;
  for (int s = 0; s < g.num_states(); ++s) gap = std::max(gap, std::abs(acc(s) - exact.values[s]));
  return gap;
}

}  // namespace

CommandResult cmd_verify(ExperimentConfig config, const CommandOptions& options) {
  Context ctx = make_context(std::move(config), options, true, true);
  const MarkovGame& g = *ctx.game;
  const int K = g.num_agents();
  const int S = g.num_states();
  std::vector<Check> checks;
  json certs = json::array();
  Rng rng = Rng(ctx.cfg.seeds.front()).fork(77);

  // Environment and expert prerequisites.
  checks.push_back(verdict("game_valid", true, S, "states; transition rows and start distribution validated"));
  const auto task_cert = certify_nash(g, ctx.co->joint_policy, RewardSpec::task(), kNashTolerance, ctx.co->id);
  certs.push_back(certificate_to_json(task_cert));
  checks.push_back(verdict("cotrained_expert_nash_task", task_cert.pass, task_cert.epsilon, "max best-response gain"));
  {
    std::vector<TabularPolicy> u;
    for (int i = 0; i < K; ++i) u.push_back(TabularPolicy::uniform(i, S, g.num_actions(i)));
    const auto c = certify_nash(g, JointPolicy(u), RewardSpec::task(), kNashTolerance, "uniform");
    certs.push_back(certificate_to_json(c));
    checks.push_back(verdict("uniform_policy_not_nash", c.epsilon > 0.01, c.epsilon, "expected max gain > 0.01"));
  }
  checks.push_back(verdict("separate_return_le_cotrained", ctx.sep->achieved_return <= ctx.co->achieved_return + 1e-9,
                           ctx.sep->achieved_return, "assembled separately trained team return"));

  // Theorem 2 sweep.
  try {
    const auto t2 = theorem2_sweep(g, *ctx.co, ctx.cfg.alphas, ctx.cfg.betas);
    int passed = 0;
    for (const auto& c : t2.imitation) {
      certs.push_back(certificate_to_json(c));
      checks.push_back(verdict("nash_" + c.reward, c.pass, c.epsilon, "imitation reward alone"));
    }
    for (const auto& c : t2.mixed) {
      certs.push_back(certificate_to_json(c));
      passed += c.pass;
    }
    checks.push_back(verdict("theorem2_mixed_sweep", passed == static_cast<int>(t2.mixed.size()), passed,
                             std::to_string(passed) + "/" + std::to_string(t2.mixed.size()) + " mixtures pass"));
  } catch (const PreconditionError& e) {
    checks.push_back({"theorem2_mixed_sweep", "skip", 0.0, std::string("hypothesis not met: ") + e.what()});
  }

  // Exact visitation against the truncated geometric sum.
  {
    double gap = std::max(truncated_sum_gap(g, ctx.co->joint_policy), truncated_sum_gap(g, random_joint(g, rng)));
    checks.push_back(verdict("visitation_vs_truncated_sum", gap <= 1e-9, gap, "max |rho_exact - rho_truncated|"));
  }

  // Bound chain with Assumption-1 rewards on random (policy, expert) pairs.
  {
    int violations = 0;
    int strict_failures = 0;
    const int n = ctx.cfg.evaluation.bound_chain_samples;
    std::string first;
    for (int k = 0; k < n; ++k) {
      const JointPolicy expert = random_deterministic(g, rng);
      const JointPolicy pi = random_joint(g, rng);
      const double c = 0.5 + 1.5 * rng.uniform();
      const auto models = assumption1_models(expert, c);
      const auto r = evaluate_objectives(g, pi, expert, models, 0.0);
      const auto v = bound_chain_violations(r, S, K);
      violations += !v.empty();
      if (!v.empty() && first.empty()) first = v.front();
      const auto rho = exact_state_visitation(g, pi);
      const double max_rho = *std::max_element(rho.values.begin(), rho.values.end());
      if (max_rho > r.epsilon && !(r.L_eps < r.L)) ++strict_failures;
    }
    checks.push_back(verdict("bound_chain", violations == 0 && strict_failures == 0, violations + strict_failures,
                             std::to_string(n) + " random pairs" + (first.empty() ? "" : "; " + first)));
  }

  // Exploration floor under iota mixing.
  {
    const double iota = ctx.cfg.training.learner.iota;
    bool ok = true;
    double worst = 1.0;
    if (iota > 0.0) {
      const double floor = exploration_floor(g, iota);
      for (int k = 0; k < 20; ++k) {
        const JointPolicy base = random_deterministic(g, rng);
        std::vector<TabularPolicy> mixed;
        for (int i = 0; i < K; ++i) {
          const int A = g.num_actions(i);
          std::vector<double> p(base.agent(i).probs());
          for (auto& x : p) x = (1.0 - iota) * x + iota / A;
          mixed.emplace_back(i, S, A, std::move(p));
        }
        const auto rho = exact_state_visitation(g, JointPolicy(mixed));
        const double m = *std::min_element(rho.values.begin(), rho.values.end());
        worst = std::min(worst, m - floor);
        ok = ok && m >= floor - 1e-12;
      }
      checks.push_back(verdict("exploration_floor", ok && floor > 0.0, floor, "eps_iota; min_rho - eps_iota >= 0"));
    } else {
      checks.push_back({"exploration_floor", "skip", 0.0, "iota = 0"});
    }
  }

  // W1 metric axioms.
  {
    const auto metric = ground_metric(g);
    double worst = 0.0;
    bool identity = true;
    for (int k = 0; k < 10; ++k) {
      const auto a = random_distribution(S, rng), b = random_distribution(S, rng), c = random_distribution(S, rng);
      const double ab = wasserstein1(a, b, metric), ba = wasserstein1(b, a, metric);
      const double ac = wasserstein1(a, c, metric), bc = wasserstein1(b, c, metric);
      worst = std::max({worst, std::abs(ab - ba), ac - ab - bc});
      identity = identity && std::abs(wasserstein1(a, a, metric)) <= 1e-12 && ab > 0.0;
    }
    checks.push_back(verdict("w1_metric_axioms", identity && worst <= 1e-9, worst, "symmetry and triangle slack"));
  }

  // Compatibility (Definition 1).
  {
    std::vector<VisitationDistribution> targets;
    for (int i = 0; i < K; ++i) targets.push_back(marginal_visitation(g, i, ctx.co->joint_policy));
    try {
      const auto r = check_compatibility(g, targets);
      checks.push_back(verdict("cotrained_marginals_compatible", r.compatible, r.witness_error,
                               "witness error; " + std::to_string(r.pivots) + " pivots"));
    } catch (const UnsupportedInputError& e) {
      checks.push_back({"cotrained_marginals_compatible", "skip", 0.0, e.what()});
    }
    const auto bad = conflicting_demo_scenario();
    const auto rb = check_compatibility(bad.game, bad.targets);
    checks.push_back(verdict("conflicting_targets_incompatible", !rb.compatible && !rb.lp_feasible, rb.infeasibility,
                             "phase-one infeasibility"));
    const auto good = compatible_demo_scenario();
    const auto rg = check_compatibility(good.game, good.targets);
    checks.push_back(verdict("swapped_targets_compatible", rg.compatible, rg.witness_error, "witness error"));
  }

  RunDir dir(output_root(&ctx.cfg, options), dir_name("verify", ctx));
  write_config(dir.path(), ctx);
  Csv csv({"config_hash", "code_version", "check", "status", "value", "detail"});
  bool ok = true;
  for (const auto& c : checks) {
    std::string detail = c.detail;
    std::replace(detail.begin(), detail.end(), ',', ';');
    std::replace(detail.begin(), detail.end(), '\n', ' ');
    csv.row({ctx.hash, kCodeVersion, c.name, c.status, fmt(c.value), detail});
    ok = ok && c.status != "fail";
    log("[verify] " + c.name + ": " + c.status + " (" + fmt(c.value) + ")");
  }
  write_file(dir.path() / "invariants.csv", csv.str());
  write_file(dir.path() / "certificates.json", certs.dump(2) + "\n");
  json summary = {{"config_hash", ctx.hash}, {"code_version", kCodeVersion}, {"all_pass", ok}, {"checks", checks.size()}};
  write_file(dir.path() / "summary.json", summary.dump(2) + "\n");
  return {dir.commit(), ok, summary};
}

// ---------------------------------------------------------------------------

CommandResult cmd_report(const CommandOptions& options) {
  if (options.inputs.empty()) throw ConfigError("report needs at least one run directory");
  std::vector<json> runs;
  std::vector<std::pair<std::string, std::string>> invariants;  // (source, csv body)
  std::string fingerprint;
  for (const auto& in : options.inputs) {
    if (!fs::is_directory(in)) throw ConfigError("not a directory: " + in.string());
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(in)) {
      if (e.is_regular_file()) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      if (f.filename() == "summary.json") {
        json j = json::parse(read_file(f));
        if (j.contains("run_id")) runs.push_back(std::move(j));
      } else if (f.filename() == "invariants.csv") {
        invariants.emplace_back(fs::relative(f, in).string(), read_file(f));
      }
    }
    fingerprint += fs::weakly_canonical(in).string() + "\n";
  }
  std::sort(runs.begin(), runs.end(),
            [](const json& a, const json& b) { return a["run_id"].get<std::string>() < b["run_id"].get<std::string>(); });

  Csv per_run(summary_columns());
  std::map<std::tuple<std::string, std::string, std::string>, std::vector<const json*>> groups;
  for (const auto& r : runs) {
    per_run.row(summary_row(r));
    groups[{r["config_hash"], r["algorithm"], r["demo_style"]}].push_back(&r);
  }
  Csv agg({"config_hash", "code_version", "algorithm", "demo_style", "runs", "reached", "median_epochs_to_threshold",
           "mean_final_task_return", "mean_final_J"});
  json summary = {{"code_version", kCodeVersion}, {"runs", runs.size()}, {"groups", json::array()}};
  for (const auto& [key, members] : groups) {
    std::vector<double> ett;
    double ret = 0.0, J = 0.0;
    int reached = 0;
    for (const json* m : members) {
      if (m->contains("epochs_to_threshold")) {
        const int e = (*m)["epochs_to_threshold"].get<int>();
        reached += e >= 0;
        ett.push_back(e >= 0 ? e : (*m)["epochs_run"].get<int>() + 1.0);
      }
      ret += (*m)["final_task_return"].get<double>();
      J += (*m)["final_J"].get<double>();
    }
    const double n = static_cast<double>(members.size());
    agg.row({std::get<0>(key), kCodeVersion, std::get<1>(key), std::get<2>(key), std::to_string(members.size()),
             ett.empty() ? "" : std::to_string(reached), ett.empty() ? "" : fmt(median(ett)), fmt(ret / n),
             fmt(J / n)});
    summary["groups"].push_back({{"config_hash", std::get<0>(key)},
                                 {"algorithm", std::get<1>(key)},
                                 {"demo_style", std::get<2>(key)},
                                 {"runs", members.size()},
                                 {"median_epochs_to_threshold", ett.empty() ? json() : json(median(ett))}});
  }
  int failed = 0;
  for (const auto& [src, body] : invariants) {
    std::istringstream is(body);
    std::string line;
    std::getline(is, line);
    while (std::getline(is, line)) failed += line.find(",fail,") != std::string::npos;
  }
  summary["invariant_files"] = invariants.size();
  summary["invariant_failures"] = failed;

  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(fnv1a64(fingerprint)));
  RunDir dir(output_root(nullptr, options), "report-" + std::string(hex).substr(0, 8));
  write_file(dir.path() / "report_runs.csv", per_run.str());
  write_file(dir.path() / "report.csv", agg.str());
  write_file(dir.path() / "report.json", summary.dump(2) + "\n");
  return {dir.commit(), failed == 0, summary};
}

}  // namespace dm2::harness
