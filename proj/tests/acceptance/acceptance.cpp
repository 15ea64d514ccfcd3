// Acceptance suite: one PASS/FAIL line per criterion.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "../support.hpp"
#include "dm2/demos.hpp"
#include "dm2/discriminator.hpp"
#include "dm2/environments.hpp"
#include "dm2/equilibrium.hpp"
#include "dm2/errors.hpp"
#include "dm2/experts.hpp"
#include "dm2/harness.hpp"
#include "dm2/learner.hpp"
#include "dm2/mdp.hpp"
#include "dm2/objectives.hpp"

using namespace dm2;
using namespace dm2::test;
namespace fs = std::filesystem;
namespace hn = dm2::harness;
using nlohmann::json;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Env {
  fs::path configs;
  fs::path out;
  int jobs = 1;
};

std::string num(double x, int prec = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", prec, x);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw InputError("cannot read " + p.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

// Minimal CSV reader for the harness's own output (no quoted commas in the
// columns read here).
std::vector<std::map<std::string, std::string>> read_csv(const fs::path& p) {
  std::istringstream in(slurp(p));
  std::string line;
  std::vector<std::string> header;
  std::vector<std::map<std::string, std::string>> rows;
  auto split = [](const std::string& l) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ls(l);
    while (std::getline(ls, cell, ',')) out.push_back(cell);
    if (!l.empty() && l.back() == ',') out.emplace_back();
    return out;
  };
  if (std::getline(in, line)) header = split(line);
  while (std::getline(in, line)) {
    auto cells = split(line);
    std::map<std::string, std::string> row;
    for (std::size_t k = 0; k < header.size() && k < cells.size(); ++k) row[header[k]] = cells[k];
    rows.push_back(std::move(row));
  }
  return rows;
}

hn::CommandOptions opts(const Env& env, const std::string& sub, int jobs) {
  hn::CommandOptions o;
  o.out = (env.out / sub).string();
  o.jobs = jobs;
  return o;
}

std::vector<RewardModel> a1(const JointPolicy& expert, double c) {
  std::vector<RewardModel> r;
  for (int i = 0; i < expert.num_agents(); ++i) r.push_back(RewardModel::assumption1(expert.agent(i), c));
  return r;
}

// ---------------------------------------------------------------------------

Outcome bound_chain(const Env&) {
  Rng rng(20240101);
  int triples = 0, violations = 0, strict = 0;
  std::string first;
  while (triples < 1000) {
    const int K = 1 + rng.uniform_int(3);
    std::vector<int> acts;
    for (int i = 0; i < K; ++i) acts.push_back(1 + rng.uniform_int(3));
    const int S = 1 + rng.uniform_int(8);
    auto g = random_game(rng, S, acts, 0.95 * rng.uniform(), 1 + rng.uniform_int(3));
    auto expert = random_deterministic(g, rng);
    // Mix in deterministic and near-expert policies as well as random ones.
    JointPolicy pi;
    switch (triples % 3) {
      case 0: pi = random_joint(g, rng); break;
      case 1: pi = random_deterministic(g, rng); break;
      default: {
        std::vector<TabularPolicy> ps;
        for (int i = 0; i < K; ++i) {
          const int A = g.num_actions(i);
          const double w = rng.uniform();
          auto r = random_policy(i, S, A, rng);
          std::vector<double> p(S * A);
          for (int s = 0; s < S; ++s) {
            for (int a = 0; a < A; ++a) p[s * A + a] = w * expert.agent(i).prob(s, a) + (1 - w) * r.prob(s, a);
          }
          ps.emplace_back(i, S, A, p);
        }
        pi = JointPolicy(ps);
      }
    }
    const auto rewards = a1(expert, 0.1 + 3 * rng.uniform());
    for (double scale : {1.0, 0.5}) {
      auto rep = evaluate_objectives(g, pi, expert, rewards, 0.0);
      if (scale != 1.0) rep = evaluate_objectives(g, pi, expert, rewards, scale * rep.min_rho);
      const auto v = bound_chain_violations(rep, S, K, 1e-9);
      strict += rep.L_eps < rep.L;
      if (!v.empty()) {
        ++violations;
        if (first.empty()) first = v.front();
      }
    }
    ++triples;
  }
  return {violations == 0, std::to_string(triples) + " triples x 2 eps, " + std::to_string(violations) +
                               " violations, L_eps < L strictly in " + std::to_string(strict) + "/" +
                               std::to_string(2 * triples) + (first.empty() ? "" : " (" + first + ")")};
}

Outcome unique_maximizer(const Env&) {
  Rng rng(7);
  const std::vector<std::pair<int, std::vector<int>>> shapes{
      {1, {3, 3}}, {2, {2, 2}}, {3, {2, 2}}, {2, {3, 2}}, {2, {3, 3}}, {2, {2, 2, 2}}, {3, {2, 1, 2}}, {1, {2, 2, 2, 2}}};
  int fixtures = 0, policies = 0, bad = 0;
  for (const auto& [S, acts] : shapes) {
    for (int rep = 0; rep < 10; ++rep) {
      auto g = random_game(rng, S, acts, 0.5 + 0.45 * rng.uniform());
      auto e = random_deterministic(g, rng);
      const auto r = a1(e, 1.0);
      const double K = g.num_agents();
      const double eps = exploration_floor(g, 1.0);
      const double Le_star = eps * S * K;
      int count = 0, maxJ = 0, maxLe = 0;
      for_each_deterministic(g, [&](const JointPolicy& pi) {
        ++count;
        const double J = joint_action_matching(g, pi, e);
        const double Le = lower_bound_L_eps(g, pi, r, eps);
        const bool is_e = pi == e;
        if (std::abs(J - K) <= 1e-12) ++maxJ;
        if (std::abs(Le - Le_star) <= 1e-12) ++maxLe;
        if (is_e != (J > K - 1e-9) || is_e != (Le > Le_star - 1e-12)) ++bad;
      });
      if (count > 200 || maxJ != 1 || maxLe != 1) ++bad;
      ++fixtures;
      policies += count;
    }
  }
  return {bad == 0, std::to_string(fixtures) + " fixtures, " + std::to_string(policies) +
                        " deterministic joint policies enumerated, " + std::to_string(bad) + " violations"};
}

struct TurnRuns {
  int seeds = 0;
  int reached = 0;
  int monotone = 0;
  int accepted_turns = 0;
  double worst_delta = std::numeric_limits<double>::infinity();
  std::vector<double> final_J;
};

TurnRuns run_turns(const Env& env, const hn::ExperimentConfig& cfg, const std::string& sub) {
  auto res = hn::cmd_run(cfg, opts(env, sub, env.jobs));
  TurnRuns t;
  for (auto seed : cfg.seeds) {
    const fs::path dir = res.run_dir / ("s" + std::to_string(seed));
    const auto s = read_json(dir / "summary.json");
    ++t.seeds;
    t.reached += s.at("reached_target").get<bool>();
    t.monotone += s.at("L_eps_non_decreasing").get<bool>();
    t.final_J.push_back(s.at("final_J").get<double>());
    for (const auto& row : read_csv(dir / "turns.csv")) {
      if (row.at("accepted") != "1") continue;
      ++t.accepted_turns;
      t.worst_delta = std::min(t.worst_delta, std::stod(row.at("value_after")) - std::stod(row.at("value_before")));
    }
  }
  return t;
}

TurnRuns& criterion3_runs(const Env& env) {
  static TurnRuns runs = run_turns(env, hn::load_config(env.configs / "grid_meet_turn_by_turn.json"), "c3");
  return runs;
}

Outcome turn_by_turn(const Env& env) {
  const auto& t = criterion3_runs(env);
  double minJ = 1e300;
  for (double j : t.final_J) minJ = std::min(minJ, j);
  return {t.seeds == 5 && t.reached == 5 && t.monotone == 5,
          std::to_string(t.reached) + "/" + std::to_string(t.seeds) + " seeds reach J >= K-0.05 (min final J " +
              num(minJ, 8) + "), L_eps non-decreasing in " + std::to_string(t.monotone) + "/" +
              std::to_string(t.seeds)};
}

Outcome improvement_lemma(const Env& env) {
  const auto& a = criterion3_runs(env);
  auto cfg = hn::load_config(env.configs / "grid_meet_turn_by_turn.json");
  cfg.training.turn_reward = TurnReward::kClosedForm;
  const auto b = run_turns(env, cfg, "c4");
  const double worst = std::min(a.worst_delta, b.worst_delta);
  const int turns = a.accepted_turns + b.accepted_turns;
  return {turns > 0 && worst >= -1e-9,
          std::to_string(turns) + " accepted turns (assumption1 " + std::to_string(a.accepted_turns) +
              ", closed_form " + std::to_string(b.accepted_turns) + "), worst dV " + num(worst, 3)};
}

Outcome theorem2(const Env& env) {
  bool ok = true;
  std::string detail;
  for (const char* name : {"verify_grid_meet.json", "verify_corridor_switch.json"}) {
    auto cfg = hn::load_config(env.configs / name);
    auto g = make_env(cfg.env);
    auto e = cotrain_experts(g, 1.0, cfg.expert.seed);
    auto res = theorem2_sweep(g, e, cfg.alphas, cfg.betas);
    int passed = res.task.pass;
    for (const auto& c : res.imitation) passed += c.pass;
    for (const auto& c : res.mixed) passed += c.pass;
    const int total = 1 + static_cast<int>(res.imitation.size() + res.mixed.size());
    double worst = res.task.epsilon;
    for (const auto& c : res.mixed) worst = std::max(worst, c.epsilon);
    ok = ok && res.all_pass() && res.mixed.size() == 9;
    detail += std::string(detail.empty() ? "" : "; ") + to_string(cfg.env.name) + " " + std::to_string(passed) + "/" +
              std::to_string(total) + " certificates (max eps " + num(worst, 3) + ")";
  }
  return {ok, detail};
}

Outcome compatibility(const Env&) {
  bool ok = true;
  std::string detail;
  for (auto spec : {EnvSpec::grid_meet(3, 3), EnvSpec::four_tile()}) {
    auto g = make_env(spec);
    auto e = cotrain_experts(g, 1.0, 0);
    std::vector<VisitationDistribution> targets;
    for (int i = 0; i < g.num_agents(); ++i) targets.push_back(marginal_visitation(g, i, e.joint_policy));
    auto r = check_compatibility(g, targets);
    // The concurrent demonstrations estimate exactly these marginals.
    Rng rng(5);
    auto demos = sample_demonstrations(g, e, DemoStyle::from_tag("co_conc"), 20000, 1000, rng, true);
    double demo_tv = 0;
    for (int i = 0; i < g.num_agents(); ++i) {
      demo_tv = std::max(demo_tv, tv(demos[i].state_action_frequencies(g.num_states(), g.num_actions(i)),
                                     targets[i].values));
    }
    ok = ok && r.compatible && r.witness_error <= 1e-6 && demo_tv <= 0.02;
    detail += to_string(spec.name) + " co_conc compatible=" + (r.compatible ? "yes" : "no") + " (witness err " +
              num(r.witness_error, 3) + ", demo TV " + num(demo_tv, 3) + "); ";
  }
  auto bad = conflicting_demo_scenario();
  auto rb = check_compatibility(bad.game, bad.targets);
  auto good = compatible_demo_scenario();
  auto rg = check_compatibility(good.game, good.targets);
  ok = ok && !rb.compatible && rg.compatible && rg.witness_error <= 1e-6;
  detail += "conflicting four-tile incompatible=" + std::string(rb.compatible ? "no" : "yes") + " (violation " +
            num(rb.infeasibility, 3) + ")";
  return {ok, detail};
}

double median_of(const Env& env, const std::string& config, const std::string& sub) {
  auto res = hn::cmd_run(hn::load_config(env.configs / config), opts(env, sub, env.jobs));
  return res.summary.at("median_epochs_to_threshold").get<double>();
}

Outcome acceleration(const Env& env) {
  const double base = median_of(env, "grid_meet_baseline.json", "c7");
  const double c03 = median_of(env, "grid_meet_dm2.json", "c7");
  const double c005 = median_of(env, "grid_meet_dm2_c005.json", "c7");
  return {c03 < base && c005 < base, "median epochs to threshold: c=0.3 " + num(c03) + ", c=0.05 " + num(c005) +
                                         ", c=0 " + num(base) + " (5 paired seeds)"};
}

Outcome ablation(const Env& env) {
  auto res = hn::cmd_ablate(hn::load_config(env.configs / "grid_meet_ablate.json"), opts(env, "c8", env.jobs));
  const auto& s = res.summary;
  auto med = [&](const char* tag) { return s.at("styles").at(tag).at("median_epochs_to_threshold").get<double>(); };
  const bool faster = s.at("co_faster_than_sep").get<bool>();
  const bool within = s.at("co_sampling_within_20pct").get<bool>();
  return {faster && within, "medians co_conc " + num(med("co_conc")) + ", co_nonconc " + num(med("co_nonconc")) +
                                ", sep_conc " + num(med("sep_conc")) + ", sep_nonconc " + num(med("sep_nonconc")) +
                                "; co conc/nonconc gap " +
                                num(100 * s.at("co_conc_vs_nonconc_relative_gap").get<double>(), 3) + "%"};
}

Outcome oracles(const Env&) {
  Rng rng(99);
  // Visitation vs truncated sum.
  double trunc_err = 0;
  for (int k = 0; k < 50; ++k) {
    auto g = random_game(rng, 1 + rng.uniform_int(10), {1 + rng.uniform_int(3), 1 + rng.uniform_int(3)},
                         0.95 * rng.uniform());
    auto pi = random_joint(g, rng);
    const auto rho = exact_state_visitation(g, pi).values;
    const int S = g.num_states();
    Eigen::MatrixXd M = state_transition_matrix(g, pi);
    Eigen::VectorXd p(S), acc = Eigen::VectorXd::Zero(S);
    for (int s = 0; s < S; ++s) p(s) = g.start()[s];
    double w = 1 - g.gamma();
    for (int t = 0; t < 3000 && w > 1e-20; ++t, w *= g.gamma()) {
      acc += w * p;
      p = M.transpose() * p;
    }
    for (int s = 0; s < S; ++s) trunc_err = std::max(trunc_err, std::abs(acc(s) - rho[s]));
  }
  // Monte-Carlo at 1e6 samples.
  double mc_tv = 0;
  for (int k = 0; k < 3; ++k) {
    auto g = random_game(rng, 10, {2, 3}, 0.9);
    auto pi = random_joint(g, rng);
    Rng mc(1000 + k);
    mc_tv = std::max(mc_tv, tv(empirical_joint_visitation(g, pi, 1'000'000, mc).values,
                               joint_state_action_visitation(g, pi).values));
  }
  // Policy gradient vs central differences.
  double pg_rel = 0;
  for (int k = 0; k < 10; ++k) {
    auto g = random_game(rng, 3, {3, 2}, 0.85);
    auto mdp = induce_agent_mdp(g, 0, random_joint(g, rng), g.rewards());
    std::vector<double> theta(9);
    for (auto& x : theta) x = rng.normal();
    const auto grad = exact_policy_gradient(mdp, theta, 0.05);
    double gmax = 1e-12;
    for (double x : grad) gmax = std::max(gmax, std::abs(x));
    for (std::size_t j = 0; j < theta.size(); ++j) {
      auto p = theta, m = theta;
      p[j] += 1e-5;
      m[j] -= 1e-5;
      const double fd = (exact_policy_value(mdp, p, 0.05) - exact_policy_value(mdp, m, 0.05)) / 2e-5;
      pg_rel = std::max(pg_rel, std::abs(fd - grad[j]) / gmax);
    }
  }
  // Trained vs closed-form discriminator.
  double disc_err = 0;
  for (int k = 0; k < 5; ++k) {
    const int n = 15;
    std::vector<int> eb, ab;
    for (int j = 0; j < 5000; ++j) {
      eb.push_back(std::min(n - 1, static_cast<int>(n * rng.uniform() * rng.uniform() * 1.5)));
      ab.push_back(rng.uniform_int(n));
    }
    std::vector<double> fe(n), fa(n);
    for (int x : eb) fe[x] += 1.0 / eb.size();
    for (int x : ab) fa[x] += 1.0 / ab.size();
    auto closed = optimal_discriminator(fe, fa, 0, DiscMode::kStateOnly, n);
    auto d = train_discriminator(DiscriminatorTable::neutral(0, DiscMode::kStateOnly, n, 1), eb, ab, 400);
    for (int s = 0; s < n; ++s) {
      if (fe[s] + fa[s] > 0) disc_err = std::max(disc_err, std::abs(d.value(s) - closed.value(s)));
    }
  }
  // W1 vs exhaustive transport.
  double w1_err = 0;
  for (int k = 0; k < 100; ++k) {
    const int n = 2 + k % 2;
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) d(i, j) = d(j, i) = 3 * rng.uniform();
    }
    std::vector<double> mu(n), nu(n);
    double tm = 0, tn = 0;
    for (int i = 0; i < n; ++i) {
      tm += mu[i] = rng.uniform();
      tn += nu[i] = rng.uniform();
    }
    for (int i = 0; i < n; ++i) {
      mu[i] /= tm;
      nu[i] /= tn;
    }
    w1_err = std::max(w1_err, std::abs(wasserstein1(mu, nu, d) - w1_vertex_oracle(mu, nu, d)));
  }
  const bool ok = trunc_err <= 1e-9 && mc_tv <= 0.01 && pg_rel <= 1e-5 && disc_err <= 0.02 && w1_err <= 1e-9;
  return {ok, "truncated-sum err " + num(trunc_err, 3) + ", MC TV " + num(mc_tv, 3) + ", PG vs FD rel " +
                  num(pg_rel, 3) + ", disc sup err " + num(disc_err, 3) + ", W1 vs oracle " + num(w1_err, 3)};
}

// Every file a command writes, relative path -> bytes (CSV and JSONL only).
std::map<std::string, std::string> tabular_outputs(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    const auto ext = e.path().extension();
    if (e.is_regular_file() && (ext == ".csv" || ext == ".jsonl")) {
      out[fs::relative(e.path(), dir).string()] = slurp(e.path());
    }
  }
  return out;
}

Outcome determinism(const Env& env) {
  auto small = hn::load_config(env.configs / "grid_meet_dm2.json");
  small.seeds = {0, 1, 2};
  small.training.epochs = 40;
  small.training.stop_at_threshold = false;
  small.demos.episodes = 200;
  auto turn = hn::load_config(env.configs / "grid_meet_turn_by_turn.json");
  turn.seeds = {0, 1};
  turn.training.max_rounds = 60;
  auto verify = hn::load_config(env.configs / "verify_grid_meet.json");
  auto ablate = small;
  ablate.seeds = {0, 1};
  ablate.demos.styles.clear();

  using Cmd = std::function<hn::CommandResult(const hn::CommandOptions&)>;
  const std::vector<std::pair<std::string, Cmd>> cmds{
      {"train-experts", [&](const hn::CommandOptions& o) { return hn::cmd_train_experts(small, o); }},
      {"sample-demos", [&](const hn::CommandOptions& o) { return hn::cmd_sample_demos(small, o); }},
      {"run dm2", [&](const hn::CommandOptions& o) { return hn::cmd_run(small, o); }},
      {"run turn_by_turn", [&](const hn::CommandOptions& o) { return hn::cmd_run(turn, o); }},
      {"ablate", [&](const hn::CommandOptions& o) { return hn::cmd_ablate(ablate, o); }},
      {"verify", [&](const hn::CommandOptions& o) { return hn::cmd_verify(verify, o); }},
  };
  int files = 0;
  std::vector<std::string> diffs;
  std::vector<fs::path> run_dirs;
  for (std::size_t k = 0; k < cmds.size(); ++k) {
    // Second execution uses a different job count: parallelism must not leak
    // into the results.
    auto a = cmds[k].second(opts(env, "c10a", 1));
    auto b = cmds[k].second(opts(env, "c10b", std::max(2, env.jobs)));
    const auto fa = tabular_outputs(a.run_dir), fb = tabular_outputs(b.run_dir);
    files += static_cast<int>(fa.size());
    if (fa.empty() || fa != fb) diffs.push_back(cmds[k].first);
    run_dirs.push_back(a.run_dir);
    run_dirs.push_back(b.run_dir);
  }
  // report over identical inputs.
  hn::CommandOptions ra = opts(env, "c10a", 1), rb = opts(env, "c10b", 1);
  for (std::size_t k = 0; k < run_dirs.size(); k += 2) {
    ra.inputs.push_back(run_dirs[k]);
    rb.inputs.push_back(run_dirs[k]);
  }
  const auto fa = tabular_outputs(hn::cmd_report(ra).run_dir), fb = tabular_outputs(hn::cmd_report(rb).run_dir);
  files += static_cast<int>(fa.size());
  if (fa.empty() || fa != fb) diffs.push_back("report");
  std::string detail = std::to_string(cmds.size() + 1) + " commands run twice, " + std::to_string(files) +
                       " CSV/JSONL files compared";
  if (!diffs.empty()) {
    detail += "; differing:";
    for (const auto& d : diffs) detail += " " + d;
  }
  return {diffs.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dm2 acceptance suite"};
  Env env;
  std::string configs = "configs";
  std::string out;
  std::vector<int> only;
  bool keep = false;
  env.jobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  app.add_option("--configs", configs, "directory holding the experiment configs")->check(CLI::ExistingDirectory);
  app.add_option("--out", out, "scratch directory for command outputs (default: a fresh temp dir)");
  app.add_option("--jobs", env.jobs, "worker threads for multi-seed commands")->check(CLI::PositiveNumber);
  app.add_option("--only", only, "run only these criteria (1-10)");
  app.add_flag("--keep", keep, "keep the scratch directory");
  CLI11_PARSE(app, argc, argv);
  env.configs = configs;
  env.out = out.empty() ? fs::temp_directory_path() /
                              ("dm2_acceptance_" + std::to_string(std::chrono::steady_clock::now().time_since_epoch().count()))
                        : fs::path(out);
  fs::create_directories(env.out);
  hn::set_quiet(true);

  const std::vector<std::pair<std::string, std::function<Outcome(const Env&)>>> criteria{
      {"bound_chain", bound_chain},
      {"unique_maximizer", unique_maximizer},
      {"turn_by_turn_convergence", turn_by_turn},
      {"per_turn_improvement", improvement_lemma},
      {"theorem2_sweep", theorem2},
      {"compatibility", compatibility},
      {"dm2_acceleration", acceleration},
      {"ablation_co_vs_sep", ablation},
      {"numerical_oracles", oracles},
      {"determinism", determinism},
  };
  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const int id = static_cast<int>(k) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[k].second(env);
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failed += !o.pass;
    std::printf("%s %2d %-26s %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", id, criteria[k].first.c_str(),
                o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  if (!keep && out.empty()) fs::remove_all(env.out);
  return failed == 0 ? 0 : 1;
}
