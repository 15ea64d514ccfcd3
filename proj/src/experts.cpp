#include "dm2/experts.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "dm2/errors.hpp"
#include "dm2/mdp.hpp"

namespace dm2 {

namespace {

std::vector<double> joint_q(const MarkovGame& game, std::span<const double> values) {
  const int S = game.num_states();
  const int JA = game.num_joint_actions();
  std::vector<double> q(static_cast<std::size_t>(S) * JA);
  for (StateId s = 0; s < S; ++s) {
    for (JointActionId a = 0; a < JA; ++a) {
      double cont = 0.0;
      for (const auto& [next, p] : game.transitions(s, a)) cont += p * values[next];
      q[static_cast<std::size_t>(s) * JA + a] = game.reward(s, a) + game.gamma() * cont;
    }
  }
  return q;
}

std::vector<JointActionId> greedy(const MarkovGame& game, std::span<const double> q) {
  const int S = game.num_states();
  const int JA = game.num_joint_actions();
  std::vector<JointActionId> out(S, 0);
  for (StateId s = 0; s < S; ++s) {
    const double* row = q.data() + static_cast<std::size_t>(s) * JA;
    const double best = *std::max_element(row, row + JA);
    const double cutoff = best - kTieTolerance * std::max(1.0, std::abs(best));
    for (JointActionId a = 0; a < JA; ++a) {
      if (row[a] >= cutoff) {
        out[s] = a;
        break;
      }
    }
  }
  return out;
}

struct ViTrace {
  JointOptimum optimum;
  // Distinct greedy joint maps in the order they appeared, with the sweep
  // that first produced each.
  std::vector<std::vector<JointActionId>> checkpoints;
  std::vector<int> checkpoint_sweeps;
};

ViTrace joint_value_iteration(const MarkovGame& game, double tolerance, int max_iterations, bool keep_trace) {
  const int S = game.num_states();
  ViTrace trace;
  std::vector<double> v(S, 0.0);
  int it = 0;
  double residual = 0.0;
  while (true) {
    if (++it > max_iterations) throw NumericError("joint value iteration did not converge within the iteration cap");
    const auto q = joint_q(game, v);
    if (keep_trace) {
      auto g = greedy(game, q);
      if (trace.checkpoints.empty() || trace.checkpoints.back() != g) {
        trace.checkpoints.push_back(std::move(g));
        trace.checkpoint_sweeps.push_back(it);
      }
    }
    const int JA = game.num_joint_actions();
    residual = 0.0;
    for (StateId s = 0; s < S; ++s) {
      const double* row = q.data() + static_cast<std::size_t>(s) * JA;
      const double best = *std::max_element(row, row + JA);
      residual = std::max(residual, std::abs(best - v[s]));
      v[s] = best;
    }
    if (!std::isfinite(residual)) throw NumericError("joint value iteration diverged");
    if (residual < tolerance) break;
  }
  const auto q = joint_q(game, v);
  auto actions = greedy(game, q);
  JointOptimum& opt = trace.optimum;
  opt.policy = factorize(game, actions);
  opt.joint_actions = std::move(actions);
  opt.values = std::move(v);
  opt.iterations = it;
  opt.residual = residual;
  opt.optimal_return = task_return(game, opt.policy);
  return trace;
}

}  // namespace

JointPolicy factorize(const MarkovGame& game, std::span<const JointActionId> joint_actions) {
  if (static_cast<int>(joint_actions.size()) != game.num_states()) throw InputError("one joint action per state required");
  const auto& space = game.joint_actions();
  std::vector<TabularPolicy> per_agent;
  for (int i = 0; i < game.num_agents(); ++i) {
    std::vector<ActionId> acts;
    acts.reserve(joint_actions.size());
    for (JointActionId ja : joint_actions) {
      game.check_joint_action(ja);
      acts.push_back(space.action_of(ja, i));
    }
    per_agent.push_back(TabularPolicy::deterministic(i, game.num_actions(i), acts));
  }
  return JointPolicy(std::move(per_agent));
}

JointOptimum solve_joint_optimal(const MarkovGame& game, double tolerance, int max_iterations) {
  return joint_value_iteration(game, tolerance, max_iterations, false).optimum;
}

std::string to_string(Provenance p) { return p == Provenance::kCoTrained ? "co_trained" : "separately_trained"; }

Provenance provenance_from_string(const std::string& s) {
  if (s == "co_trained") return Provenance::kCoTrained;
  if (s == "separately_trained") return Provenance::kSeparatelyTrained;
  throw ConfigError("unknown provenance '" + s + "'");
}

namespace {

double quality_of(double achieved, double optimal) {
  if (std::abs(optimal) < 1e-300) return 1.0;
  return achieved / optimal;
}

}  // namespace

ExpertBundle cotrain_experts(const MarkovGame& game, double quality, std::uint64_t seed) {
  if (!(quality > 0.0 && quality <= 1.0)) throw ConfigError("expert quality must lie in (0, 1]");
  const bool partial = quality < 1.0;
  ViTrace trace = joint_value_iteration(game, kBellmanTolerance, 100'000, partial);

  ExpertBundle b{.id = "",
                 .joint_policy = trace.optimum.policy,
                 .provenance = Provenance::kCoTrained,
                 .seeds = {seed},
                 .achieved_return = trace.optimum.optimal_return,
                 .optimal_return = trace.optimum.optimal_return,
                 .quality_tag = 1.0,
                 .requested_quality = quality,
                 .checkpoint_iteration = -1,
                 .team_policies = {}};
  if (partial) {
    const double target = quality * b.optimal_return;
    double best_gap = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < trace.checkpoints.size(); ++k) {
      JointPolicy cand = factorize(game, trace.checkpoints[k]);
      const double ret = task_return(game, cand);
      const double gap = std::abs(ret - target);
      if (gap < best_gap - 1e-12) {
        best_gap = gap;
        b.joint_policy = std::move(cand);
        b.achieved_return = ret;
        b.checkpoint_iteration = trace.checkpoint_sweeps[k];
      }
    }
  }
  b.quality_tag = quality_of(b.achieved_return, b.optimal_return);
  std::ostringstream id;
  id << "co_q" << quality << "_s" << seed;
  b.id = id.str();
  return b;
}

JointPolicy alternating_best_response(const MarkovGame& game, std::uint64_t seed, int max_sweeps) {
  Rng rng(seed);
  const int K = game.num_agents();
  const int S = game.num_states();
  std::vector<std::vector<int>> tie_orders(K);
  std::vector<TabularPolicy> policies;
  for (int i = 0; i < K; ++i) {
    const int A = game.num_actions(i);
    tie_orders[i].resize(A);
    std::iota(tie_orders[i].begin(), tie_orders[i].end(), 0);
    for (int k = A - 1; k > 0; --k) std::swap(tie_orders[i][k], tie_orders[i][rng.uniform_int(k + 1)]);
    std::vector<ActionId> acts(S);
    for (auto& a : acts) a = static_cast<ActionId>(rng.uniform_int(A));
    policies.push_back(TabularPolicy::deterministic(i, A, acts));
  }
  JointPolicy joint(policies);

  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    bool changed = false;
    for (int i = 0; i < K; ++i) {
      const AgentMdp mdp = induce_agent_mdp(game, i, joint, game.rewards());
      const MdpSolution sol = value_iteration(mdp, kBellmanTolerance, 1'000'000, tie_orders[i]);
      const auto q = q_values(mdp, sol.values);
      const int A = mdp.num_actions;
      std::vector<ActionId> acts = policies[i].actions();
      bool agent_changed = false;
      for (StateId s = 0; s < S; ++s) {
        const double best = q[static_cast<std::size_t>(s) * A + sol.policy[s]];
        const double cur = q[static_cast<std::size_t>(s) * A + acts[s]];
        // Switch only for a strict improvement, so the dynamics settle.
        if (cur < best - kTieTolerance * std::max(1.0, std::abs(best))) {
          acts[s] = sol.policy[s];
          agent_changed = true;
        }
      }
      if (agent_changed) {
        policies[i] = TabularPolicy::deterministic(i, A, acts);
        joint = JointPolicy(policies);
        changed = true;
      }
    }
    if (!changed) break;
  }
  return joint;
}

ExpertBundle independent_train(const MarkovGame& game, std::span<const std::uint64_t> seeds) {
  const int K = game.num_agents();
  if (static_cast<int>(seeds.size()) != K) throw ConfigError("independent_train needs one seed per agent");
  std::vector<JointPolicy> teams;
  std::vector<TabularPolicy> assembled;
  for (int k = 0; k < K; ++k) {
    teams.push_back(alternating_best_response(game, seeds[k]));
    assembled.push_back(teams.back().agent(k));
  }
  ExpertBundle b;
  b.joint_policy = JointPolicy(std::move(assembled));
  b.provenance = Provenance::kSeparatelyTrained;
  b.seeds.assign(seeds.begin(), seeds.end());
  b.achieved_return = task_return(game, b.joint_policy);
  b.optimal_return = solve_joint_optimal(game).optimal_return;
  b.quality_tag = quality_of(b.achieved_return, b.optimal_return);
  b.requested_quality = 1.0;
  b.team_policies = std::move(teams);
  std::ostringstream id;
  id << "sep";
  for (auto s : seeds) id << "_s" << s;
  b.id = id.str();
  return b;
}

nlohmann::json bundle_to_json(const ExpertBundle& b) {
  nlohmann::json j;
  j["format"] = "dm2-experts";
  j["version"] = 1;
  j["id"] = b.id;
  j["provenance"] = to_string(b.provenance);
  j["seeds"] = b.seeds;
  j["achieved_return"] = b.achieved_return;
  j["optimal_return"] = b.optimal_return;
  j["quality_tag"] = b.quality_tag;
  j["requested_quality"] = b.requested_quality;
  j["checkpoint_iteration"] = b.checkpoint_iteration;
  j["joint_policy"] = policy_to_json(b.joint_policy);
  j["team_policies"] = nlohmann::json::array();
  for (const auto& t : b.team_policies) j["team_policies"].push_back(policy_to_json(t));
  return j;
}

ExpertBundle bundle_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format") != "dm2-experts") throw InputError("not an expert bundle");
    ExpertBundle b{.id = j.at("id").get<std::string>(),
                   .joint_policy = policy_from_json(j.at("joint_policy")),
                   .provenance = provenance_from_string(j.at("provenance").get<std::string>()),
                   .seeds = j.at("seeds").get<std::vector<std::uint64_t>>(),
                   .achieved_return = j.at("achieved_return").get<double>(),
                   .optimal_return = j.at("optimal_return").get<double>(),
                   .quality_tag = j.at("quality_tag").get<double>(),
                   .requested_quality = j.at("requested_quality").get<double>(),
                   .checkpoint_iteration = j.at("checkpoint_iteration").get<int>(),
                   .team_policies = {}};
    for (const auto& t : j.at("team_policies")) b.team_policies.push_back(policy_from_json(t));
    return b;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed expert bundle: ") + e.what());
  }
}

}  // namespace dm2
