#include "dm2/equilibrium.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "dm2/errors.hpp"
#include "dm2/mdp.hpp"

namespace dm2 {

namespace {

BestResponse solve(const AgentMdp& mdp, const TabularPolicy& current) {
  const MdpSolution sol = value_iteration(mdp);
  TabularPolicy br = TabularPolicy::deterministic(mdp.agent, mdp.num_actions, sol.policy);
  const double v_br = start_value(mdp, evaluate_policy(mdp, br));
  const double v_cur = start_value(mdp, evaluate_policy(mdp, current));
  return BestResponse{.policy = std::move(br),
                      .value = v_br,
                      .current_value = v_cur,
                      .iterations = sol.iterations,
                      .residual = sol.residual};
}

}  // namespace

BestResponse best_response(const MarkovGame& game, int agent, const JointPolicy& policy,
                           std::span<const double> joint_reward) {
  return solve(induce_agent_mdp(game, agent, policy, joint_reward), policy.agent(agent));
}

BestResponse best_response(const MarkovGame& game, int agent, const JointPolicy& policy, const RewardModel& reward) {
  game.check_agent(agent);
  const auto table = reward.table(game.num_states(), game.num_actions(agent));
  return solve(induce_agent_mdp_local(game, agent, policy, table), policy.agent(agent));
}

RewardSpec RewardSpec::imitation_only(std::vector<RewardModel> models) {
  RewardSpec s;
  s.kind = RewardSpecKind::kImitation;
  s.alpha = 0.0;
  s.beta = 1.0;
  s.imitation = std::move(models);
  return s;
}

RewardSpec RewardSpec::mixed(double alpha, double beta, std::vector<RewardModel> models) {
  if (!(alpha > 0.0 && beta > 0.0)) throw ConfigError("alpha and beta must be positive");
  RewardSpec s;
  s.kind = RewardSpecKind::kMixed;
  s.alpha = alpha;
  s.beta = beta;
  s.imitation = std::move(models);
  return s;
}

std::string RewardSpec::label() const {
  switch (kind) {
    case RewardSpecKind::kTask: return "task";
    case RewardSpecKind::kImitation: return "imitation";
    case RewardSpecKind::kMixed: {
      std::ostringstream os;
      os << "mixed(" << alpha << "," << beta << ")";
      return os.str();
    }
  }
  return "unknown";
}

std::vector<double> agent_reward_table(const MarkovGame& game, int agent, const RewardSpec& spec) {
  game.check_agent(agent);
  const int S = game.num_states();
  const int JA = game.num_joint_actions();
  const int A = game.num_actions(agent);
  const double wt = spec.kind == RewardSpecKind::kTask ? 1.0 : (spec.kind == RewardSpecKind::kMixed ? spec.alpha : 0.0);
  const double wi = spec.kind == RewardSpecKind::kTask ? 0.0 : spec.beta;
  std::vector<double> local;
  if (wi != 0.0) {
    if (static_cast<int>(spec.imitation.size()) != game.num_agents()) {
      throw ConfigError("one imitation reward model per agent required");
    }
    local = spec.imitation[agent].table(S, A);
  }
  const auto& space = game.joint_actions();
  std::vector<double> out(static_cast<std::size_t>(S) * JA);
  for (StateId s = 0; s < S; ++s) {
    for (JointActionId ja = 0; ja < JA; ++ja) {
      double r = wt * game.reward(s, ja);
      if (wi != 0.0) r += wi * local[static_cast<std::size_t>(s) * A + space.action_of(ja, agent)];
      out[static_cast<std::size_t>(s) * JA + ja] = r;
    }
  }
  return out;
}

namespace {

// Deviation gain when agent i's imitation discriminator is re-fit to each
// candidate deviation (closed form over state-action marginals).
double refit_gain(const MarkovGame& game, int agent, const JointPolicy& policy, const RewardSpec& spec) {
  const auto expert_marginal = marginal_visitation(game, agent, spec.expert);
  const double wt = spec.kind == RewardSpecKind::kMixed ? spec.alpha : 0.0;
  TabularPolicy dev = policy.agent(agent);
  std::vector<double> table;
  for (int round = 0; round < 10; ++round) {
    std::vector<TabularPolicy> ps = policy.policies();
    ps[agent] = dev;
    const auto m = marginal_visitation(game, agent, JointPolicy(ps));
    const auto disc = optimal_discriminator(expert_marginal, m, agent);
    RewardSpec local = spec;
    local.kind = RewardSpecKind::kMixed;
    local.alpha = wt;
    local.imitation.assign(game.num_agents(), RewardModel::gail(disc));
    for (int j = 0; j < game.num_agents(); ++j) local.imitation[j].agent_id = j;
    table = agent_reward_table(game, agent, local);
    TabularPolicy next = best_response(game, agent, policy, table).policy;
    if (next == dev) break;
    dev = std::move(next);
  }
  const AgentMdp mdp = induce_agent_mdp(game, agent, policy, table);
  return start_value(mdp, evaluate_policy(mdp, dev)) - start_value(mdp, evaluate_policy(mdp, policy.agent(agent)));
}

}  // namespace

NashCertificate certify_nash(const MarkovGame& game, const JointPolicy& policy, const RewardSpec& spec,
                             double tolerance, const std::string& policy_id) {
  validate_policy(game, policy);
  NashCertificate c;
  c.policy_id = policy_id;
  c.reward = spec.label();
  c.alpha = spec.kind == RewardSpecKind::kImitation ? 0.0 : spec.alpha;
  c.beta = spec.kind == RewardSpecKind::kTask ? 0.0 : spec.beta;
  c.tolerance = tolerance;
  c.epsilon = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < game.num_agents(); ++i) {
    double gain;
    if (spec.reoptimize_discriminator && spec.kind != RewardSpecKind::kTask) {
      gain = refit_gain(game, i, policy, spec);
    } else {
      gain = best_response(game, i, policy, agent_reward_table(game, i, spec)).gain();
    }
    c.gains.push_back(gain);
    c.epsilon = std::max(c.epsilon, gain);
  }
  c.pass = c.epsilon <= tolerance;
  return c;
}

bool Theorem2Result::all_pass() const {
  if (!task.pass) return false;
  for (const auto& c : imitation) {
    if (!c.pass) return false;
  }
  for (const auto& c : mixed) {
    if (!c.pass) return false;
  }
  return true;
}

std::vector<RewardModel> expert_imitation_rewards(const ExpertBundle& expert, double c) {
  std::vector<RewardModel> out;
  for (const auto& p : expert.joint_policy.policies()) out.push_back(RewardModel::assumption1(p, c));
  return out;
}

Theorem2Result theorem2_sweep(const MarkovGame& game, const ExpertBundle& expert, std::span<const double> alphas,
                              std::span<const double> betas, double tolerance, bool reoptimize_discriminator) {
  for (double a : alphas) {
    if (!(a > 0.0)) throw ConfigError("alphas must be positive");
  }
  for (double b : betas) {
    if (!(b > 0.0)) throw ConfigError("betas must be positive");
  }
  Theorem2Result res;
  res.task = certify_nash(game, expert.joint_policy, RewardSpec::task(), tolerance, expert.id);
  if (!res.task.pass) {
    std::ostringstream os;
    os << "expert '" << expert.id << "' is not an equilibrium for the task reward (max gain " << res.task.epsilon
       << "); the mixed-reward sweep does not apply";
    throw PreconditionError(os.str());
  }
  const auto models = expert_imitation_rewards(expert);
  RewardSpec imit = RewardSpec::imitation_only(models);
  imit.reoptimize_discriminator = reoptimize_discriminator;
  imit.expert = expert.joint_policy;
  const auto ic = certify_nash(game, expert.joint_policy, imit, tolerance, expert.id);
  // Split the joint imitation certificate into one per agent.
  for (int i = 0; i < game.num_agents(); ++i) {
    NashCertificate c = ic;
    c.reward = "imitation(" + std::to_string(i) + ")";
    c.gains = {ic.gains[i]};
    c.epsilon = ic.gains[i];
    c.pass = c.epsilon <= tolerance;
    res.imitation.push_back(std::move(c));
  }
  for (double a : alphas) {
    for (double b : betas) {
      RewardSpec spec = RewardSpec::mixed(a, b, models);
      spec.reoptimize_discriminator = reoptimize_discriminator;
      spec.expert = expert.joint_policy;
      res.mixed.push_back(certify_nash(game, expert.joint_policy, spec, tolerance, expert.id));
    }
  }
  return res;
}

nlohmann::json certificate_to_json(const NashCertificate& c) {
  return {{"policy_id", c.policy_id}, {"reward", c.reward}, {"alpha", c.alpha},         {"beta", c.beta},
          {"gains", c.gains},         {"epsilon", c.epsilon}, {"tolerance", c.tolerance}, {"pass", c.pass}};
}

}  // namespace dm2
