#include "dm2/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "dm2/errors.hpp"

namespace dm2 {

namespace {

AgentMdp induce(const MarkovGame& game, int agent, const JointPolicy& policy, std::span<const double> joint_reward,
                std::span<const double> local_reward) {
  game.check_agent(agent);
  validate_policy(game, policy);
  const int S = game.num_states();
  const int A = game.num_actions(agent);
  const int JA = game.num_joint_actions();
  const auto& space = game.joint_actions();

  AgentMdp mdp;
  mdp.agent = agent;
  mdp.num_states = S;
  mdp.num_actions = A;
  mdp.gamma = game.gamma();
  mdp.start.assign(game.start().begin(), game.start().end());
  mdp.transitions.resize(static_cast<std::size_t>(S) * A);
  mdp.reward.assign(static_cast<std::size_t>(S) * A, 0.0);

  std::vector<double> next_mass(S, 0.0);
  std::vector<int> touched;
  for (StateId s = 0; s < S; ++s) {
    for (ActionId ai = 0; ai < A; ++ai) {
      double r = 0.0;
      touched.clear();
      for (JointActionId ja = 0; ja < JA; ++ja) {
        if (space.action_of(ja, agent) != ai) continue;
        double w = 1.0;
        for (int j = 0; j < game.num_agents(); ++j) {
          if (j != agent) w *= policy.agent(j).prob(s, space.action_of(ja, j));
        }
        if (w == 0.0) continue;
        if (!joint_reward.empty()) r += w * joint_reward[static_cast<std::size_t>(s) * JA + ja];
        for (const auto& [next, p] : game.transitions(s, ja)) {
          if (next_mass[next] == 0.0) touched.push_back(next);
          next_mass[next] += w * p;
        }
      }
      const std::size_t row = static_cast<std::size_t>(s) * A + ai;
      std::sort(touched.begin(), touched.end());
      double total = 0.0;
      for (int t : touched) total += next_mass[t];
      for (int t : touched) {
        // Renormalize away accumulated rounding in the product weights.
        mdp.transitions[row].push_back({t, next_mass[t] / total});
        next_mass[t] = 0.0;
      }
      mdp.reward[row] = local_reward.empty() ? r : local_reward[row];
    }
  }
  return mdp;
}

}  // namespace

AgentMdp induce_agent_mdp(const MarkovGame& game, int agent, const JointPolicy& policy,
                          std::span<const double> joint_reward) {
  if (joint_reward.size() != static_cast<std::size_t>(game.num_states()) * game.num_joint_actions()) {
    throw InputError("joint reward table has wrong size");
  }
  return induce(game, agent, policy, joint_reward, {});
}

AgentMdp induce_agent_mdp_local(const MarkovGame& game, int agent, const JointPolicy& policy,
                                std::span<const double> agent_reward) {
  game.check_agent(agent);
  if (agent_reward.size() != static_cast<std::size_t>(game.num_states()) * game.num_actions(agent)) {
    throw InputError("agent reward table has wrong size");
  }
  return induce(game, agent, policy, {}, agent_reward);
}

std::vector<double> q_values(const AgentMdp& mdp, std::span<const double> values) {
  std::vector<double> q(static_cast<std::size_t>(mdp.num_states) * mdp.num_actions);
  for (StateId s = 0; s < mdp.num_states; ++s) {
    for (ActionId a = 0; a < mdp.num_actions; ++a) {
      double cont = 0.0;
      for (const auto& [next, p] : mdp.row(s, a)) cont += p * values[next];
      q[static_cast<std::size_t>(s) * mdp.num_actions + a] = mdp.r(s, a) + mdp.gamma * cont;
    }
  }
  return q;
}

MdpSolution value_iteration(const AgentMdp& mdp, double tolerance, int max_iterations,
                            std::span<const int> tie_order) {
  const int S = mdp.num_states;
  const int A = mdp.num_actions;
  std::vector<int> order(A);
  if (tie_order.empty()) {
    std::iota(order.begin(), order.end(), 0);
  } else {
    if (static_cast<int>(tie_order.size()) != A) throw InputError("tie order must list every action");
    order.assign(tie_order.begin(), tie_order.end());
  }

  MdpSolution sol;
  sol.values.assign(S, 0.0);
  std::vector<double> next(S);
  for (int it = 1;; ++it) {
    if (it > max_iterations) throw NumericError("value iteration did not converge within the iteration cap");
    const auto q = q_values(mdp, sol.values);
    double residual = 0.0;
    for (StateId s = 0; s < S; ++s) {
      double best = -std::numeric_limits<double>::infinity();
      for (ActionId a = 0; a < A; ++a) best = std::max(best, q[static_cast<std::size_t>(s) * A + a]);
      next[s] = best;
      residual = std::max(residual, std::abs(best - sol.values[s]));
    }
    sol.values.swap(next);
    sol.iterations = it;
    sol.residual = residual;
    if (!std::isfinite(residual)) throw NumericError("value iteration diverged");
    if (residual < tolerance) break;
  }

  const auto q = q_values(mdp, sol.values);
  sol.policy.assign(S, 0);
  for (StateId s = 0; s < S; ++s) {
    double best = -std::numeric_limits<double>::infinity();
    for (ActionId a = 0; a < A; ++a) best = std::max(best, q[static_cast<std::size_t>(s) * A + a]);
    const double cutoff = best - kTieTolerance * std::max(1.0, std::abs(best));
    for (int a : order) {
      if (q[static_cast<std::size_t>(s) * A + a] >= cutoff) {
        sol.policy[s] = a;
        break;
      }
    }
  }
  return sol;
}

std::vector<double> evaluate_policy(const AgentMdp& mdp, const TabularPolicy& policy) {
  const int S = mdp.num_states;
  const int A = mdp.num_actions;
  if (policy.num_states() != S || policy.num_actions() != A) throw InputError("policy does not match the MDP");
  Eigen::MatrixXd M = Eigen::MatrixXd::Identity(S, S);
  Eigen::VectorXd r = Eigen::VectorXd::Zero(S);
  for (StateId s = 0; s < S; ++s) {
    for (ActionId a = 0; a < A; ++a) {
      const double p = policy.prob(s, a);
      if (p == 0.0) continue;
      r(s) += p * mdp.r(s, a);
      for (const auto& [next, q] : mdp.row(s, a)) M(s, next) -= mdp.gamma * p * q;
    }
  }
  Eigen::VectorXd v = M.partialPivLu().solve(r);
  if (!v.allFinite()) throw NumericError("policy evaluation produced non-finite values");
  return {v.data(), v.data() + S};
}

double start_value(const AgentMdp& mdp, std::span<const double> values) {
  double acc = 0.0;
  for (int s = 0; s < mdp.num_states; ++s) acc += mdp.start[s] * values[s];
  return acc;
}

std::vector<double> mdp_state_visitation(const AgentMdp& mdp, const TabularPolicy& policy) {
  const int S = mdp.num_states;
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(S, S);
  for (StateId s = 0; s < S; ++s) {
    for (ActionId a = 0; a < mdp.num_actions; ++a) {
      const double p = policy.prob(s, a);
      if (p == 0.0) continue;
      for (const auto& [next, q] : mdp.row(s, a)) M(s, next) += p * q;
    }
  }
  Eigen::MatrixXd lhs = Eigen::MatrixXd::Identity(S, S) - mdp.gamma * M.transpose();
  Eigen::VectorXd rhs(S);
  for (int s = 0; s < S; ++s) rhs(s) = (1.0 - mdp.gamma) * mdp.start[s];
  Eigen::VectorXd rho = lhs.partialPivLu().solve(rhs);
  if (!rho.allFinite()) throw NumericError("occupancy solve produced non-finite values");
  std::vector<double> out(S);
  for (int s = 0; s < S; ++s) out[s] = std::max(0.0, rho(s));
  return out;
}

}  // namespace dm2
