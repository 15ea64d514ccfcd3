#pragma once

#include <span>
#include <vector>

#include "dm2/game.hpp"

namespace dm2 {

// Single-agent MDP seen by one agent when every other agent's policy is held
// fixed: T_i(s'|s,a) = sum_{a_-i} pi_-i(a_-i|s) T(s'|s,a,a_-i), and likewise
// for the reward.
struct AgentMdp {
  int agent = 0;
  int num_states = 0;
  int num_actions = 0;
  double gamma = 0.0;
  std::vector<double> start;
  std::vector<std::vector<TransitionEntry>> transitions;  // s * A + a
  std::vector<double> reward;                             // s * A + a

  std::span<const TransitionEntry> row(StateId s, ActionId a) const {
    return transitions[static_cast<std::size_t>(s) * num_actions + a];
  }
  double r(StateId s, ActionId a) const { return reward[static_cast<std::size_t>(s) * num_actions + a]; }
};

// `joint_reward` is indexed s * |joint actions| + joint_action. Agent
// `agent`'s own row in `policy` is ignored.
AgentMdp induce_agent_mdp(const MarkovGame& game, int agent, const JointPolicy& policy,
                          std::span<const double> joint_reward);

// Same, with a reward that depends only on (s, a_agent); indexed s * A_i + a.
AgentMdp induce_agent_mdp_local(const MarkovGame& game, int agent, const JointPolicy& policy,
                                std::span<const double> agent_reward);

struct MdpSolution {
  std::vector<double> values;
  std::vector<ActionId> policy;
  int iterations = 0;
  double residual = 0.0;
};

inline constexpr double kBellmanTolerance = 1e-10;
inline constexpr double kTieTolerance = 1e-9;

// Value iteration from V = 0 until the sup-norm Bellman residual drops below
// `tolerance`; throws NumericError past `max_iterations`. Greedy ties (within
// kTieTolerance) go to the first action in `tie_order` (default: index order).
MdpSolution value_iteration(const AgentMdp& mdp, double tolerance = kBellmanTolerance,
                            int max_iterations = 1'000'000, std::span<const int> tie_order = {});

std::vector<double> q_values(const AgentMdp& mdp, std::span<const double> values);
std::vector<double> evaluate_policy(const AgentMdp& mdp, const TabularPolicy& policy);
double start_value(const AgentMdp& mdp, std::span<const double> values);
// Discounted state occupancy of `policy` in the MDP.
std::vector<double> mdp_state_visitation(const AgentMdp& mdp, const TabularPolicy& policy);

}  // namespace dm2
