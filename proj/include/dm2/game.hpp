#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "dm2/rng.hpp"

namespace dm2 {

using StateId = int;
using ActionId = int;
using JointActionId = int;

inline constexpr double kDistributionTolerance = 1e-12;

// Mixed-radix encoding of joint actions. Agent 0 is the most significant
// digit, so increasing joint index is lexicographic order over (a_0, ..., a_K-1).
class JointActionSpace {
 public:
  JointActionSpace() = default;
  explicit JointActionSpace(std::vector<int> actions_per_agent);

  int num_agents() const { return static_cast<int>(sizes_.size()); }
  int num_actions(int agent) const;
  int size() const { return size_; }
  const std::vector<int>& sizes() const { return sizes_; }

  JointActionId encode(std::span<const ActionId> actions) const;
  std::vector<ActionId> decode(JointActionId joint) const;
  ActionId action_of(JointActionId joint, int agent) const {
    return (joint / strides_[agent]) % sizes_[agent];
  }

 private:
  std::vector<int> sizes_;
  std::vector<int> strides_;
  int size_ = 0;
};

struct TransitionEntry {
  StateId next;
  double prob;
};

// Raw description of a finite cooperative Markov game. `transitions` and
// `reward` are indexed by s * |joint actions| + joint_action.
struct GameDefinition {
  std::string name;
  int num_states = 0;
  std::vector<int> actions_per_agent;
  std::vector<std::vector<TransitionEntry>> transitions;
  std::vector<double> reward;
  std::vector<double> start;
  double gamma = 0.9;
  // Optional per-state integer coordinates (e.g. row/col of every agent);
  // used by the Manhattan ground metric. Empty means abstract states.
  std::vector<std::vector<int>> state_features;
  std::vector<std::string> state_labels;
};

// Immutable, validated Markov game <K, S, A, rho0, T, R_T, gamma>.
class MarkovGame {
 public:
  explicit MarkovGame(GameDefinition def);

  const std::string& name() const { return def_.name; }
  int num_agents() const { return joint_.num_agents(); }
  int num_states() const { return def_.num_states; }
  int num_actions(int agent) const { return joint_.num_actions(agent); }
  int num_joint_actions() const { return joint_.size(); }
  const JointActionSpace& joint_actions() const { return joint_; }
  double gamma() const { return def_.gamma; }
  std::span<const double> start() const { return def_.start; }

  std::span<const TransitionEntry> transitions(StateId s, JointActionId a) const;
  double reward(StateId s, JointActionId a) const;
  std::span<const double> rewards() const { return def_.reward; }

  const std::vector<std::vector<int>>& state_features() const { return def_.state_features; }
  const std::vector<std::string>& state_labels() const { return def_.state_labels; }
  const GameDefinition& definition() const { return def_; }

  void check_state(StateId s) const;
  void check_joint_action(JointActionId a) const;
  void check_agent(int agent) const;

 private:
  GameDefinition def_;
  JointActionSpace joint_;
};

// Per-agent stochastic action table pi_i(a|s), row-major.
class TabularPolicy {
 public:
  TabularPolicy(int agent_id, int num_states, int num_actions, std::vector<double> probs);

  static TabularPolicy uniform(int agent_id, int num_states, int num_actions);
  static TabularPolicy deterministic(int agent_id, int num_actions, std::span<const ActionId> actions);

  int agent_id() const { return agent_id_; }
  int num_states() const { return num_states_; }
  int num_actions() const { return num_actions_; }
  double prob(StateId s, ActionId a) const { return probs_[s * num_actions_ + a]; }
  std::span<const double> row(StateId s) const {
    return {probs_.data() + static_cast<std::size_t>(s) * num_actions_, static_cast<std::size_t>(num_actions_)};
  }
  const std::vector<double>& probs() const { return probs_; }

  bool is_deterministic() const;
  // Action of a one-hot row; throws UnsupportedInputError for stochastic rows.
  ActionId action(StateId s) const;
  std::vector<ActionId> actions() const;

  friend bool operator==(const TabularPolicy&, const TabularPolicy&) = default;

 private:
  int agent_id_;
  int num_states_;
  int num_actions_;
  std::vector<double> probs_;
};

// Product-form joint policy; joint probabilities are computed on demand.
class JointPolicy {
 public:
  JointPolicy() = default;
  explicit JointPolicy(std::vector<TabularPolicy> policies);

  int num_agents() const { return static_cast<int>(policies_.size()); }
  const TabularPolicy& agent(int i) const { return policies_.at(i); }
  const std::vector<TabularPolicy>& policies() const { return policies_; }

  // Row of joint action probabilities at s, in joint-index order.
  std::vector<double> joint_row(const JointActionSpace& space, StateId s) const;
  double joint_prob(const JointActionSpace& space, StateId s, JointActionId a) const;
  bool is_deterministic() const;

  friend bool operator==(const JointPolicy&, const JointPolicy&) = default;

 private:
  std::vector<TabularPolicy> policies_;
};

enum class VisitationKind { kState, kStateActionMarginal, kStateActionJoint };
enum class VisitationSource { kExact, kEmpirical };

// Discounted occupancy measure. `values` has num_states * columns entries
// (columns = 1 for state visitation).
struct VisitationDistribution {
  VisitationKind kind = VisitationKind::kState;
  VisitationSource source = VisitationSource::kExact;
  int num_states = 0;
  int columns = 1;
  int agent = -1;
  double gamma = 0.0;
  std::int64_t n_samples = 0;
  std::vector<double> values;

  double at(StateId s, int col = 0) const { return values[static_cast<std::size_t>(s) * columns + col]; }
  // Sum over columns.
  std::vector<double> state_marginal() const;
  double total() const;
};

struct StepResult {
  StateId next_state;
  double reward;
};

struct TrajectoryStep {
  StateId state;
  JointActionId joint_action;
  double reward;
  StateId next_state;
};

struct Trajectory {
  std::int64_t episode_id = 0;
  std::uint64_t seed = 0;
  std::vector<TrajectoryStep> steps;
};

void validate_policy(const MarkovGame& game, const JointPolicy& policy);

StepResult step(const MarkovGame& game, StateId s, JointActionId a, Rng& rng);
StateId sample_start(const MarkovGame& game, Rng& rng);
JointActionId sample_joint_action(const MarkovGame& game, const JointPolicy& policy, StateId s, Rng& rng);

// Exactly `horizon` chained steps starting from a start-distribution draw.
Trajectory rollout(const MarkovGame& game, const JointPolicy& policy, int horizon, Rng& rng);

// Episode that terminates after each step with probability 1 - gamma (or at
// max_length). State frequencies over many such episodes estimate the
// discounted visitation distribution.
Trajectory rollout_discounted(const MarkovGame& game, const JointPolicy& policy, int max_length, Rng& rng);

// S x S matrix M[s, s'] = sum_a pi(a|s) T(s'|s,a).
Eigen::MatrixXd state_transition_matrix(const MarkovGame& game, const JointPolicy& policy);

// rho = (1-gamma) rho0 + gamma M^T rho, by dense LU solve.
VisitationDistribution exact_state_visitation(const MarkovGame& game, const JointPolicy& policy);
VisitationDistribution joint_state_action_visitation(const MarkovGame& game, const JointPolicy& policy);
VisitationDistribution marginal_visitation(const MarkovGame& game, int agent, const JointPolicy& policy);

// Geometric-restart estimators (restart from rho0 with probability 1-gamma).
VisitationDistribution empirical_state_visitation(const MarkovGame& game, const JointPolicy& policy,
                                                  std::int64_t n_samples, Rng& rng);
VisitationDistribution empirical_joint_visitation(const MarkovGame& game, const JointPolicy& policy,
                                                  std::int64_t n_samples, Rng& rng);

// Discounted state values V(s) = E[sum_t gamma^t r(s_t, a_t)] for a joint
// reward table indexed like MarkovGame::rewards().
std::vector<double> evaluate_joint_reward(const MarkovGame& game, const JointPolicy& policy,
                                          std::span<const double> joint_reward);
// rho0 . V under the task reward.
double task_return(const MarkovGame& game, const JointPolicy& policy);

// Structured-text (JSON) serialization.
nlohmann::json game_to_json(const MarkovGame& game);
MarkovGame game_from_json(const nlohmann::json& j);
void save_game(const MarkovGame& game, const std::string& path);
MarkovGame load_game(const std::string& path);

nlohmann::json policy_to_json(const JointPolicy& policy);
JointPolicy policy_from_json(const nlohmann::json& j);

}  // namespace dm2
