#pragma once

#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dm2/experts.hpp"
#include "dm2/game.hpp"

namespace dm2 {

enum class DiscMode { kStateOnly, kStateAction };
std::string to_string(DiscMode m);

inline constexpr double kLogitClamp = 20.0;

// Tabular discriminator D(x) = sigmoid(phi(x)) over states (x = s) or
// state-action pairs (x = s * A + a). Logits are clamped to +-kLogitClamp so
// every output lies strictly inside (0, 1).
struct DiscriminatorTable {
  int agent_id = 0;
  DiscMode mode = DiscMode::kStateOnly;
  int num_states = 0;
  int num_actions = 1;  // 1 in state-only mode
  std::vector<double> logits;
  double lambda = 0.0;  // weight of psi(phi) = lambda * ||phi||^2
  std::vector<double> loss_history;

  static DiscriminatorTable neutral(int agent_id, DiscMode mode, int num_states, int num_actions);

  int size() const { return static_cast<int>(logits.size()); }
  int index(StateId s, ActionId a) const { return mode == DiscMode::kStateOnly ? s : s * num_actions + a; }
  double value(StateId s, ActionId a = 0) const;
  double regularizer() const;
};

// D = rho_E / (rho_E + rho_pi); 0.5 where both vanish. The two tables must
// have the same length (states, or states x actions when num_actions > 1).
DiscriminatorTable optimal_discriminator(std::span<const double> rho_expert, std::span<const double> rho_agent,
                                         int agent_id, DiscMode mode, int num_states, int num_actions = 1);
DiscriminatorTable optimal_discriminator(const VisitationDistribution& rho_expert,
                                         const VisitationDistribution& rho_agent, int agent_id);

// Full-batch gradient descent on the class-balanced logistic loss
//   -mean_E log D(x) - mean_pi log(1 - D(x)) + lambda ||phi||^2
// (expert labelled 1, agent 0). Batches hold table indices (see index()).
// Each coordinate is preconditioned by 1 / (p_E(x) + p_pi(x) + 8 lambda), the
// inverse of a curvature bound, so with lr <= 8 the loss never increases.
DiscriminatorTable train_discriminator(DiscriminatorTable disc, std::span<const int> expert_batch,
                                       std::span<const int> agent_batch, int epochs, double lr = 2.0);
double discriminator_loss(const DiscriminatorTable& disc, std::span<const int> expert_batch,
                          std::span<const int> agent_batch);

enum class RewardKind { kGailD, kGailNegLogOneMinusD, kAssumption1 };
std::string to_string(RewardKind k);
RewardKind reward_kind_from_string(const std::string& s);

struct RewardModel {
  RewardKind kind = RewardKind::kGailD;
  int agent_id = 0;
  DiscriminatorTable disc;            // gail kinds
  double c = 1.0;                     // assumption1
  std::vector<ActionId> expert_actions;  // assumption1: a^E_i(s)

  static RewardModel gail(DiscriminatorTable disc, RewardKind kind = RewardKind::kGailD);
  // c * 1[a = a^E_i(s)]; the expert policy must be deterministic.
  static RewardModel assumption1(const TabularPolicy& expert, double c);

  double operator()(StateId s, ActionId a) const;
  // r(s, a) for every state/action of agent agent_id, indexed s * A + a.
  std::vector<double> table(int num_states, int num_actions) const;
  double regularizer() const { return kind == RewardKind::kAssumption1 ? 0.0 : disc.regularizer(); }
};

double gail_reward(const RewardModel& model, StateId s, ActionId a = 0);

// L = V(pi_E, r) - V(pi, r) - psi(phi) for agent i, values from exact occupancies.
double gail_loss(const MarkovGame& game, int agent, const JointPolicy& policy, const ExpertBundle& expert,
                 const RewardModel& reward);

nlohmann::json discriminator_to_json(const DiscriminatorTable& d);

}  // namespace dm2
