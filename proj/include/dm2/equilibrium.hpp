#pragma once

#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dm2/discriminator.hpp"
#include "dm2/experts.hpp"
#include "dm2/game.hpp"

namespace dm2 {

struct BestResponse {
  TabularPolicy policy;
  double value = 0.0;          // exact rho0 . V of the best response
  double current_value = 0.0;  // same for the agent's current policy
  int iterations = 0;
  double residual = 0.0;
  double gain() const { return value - current_value; }
};

// Exact best response of `agent` with every other agent frozen at `policy`.
// `agent_reward` gives the agent's reward per (s, joint action).
BestResponse best_response(const MarkovGame& game, int agent, const JointPolicy& policy,
                           std::span<const double> joint_reward);
// Reward defined over (s, a_agent) only.
BestResponse best_response(const MarkovGame& game, int agent, const JointPolicy& policy, const RewardModel& reward);

enum class RewardSpecKind { kTask, kImitation, kMixed };

// Reward each agent i maximises: R_T, R_I,i, or alpha R_T + beta R_I,i.
// `imitation` holds one reward model per agent (agent order) for the last two.
struct RewardSpec {
  RewardSpecKind kind = RewardSpecKind::kTask;
  double alpha = 1.0;
  double beta = 1.0;
  std::vector<RewardModel> imitation;
  // Re-fit the imitation discriminator against each deviation instead of
  // holding it at the expert optimum. Diagnostic only.
  bool reoptimize_discriminator = false;
  JointPolicy expert;  // required when reoptimize_discriminator is set

  static RewardSpec task() { return {}; }
  static RewardSpec imitation_only(std::vector<RewardModel> models);
  static RewardSpec mixed(double alpha, double beta, std::vector<RewardModel> models);
  std::string label() const;
};

// Agent i's reward table over (s, joint action) under `spec`.
std::vector<double> agent_reward_table(const MarkovGame& game, int agent, const RewardSpec& spec);

inline constexpr double kNashTolerance = 1e-6;

struct NashCertificate {
  std::string policy_id;
  std::string reward;
  double alpha = 0.0;
  double beta = 0.0;
  std::vector<double> gains;  // V(BR_i) - V(pi_i)
  double epsilon = 0.0;       // max_i gain
  double tolerance = kNashTolerance;
  bool pass = false;
};

NashCertificate certify_nash(const MarkovGame& game, const JointPolicy& policy, const RewardSpec& spec,
                             double tolerance = kNashTolerance, const std::string& policy_id = "");

struct Theorem2Result {
  NashCertificate task;
  std::vector<NashCertificate> imitation;  // one per agent (each R_I,i alone)
  std::vector<NashCertificate> mixed;      // alphas x betas, row-major
  bool all_pass() const;
};

// Imitation reward for the sweep: assumption1 with scale c from the expert.
std::vector<RewardModel> expert_imitation_rewards(const ExpertBundle& expert, double c = 1.0);

// Throws PreconditionError unless the expert is first certified Nash for R_T.
Theorem2Result theorem2_sweep(const MarkovGame& game, const ExpertBundle& expert, std::span<const double> alphas,
                              std::span<const double> betas, double tolerance = kNashTolerance,
                              bool reoptimize_discriminator = false);

nlohmann::json certificate_to_json(const NashCertificate& c);

}  // namespace dm2
