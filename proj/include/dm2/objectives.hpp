#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dm2/discriminator.hpp"
#include "dm2/experts.hpp"
#include "dm2/game.hpp"

namespace dm2 {

// Probability, per state, that every agent takes its expert action at once.
std::vector<double> joint_match_probability(const MarkovGame& game, const JointPolicy& policy,
                                            const JointPolicy& expert);

// J(pi) = sum_s rho(s) [(K - 1) + prod_i pi_i(a^E_i(s) | s)].
// Throws UnsupportedInputError for a stochastic expert.
double joint_action_matching(const MarkovGame& game, const JointPolicy& policy, const ExpertBundle& expert);
double joint_action_matching(const MarkovGame& game, const JointPolicy& policy, const JointPolicy& expert);

// L(pi) = sum_s rho(s) sum_i (1/c) E_{a ~ pi_i}[r_i(s, a)]; reward models must
// be assumption1 with a common c, one per agent in agent order.
double lower_bound_L(const MarkovGame& game, const JointPolicy& policy, std::span<const RewardModel> rewards);

// L_eps(pi) = eps sum_s sum_i (1/c) E_{a ~ pi_i}[r_i(s, a)].
double lower_bound_L_eps(const MarkovGame& game, const JointPolicy& policy, std::span<const RewardModel> rewards,
                         double epsilon);

// V(pi, r) for agent i: (1/(1-gamma)) sum_{s,a} rho(s) pi_i(a|s) r(s, a).
double value_of(const MarkovGame& game, const JointPolicy& policy, const RewardModel& reward, int agent);
double value_of_table(const MarkovGame& game, const JointPolicy& policy, int agent,
                      std::span<const double> reward_table);

// Exact W1 between two distributions on the same finite support under a
// symmetric nonnegative ground metric (min-cost transport). Throws InputError
// if the total masses differ by more than 1e-9.
double wasserstein1(std::span<const double> mu, std::span<const double> nu, const Eigen::MatrixXd& metric);
double tv_distance(std::span<const double> mu, std::span<const double> nu);

// Manhattan distance between agent-position tuples when the game carries
// state features, the discrete metric otherwise.
Eigen::MatrixXd ground_metric(const MarkovGame& game);

// Lower bound on min_s rho(s) valid for every policy whose per-agent rows put
// at least iota / |A_i| on each action (i.e. iota-uniform mixing). Per state.
std::vector<double> exploration_floor_per_state(const MarkovGame& game, double iota);
double exploration_floor(const MarkovGame& game, double iota);

struct ObjectiveReport {
  double J = 0.0;
  double L = 0.0;
  double L_eps = 0.0;
  double epsilon = 0.0;
  double min_rho = 0.0;
  bool epsilon_valid = true;  // epsilon <= min_s rho(s)
  double task_return = 0.0;
  std::vector<double> match_probability;  // per agent: sum_s rho(s) pi_i(a^E_i|s)
  std::vector<double> w1;                 // per agent, vs. that agent's target
  std::vector<double> tv;
};

// Exact report for `policy`. epsilon <= 0 selects min_s rho(s). Targets are
// per-agent state distributions for the mismatch columns (may be empty).
ObjectiveReport evaluate_objectives(const MarkovGame& game, const JointPolicy& policy, const JointPolicy& expert,
                                    std::span<const RewardModel> rewards, double epsilon,
                                    std::span<const std::vector<double>> targets = {});

// Violations of K-1 <= J <= K, L <= J, L_eps < L (if some rho(s) > eps),
// 0 <= L_eps <= eps |S| K, at the given slack. Empty when all hold.
std::vector<std::string> bound_chain_violations(const ObjectiveReport& r, int num_states, int num_agents,
                                                double slack = 1e-9);

}  // namespace dm2
