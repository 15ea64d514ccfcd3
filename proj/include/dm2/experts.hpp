#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dm2/game.hpp"

namespace dm2 {

struct JointOptimum {
  JointPolicy policy;
  std::vector<JointActionId> joint_actions;  // greedy joint action per state
  std::vector<double> values;
  int iterations = 0;
  double residual = 0.0;
  double optimal_return = 0.0;
};

// Value iteration over the product action space, from V = 0, until the
// Bellman residual is below `tolerance`. Greedy ties go to the lowest joint
// action index. Throws NumericError past `max_iterations`.
JointOptimum solve_joint_optimal(const MarkovGame& game, double tolerance = 1e-10, int max_iterations = 100'000);

// Splits a deterministic joint map s -> a into one deterministic policy per agent.
JointPolicy factorize(const MarkovGame& game, std::span<const JointActionId> joint_actions);

enum class Provenance { kCoTrained, kSeparatelyTrained };
std::string to_string(Provenance p);
Provenance provenance_from_string(const std::string& s);

struct ExpertBundle {
  std::string id;
  JointPolicy joint_policy;
  Provenance provenance = Provenance::kCoTrained;
  std::vector<std::uint64_t> seeds;
  double achieved_return = 0.0;  // exact rho0 . V under R_T
  double optimal_return = 0.0;
  double quality_tag = 1.0;  // achieved / optimal (1 when optimal is 0)
  double requested_quality = 1.0;
  int checkpoint_iteration = -1;  // value-iteration sweep of the checkpoint; -1 = converged
  // Separately trained only: the full team of run k, whose agent k was taken.
  std::vector<JointPolicy> team_policies;
};

// quality in (0, 1]; below 1 the greedy policy of the value-iteration sweep
// whose exact return is closest to quality * optimal is returned. The seed is
// recorded for provenance; the procedure itself is deterministic.
ExpertBundle cotrain_experts(const MarkovGame& game, double quality, std::uint64_t seed);

// One alternating-best-response run per seed (one seed per agent); agent k's
// policy is taken from run k.
ExpertBundle independent_train(const MarkovGame& game, std::span<const std::uint64_t> seeds);

// Local equilibrium reached by alternating exact best response from a
// seed-dependent deterministic start, with seed-dependent tie-breaking.
JointPolicy alternating_best_response(const MarkovGame& game, std::uint64_t seed, int max_sweeps = 200);

nlohmann::json bundle_to_json(const ExpertBundle& bundle);
ExpertBundle bundle_from_json(const nlohmann::json& j);

}  // namespace dm2
