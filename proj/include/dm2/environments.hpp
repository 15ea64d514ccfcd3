#pragma once

#include <string>
#include <vector>

#include "dm2/game.hpp"

namespace dm2 {

enum class EnvName { kFourTile, kGridMeet, kCorridorSwitch };

// persistent: R_T is paid on every step spent in a goal configuration.
// delayed: R_T is paid once, on the step that enters a goal configuration;
//          goal configurations are absorbing and pay nothing afterwards.
// reset: R_T is paid in a goal configuration, after which the team is reset
//        to a start-distribution draw.
enum class RewardStyle { kPersistent, kDelayed, kReset };

// uniform: start uniformly over all states (goal states excluded under the
// delayed and reset styles). fixed: start at `start_cells`.
enum class StartMode { kUniform, kFixed };

// Grid actions. Moves off-grid or into an occupied tile resolve to kStay.
enum GridAction : int { kStay = 0, kUp = 1, kDown = 2, kLeft = 3, kRight = 4 };
// Corridor actions.
enum CorridorAction : int { kHold = 0, kWest = 1, kEast = 2 };

struct EnvSpec {
  EnvName name = EnvName::kGridMeet;
  int width = 3;
  int height = 3;
  int num_agents = 2;
  // Goal configurations: each entry lists one cell index (row * width + col)
  // per agent. Any listed configuration pays the goal reward.
  std::vector<std::vector<int>> goals;
  RewardStyle reward_style = RewardStyle::kPersistent;
  double goal_reward = 1.0;
  double gamma = 0.9;
  StartMode start = StartMode::kUniform;
  std::vector<int> start_cells;
  // corridor_switch only: number of cells in the corridor.
  int corridor_length = 3;

  // Defaults per environment.
  static EnvSpec four_tile();
  static EnvSpec grid_meet(int width = 3, int height = 3);
  static EnvSpec corridor_switch(int length = 3);
};

std::string to_string(EnvName name);
EnvName env_name_from_string(const std::string& s);
std::string to_string(RewardStyle style);
RewardStyle reward_style_from_string(const std::string& s);

// Builds the game; throws ConfigError for out-of-range parameters.
MarkovGame make_env(const EnvSpec& spec);

// Agent cells (one per agent) of every state of a grid or corridor game, in
// state-index order. States are ordered lexicographically by cell tuple.
std::vector<std::vector<int>> placements(const EnvSpec& spec);

struct ConflictingDemoScenario {
  MarkovGame game;
  // Target state-action marginals rho_{pi_i, pi_-i}(s, a), one per agent.
  std::vector<VisitationDistribution> targets;
  // Joint policies whose exact marginals define the targets.
  std::vector<JointPolicy> sources;
};

// Four-tile world where both agents' targets put their own agent on tile 0
// (A11) with the other agent on one of the three remaining tiles.
ConflictingDemoScenario conflicting_demo_scenario();

// Same world, but agent 1's target keeps agent 1 on a free tile while agent 0
// holds tile 0, i.e. both targets come from one joint behaviour.
ConflictingDemoScenario compatible_demo_scenario();

}  // namespace dm2
