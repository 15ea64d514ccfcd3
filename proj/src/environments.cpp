#include "dm2/environments.hpp"

#include <algorithm>
#include <map>
#include <sstream>

#include "dm2/errors.hpp"
#include "dm2/experts.hpp"

namespace dm2 {

EnvSpec EnvSpec::four_tile() {
  EnvSpec spec;
  spec.name = EnvName::kFourTile;
  spec.width = 2;
  spec.height = 2;
  spec.num_agents = 2;
  spec.goals = {{3, 0}};
  return spec;
}

EnvSpec EnvSpec::grid_meet(int width, int height) {
  EnvSpec spec;
  spec.name = EnvName::kGridMeet;
  spec.width = width;
  spec.height = height;
  spec.num_agents = 2;
  // Two meeting rows: top-left/top-right or bottom-left/bottom-right.
  const int last_row = (height - 1) * width;
  spec.goals = {{0, width - 1}, {last_row, last_row + width - 1}};
  return spec;
}

EnvSpec EnvSpec::corridor_switch(int length) {
  EnvSpec spec;
  spec.name = EnvName::kCorridorSwitch;
  spec.width = length;
  spec.height = 1;
  spec.corridor_length = length;
  spec.num_agents = 2;
  // One agent on the switch (cell 0) while the other stands at the door.
  spec.goals = {{0, length - 1}, {length - 1, 0}};
  return spec;
}

std::string to_string(EnvName name) {
  switch (name) {
    case EnvName::kFourTile: return "four_tile";
    case EnvName::kGridMeet: return "grid_meet";
    case EnvName::kCorridorSwitch: return "corridor_switch";
  }
  return "unknown";
}

EnvName env_name_from_string(const std::string& s) {
  if (s == "four_tile") return EnvName::kFourTile;
  if (s == "grid_meet") return EnvName::kGridMeet;
  if (s == "corridor_switch") return EnvName::kCorridorSwitch;
  throw ConfigError("unknown environment '" + s + "'");
}

std::string to_string(RewardStyle style) {
  switch (style) {
    case RewardStyle::kPersistent: return "persistent";
    case RewardStyle::kDelayed: return "delayed";
    case RewardStyle::kReset: return "reset";
  }
  return "unknown";
}

RewardStyle reward_style_from_string(const std::string& s) {
  if (s == "persistent") return RewardStyle::kPersistent;
  if (s == "delayed") return RewardStyle::kDelayed;
  if (s == "reset") return RewardStyle::kReset;
  throw ConfigError("unknown reward style '" + s + "'");
}

namespace {

struct Layout {
  int width;
  int height;
  int num_agents;
  bool corridor;
  int num_cells() const { return width * height; }
  int num_actions() const { return corridor ? 3 : 5; }
};

Layout layout_of(const EnvSpec& spec) {
  Layout l{spec.width, spec.height, spec.num_agents, spec.name == EnvName::kCorridorSwitch};
  if (l.corridor) {
    l.width = spec.corridor_length;
    l.height = 1;
  }
  return l;
}

void validate(const EnvSpec& spec, const Layout& l) {
  if (spec.name == EnvName::kFourTile && (l.width != 2 || l.height != 2 || l.num_agents != 2)) {
    throw ConfigError("four_tile is a 2x2 grid with 2 agents");
  }
  if (l.corridor && l.width < 2) throw ConfigError("corridor_length must be at least 2");
  if (l.corridor && l.num_agents != 2) throw ConfigError("corridor_switch has exactly 2 agents");
  if (l.width < 1 || l.height < 1 || l.width > 8 || l.height > 8) throw ConfigError("grid sides must lie in [1, 8]");
  if (l.num_agents < 1 || l.num_agents > 3) throw ConfigError("num_agents must lie in [1, 3]");
  if (l.num_cells() < l.num_agents) throw ConfigError("grid has fewer cells than agents");
  if (!(spec.gamma >= 0.0 && spec.gamma < 1.0)) throw ConfigError("gamma must lie in [0, 1)");
  if (spec.goals.empty()) throw ConfigError("at least one goal configuration is required");
  auto check_tuple = [&](const std::vector<int>& cells, const char* what) {
    if (static_cast<int>(cells.size()) != l.num_agents) throw ConfigError(std::string(what) + " needs one cell per agent");
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (cells[i] < 0 || cells[i] >= l.num_cells()) throw ConfigError(std::string(what) + " cell out of range");
      for (std::size_t j = 0; j < i; ++j) {
        if (cells[i] == cells[j]) throw ConfigError(std::string(what) + " places two agents on one tile");
      }
    }
  };
  for (const auto& g : spec.goals) check_tuple(g, "goal configuration");
  if (spec.start == StartMode::kFixed) check_tuple(spec.start_cells, "start configuration");
  if (!std::isfinite(spec.goal_reward)) throw ConfigError("goal_reward must be finite");
}

std::vector<std::vector<int>> enumerate_placements(const Layout& l) {
  std::vector<std::vector<int>> out;
  std::vector<int> cur(l.num_agents, 0);
  const int C = l.num_cells();
  // Lexicographic over cell tuples, skipping tuples with repeated cells.
  while (true) {
    bool distinct = true;
    for (int i = 0; i < l.num_agents && distinct; ++i) {
      for (int j = 0; j < i; ++j) {
        if (cur[i] == cur[j]) {
          distinct = false;
          break;
        }
      }
    }
    if (distinct) out.push_back(cur);
    int k = l.num_agents - 1;
    while (k >= 0 && ++cur[k] == C) {
      cur[k] = 0;
      --k;
    }
    if (k < 0) break;
  }
  return out;
}

int move_cell(const Layout& l, int cell, int action) {
  const int r = cell / l.width;
  const int c = cell % l.width;
  int nr = r;
  int nc = c;
  if (l.corridor) {
    if (action == kWest) nc = c - 1;
    if (action == kEast) nc = c + 1;
  } else {
    switch (action) {
      case kUp: nr = r - 1; break;
      case kDown: nr = r + 1; break;
      case kLeft: nc = c - 1; break;
      case kRight: nc = c + 1; break;
      default: break;
    }
  }
  if (nr < 0 || nr >= l.height || nc < 0 || nc >= l.width) return cell;
  return nr * l.width + nc;
}

// Simultaneous move resolution: a move is cancelled when it leaves the grid,
// targets a tile currently held by another agent, or targets the same tile
// as another agent's move.
std::vector<int> resolve_moves(const Layout& l, const std::vector<int>& cells, const std::vector<int>& actions) {
  const int K = l.num_agents;
  std::vector<int> target(K);
  for (int i = 0; i < K; ++i) target[i] = move_cell(l, cells[i], actions[i]);
  std::vector<int> out(cells);
  for (int i = 0; i < K; ++i) {
    if (target[i] == cells[i]) continue;
    bool blocked = false;
    for (int j = 0; j < K && !blocked; ++j) {
      if (j == i) continue;
      if (target[i] == cells[j] || target[i] == target[j]) blocked = true;
    }
    if (!blocked) out[i] = target[i];
  }
  return out;
}

std::string label_of(const Layout& l, const std::vector<int>& cells) {
  std::ostringstream os;
  for (int i = 0; i < l.num_agents; ++i) {
    if (i) os << ' ';
    os << 'a' << i << "@(" << cells[i] / l.width << ',' << cells[i] % l.width << ')';
  }
  return os.str();
}

}  // namespace

std::vector<std::vector<int>> placements(const EnvSpec& spec) {
  const Layout l = layout_of(spec);
  validate(spec, l);
  return enumerate_placements(l);
}

MarkovGame make_env(const EnvSpec& spec) {
  const Layout l = layout_of(spec);
  validate(spec, l);
  const auto states = enumerate_placements(l);
  const int S = static_cast<int>(states.size());
  std::map<std::vector<int>, int> index;
  for (int s = 0; s < S; ++s) index[states[s]] = s;

  GameDefinition def;
  def.name = to_string(spec.name);
  def.num_states = S;
  def.actions_per_agent.assign(l.num_agents, l.num_actions());
  def.gamma = spec.gamma;
  const JointActionSpace space(def.actions_per_agent);
  const int JA = space.size();

  std::vector<bool> is_goal(S, false);
  for (const auto& g : spec.goals) is_goal[index.at(g)] = true;

  const bool skip_goals = spec.reward_style != RewardStyle::kPersistent;
  def.start.assign(S, 0.0);
  if (spec.start == StartMode::kFixed) {
    def.start[index.at(spec.start_cells)] = 1.0;
  } else {
    int n = 0;
    for (int s = 0; s < S; ++s) {
      if (!(skip_goals && is_goal[s])) ++n;
    }
    if (n == 0) throw ConfigError("every state is a goal; no start states remain");
    for (int s = 0; s < S; ++s) {
      if (!(skip_goals && is_goal[s])) def.start[s] = 1.0 / n;
    }
  }

  def.transitions.resize(static_cast<std::size_t>(S) * JA);
  def.reward.assign(static_cast<std::size_t>(S) * JA, 0.0);
  for (int s = 0; s < S; ++s) {
    for (JointActionId a = 0; a < JA; ++a) {
      const std::size_t row = static_cast<std::size_t>(s) * JA + a;
      auto& out = def.transitions[row];
      switch (spec.reward_style) {
        case RewardStyle::kPersistent:
          if (is_goal[s]) def.reward[row] = spec.goal_reward;
          out.push_back({index.at(resolve_moves(l, states[s], space.decode(a))), 1.0});
          break;
        case RewardStyle::kDelayed:
          if (is_goal[s]) {
            out.push_back({s, 1.0});
          } else {
            const int next = index.at(resolve_moves(l, states[s], space.decode(a)));
            if (is_goal[next]) def.reward[row] = spec.goal_reward;
            out.push_back({next, 1.0});
          }
          break;
        case RewardStyle::kReset:
          if (is_goal[s]) {
            def.reward[row] = spec.goal_reward;
            for (int t = 0; t < S; ++t) {
              if (def.start[t] > 0.0) out.push_back({t, def.start[t]});
            }
          } else {
            out.push_back({index.at(resolve_moves(l, states[s], space.decode(a))), 1.0});
          }
          break;
      }
    }
  }

  def.state_features.reserve(S);
  def.state_labels.reserve(S);
  for (const auto& cells : states) {
    std::vector<int> f;
    for (int c : cells) {
      f.push_back(c / l.width);
      f.push_back(c % l.width);
    }
    def.state_features.push_back(std::move(f));
    def.state_labels.push_back(label_of(l, cells));
  }
  return MarkovGame(std::move(def));
}

namespace {

// Team policy that keeps `agent` on tile 0 as much as possible; the partner
// cooperates by clearing the tile.
JointPolicy hold_tile_zero(const EnvSpec& spec, int agent) {
  EnvSpec shaped = spec;
  shaped.goals.clear();
  for (const auto& cells : placements(spec)) {
    if (cells[agent] == 0) shaped.goals.push_back(cells);
  }
  const MarkovGame g = make_env(shaped);
  return solve_joint_optimal(g).policy;
}

ConflictingDemoScenario build_scenario(bool compatible) {
  const EnvSpec spec = EnvSpec::four_tile();
  MarkovGame game = make_env(spec);
  const JointPolicy first = hold_tile_zero(spec, 0);
  const JointPolicy second = compatible ? first : hold_tile_zero(spec, 1);
  std::vector<VisitationDistribution> targets{marginal_visitation(game, 0, first),
                                              marginal_visitation(game, 1, second)};
  return {std::move(game), std::move(targets), {first, second}};
}

}  // namespace

ConflictingDemoScenario conflicting_demo_scenario() { return build_scenario(false); }

ConflictingDemoScenario compatible_demo_scenario() { return build_scenario(true); }

}  // namespace dm2
