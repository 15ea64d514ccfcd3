#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "dm2/experts.hpp"
#include "dm2/game.hpp"

namespace dm2 {

enum class DemoSource { kCoTrained, kSeparate };
enum class DemoSampling { kConcurrent, kNonConcurrent };

struct DemoStyle {
  DemoSource source = DemoSource::kCoTrained;
  DemoSampling sampling = DemoSampling::kConcurrent;

  std::string tag() const;  // co_conc, co_nonconc, sep_conc, sep_nonconc
  static DemoStyle from_tag(const std::string& tag);
  static std::vector<DemoStyle> all();
  friend bool operator==(const DemoStyle&, const DemoStyle&) = default;
};

struct DemoEpisode {
  std::int64_t episode_id = 0;
  std::vector<StateId> states;
  std::vector<ActionId> actions;  // empty for state-only demonstrations
};

struct DemonstrationSet {
  int agent_id = 0;
  DemoStyle style;
  std::string bundle_id;
  std::uint64_t seed = 0;
  int n_episodes = 0;
  int episode_length = 0;  // cap; episodes end early with probability 1 - gamma per step
  bool with_actions = false;
  std::vector<DemoEpisode> episodes;

  std::int64_t num_steps() const;
  std::vector<StateId> all_states() const;
  std::vector<double> state_frequencies(int num_states) const;
  // Empirical state-action frequencies, indexed s * num_actions + a.
  std::vector<double> state_action_frequencies(int num_states, int num_actions) const;
};

// One set per agent. Episodes terminate after each step with probability
// 1 - gamma (capped at ep_len), so visit frequencies estimate the discounted
// occupancy. Concurrent styles slice the same joint episodes (ids 0..n-1);
// non-concurrent styles give agent k the disjoint ids k*n .. (k+1)*n - 1.
// Co-trained styles need a co-trained bundle; separate styles need a
// separately trained one and execute its assembled mixed team.
std::vector<DemonstrationSet> sample_demonstrations(const MarkovGame& game, const ExpertBundle& bundle,
                                                    DemoStyle style, int n_episodes, int ep_len, Rng& rng,
                                                    bool with_actions = false);

// Files: agent<k>.jsonl (one record per step) plus index.json.
void write_demonstrations(const std::filesystem::path& dir, const std::vector<DemonstrationSet>& sets);
std::vector<DemonstrationSet> read_demonstrations(const std::filesystem::path& dir);

struct CompatibilityResult {
  bool compatible = false;
  bool lp_feasible = false;
  double infeasibility = 0.0;  // minimum total constraint violation
  bool witness_verified = false;
  double witness_error = 0.0;  // max |rho_witness,i(s,a) - target_i(s,a)|
  std::vector<TabularPolicy> witness;
  int pivots = 0;
};

inline constexpr double kCompatibilityTolerance = 1e-8;
inline constexpr double kWitnessTolerance = 1e-6;

// Is there a joint occupancy rho(s, joint a) >= 0 obeying the Bellman flow
// constraints whose per-agent marginals equal the targets (one state-action
// marginal per agent)? The witness is pi'_i(a|s) = target_i(s,a) / sum_a
// target_i(s,a); the verdict also requires its exact marginals to reproduce
// the targets within kWitnessTolerance.
CompatibilityResult check_compatibility(const MarkovGame& game, const std::vector<VisitationDistribution>& targets,
                                        double tolerance = kCompatibilityTolerance);

}  // namespace dm2
