#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dm2/demos.hpp"
#include "dm2/discriminator.hpp"
#include "dm2/experts.hpp"
#include "dm2/game.hpp"
#include "dm2/mdp.hpp"

namespace dm2 {

struct LearnerConfig {
  double learning_rate = 30.0;  // sample policy-gradient step
  double trust_region = 0.1;   // delta: max per-state TV change of the realized policy
  double iota = 0.05;          // uniform exploration mix
  double init_scale = 0.1;     // std of the initial logits
  double critic_rate = 0.1;    // tabular baseline step
  int disc_epochs = 120;
  double disc_lr = 2.0;
  double disc_lambda = 0.0;
  RewardKind reward_kind = RewardKind::kGailD;
};

// realized(a|s) = (1 - iota) softmax(theta_s)(a) + iota / A
TabularPolicy softmax_policy(int agent_id, int num_states, int num_actions, std::span<const double> logits,
                             double iota = 0.0);

// One agent's batch view: its own states, actions and rewards. `terminal`
// marks steps after which the episode ended; `truncated` marks the final step
// of a cut-off episode (bootstrapped from the critic at next_state).
struct StepBatch {
  std::vector<StateId> states;
  std::vector<ActionId> actions;
  std::vector<double> rewards;
  std::vector<StateId> next_states;
  std::vector<char> terminal;
  std::vector<char> truncated;
  std::size_t size() const { return states.size(); }
};

struct StepStats {
  double grad_norm = 0.0;
  double max_tv = 0.0;
  double mean_advantage = 0.0;
};

// Independent learner. It owns its logits, critic, discriminator and demo
// set; nothing in this interface reads or writes another learner's state.
class AgentLearner {
 public:
  AgentLearner(int agent_id, int num_states, int num_actions, LearnerConfig config, std::uint64_t init_seed);

  int agent_id() const { return agent_id_; }
  int num_states() const { return num_states_; }
  int num_actions() const { return num_actions_; }
  const LearnerConfig& config() const { return config_; }

  std::span<const double> logits() const { return logits_; }
  void set_logits(std::vector<double> logits);
  // Logits whose softmax is (numerically) the given deterministic policy.
  void set_deterministic(const TabularPolicy& target, double margin = 40.0);

  TabularPolicy policy() const;    // softmax(theta)
  TabularPolicy behavior() const;  // iota-mixed, the policy actually executed
  ActionId act(StateId s, Rng& rng) const;

  void set_demonstrations(DemonstrationSet demos);
  bool has_demonstrations() const { return !demo_states_.empty(); }
  const DiscriminatorTable& discriminator() const { return disc_; }
  RewardModel reward_model() const;
  double discriminator_reward(StateId s) const;

  // Alg. 1 discriminator update: samples `num_demo` states from this agent's
  // demonstrations and trains against the agent's own visited states.
  // Returns the final training loss.
  double update_discriminator(std::span<const StateId> own_states, int num_demo, Rng& demo_rng);

  // Advantage-weighted softmax policy-gradient ascent step with a tabular
  // critic baseline; each state's step is shrunk until the realized policy
  // moves by at most trust_region in TV. Throws NumericError (no change) on a
  // non-finite gradient.
  StepStats policy_gradient_step(const StepBatch& batch);

  // theta += scale_s * direction per state with the per-state TV clamp.
  // Returns the largest per-state TV change.
  double apply_step(std::span<const double> direction);

 private:
  int agent_id_;
  int num_states_;
  int num_actions_;
  LearnerConfig config_;
  std::vector<double> logits_;
  std::vector<double> critic_;
  DiscriminatorTable disc_;
  std::vector<StateId> demo_states_;
};

StepStats policy_gradient_step(AgentLearner& learner, const StepBatch& batch);

// Exact gradient of rho0 . V for the realized policy of `logits` in an
// induced single-agent MDP (policy-gradient theorem), and the value itself.
std::vector<double> exact_policy_gradient(const AgentMdp& mdp, std::span<const double> logits, double iota);
double exact_policy_value(const AgentMdp& mdp, std::span<const double> logits, double iota);

// ---------------------------------------------------------------------------
// Turn-by-turn scheme (exact occupancies).

enum class TurnReward { kAssumption1, kClosedForm };
std::string to_string(TurnReward r);
TurnReward turn_reward_from_string(const std::string& s);

struct TurnByTurnConfig {
  int max_rounds = 500;
  int H = 1;                 // L_eps sampling interval, in rounds
  TurnReward reward = TurnReward::kAssumption1;
  double c = 1.0;
  double step_size = 5.0;    // natural-gradient step eta
  int steps_per_turn = 1;
  int max_backtracks = 30;
  int plateau_rounds = 20;
  double plateau_tolerance = 1e-6;
  double epsilon = 0.0;      // <= 0: exploration floor of iota
};

struct TurnRecord {
  int round = 0;
  int agent = 0;
  double value_before = 0.0;  // V(pi_i, r) under the turn's reward
  double value_after = 0.0;
  double gail_loss_before = 0.0;
  double gail_loss_after = 0.0;
  double max_tv = 0.0;
  int backtracks = 0;
  bool accepted = false;
  bool converged = false;      // advantage already ~0, no step needed
  bool condition2_violation = false;
};

struct RoundRecord {
  int round = 0;
  double J = 0.0;           // learned (softmax) policies
  double J_behavior = 0.0;  // iota-mixed policies
  double L = 0.0;
  double L_eps = 0.0;
  double epsilon = 0.0;
  double min_rho = 0.0;
  double task_return = 0.0;
  bool changed = false;
};

struct ImprovementMonitor {
  int H = 1;
  std::vector<TurnRecord> turns;
  std::vector<RoundRecord> rounds;

  std::vector<double> sampled_L_eps() const;  // rounds 0, H, 2H, ...
  bool L_eps_non_decreasing(double tolerance = 1e-6) const;
  int condition2_violations() const;
  double worst_accepted_delta() const;  // min over accepted turns of value_after - value_before
};

struct TurnByTurnResult {
  JointPolicy learned;
  JointPolicy behavior;
  ImprovementMonitor monitor;
  int rounds = 0;
  std::string stop_reason;  // max_rounds | plateau
};

TurnByTurnResult run_turn_by_turn(const MarkovGame& game, std::vector<AgentLearner>& learners,
                                  const ExpertBundle& expert, const TurnByTurnConfig& config);

// ---------------------------------------------------------------------------
// DM2 (simultaneous, sample-based).

enum class Dm2Mode { kDm2, kGailOnly, kTaskOnly };
std::string to_string(Dm2Mode m);

struct Dm2Config {
  Dm2Mode mode = Dm2Mode::kDm2;
  double c = 0.3;
  int epochs = 200;
  int steps_per_epoch = 500;
  int demo_samples = 0;  // M states per discriminator update; 0 = steps_per_epoch
  int eval_every = 10;   // E: Monte-Carlo evaluation and mismatch cadence
  int eval_episodes = 32;
  int eval_max_length = 1000;
  int max_episode_length = 1000;
  double threshold_fraction = 0.8;
  bool stop_at_threshold = false;
  std::uint64_t seed = 0;
};

struct EpochRecord {
  int epoch = 0;
  std::int64_t env_steps = 0;
  double task_return = 0.0;           // exact, learned policies
  double behavior_return = 0.0;       // exact, executed policies
  double batch_env_reward = 0.0;      // mean per step in the epoch batch
  std::optional<double> eval_return;  // Monte-Carlo, every eval_every epochs
  std::optional<double> J;            // when an expert is supplied
  std::vector<double> gail_reward;    // per agent, batch mean of D(s)
  std::vector<double> disc_loss;
  std::vector<double> w1;             // per agent vs. its demonstrations, every eval_every
  std::vector<double> tv;
};

struct Dm2Result {
  JointPolicy learned;
  JointPolicy behavior;
  std::vector<EpochRecord> epochs;
  double optimal_return = 0.0;
  double threshold = 0.0;
  int epochs_to_threshold = -1;  // first epoch (1-based) reaching the threshold; -1 if never
  std::vector<Trajectory> batches;  // kept only when requested
};

// Learners must be in agent order. demo_sets[k] goes to learner k (ignored
// in task_only mode). `expert` (optional) enables the J column.
Dm2Result run_dm2(const MarkovGame& game, std::vector<AgentLearner>& learners,
                  const std::vector<DemonstrationSet>& demo_sets, const Dm2Config& config,
                  const JointPolicy* expert = nullptr, bool keep_batches = false);

// Fresh learners seeded from `seed` (one init stream per agent).
std::vector<AgentLearner> make_learners(const MarkovGame& game, const LearnerConfig& config, std::uint64_t seed);

}  // namespace dm2
