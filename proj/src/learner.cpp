#include "dm2/learner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dm2/errors.hpp"
#include "dm2/objectives.hpp"

namespace dm2 {

namespace {

void softmax_row(std::span<const double> logits, std::span<double> out) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (std::size_t a = 0; a < logits.size(); ++a) {
    out[a] = std::exp(logits[a] - mx);
    z += out[a];
  }
  for (double& v : out) v /= z;
}

void realized_row(std::span<const double> logits, double iota, std::span<double> out) {
  softmax_row(logits, out);
  const double u = iota / static_cast<double>(out.size());
  double z = 0.0;
  for (double& v : out) {
    v = (1.0 - iota) * v + u;
    z += v;
  }
  for (double& v : out) v /= z;
}

double tv(std::span<const double> p, std::span<const double> q) {
  double d = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) d += std::abs(p[i] - q[i]);
  return 0.5 * d;
}

}  // namespace

TabularPolicy softmax_policy(int agent_id, int num_states, int num_actions, std::span<const double> logits,
                             double iota) {
  if (logits.size() != static_cast<std::size_t>(num_states) * num_actions) throw InputError("logit table has wrong size");
  std::vector<double> probs(logits.size());
  for (int s = 0; s < num_states; ++s) {
    const std::size_t off = static_cast<std::size_t>(s) * num_actions;
    realized_row(logits.subspan(off, num_actions), iota, std::span<double>(probs).subspan(off, num_actions));
  }
  return TabularPolicy(agent_id, num_states, num_actions, std::move(probs));
}

AgentLearner::AgentLearner(int agent_id, int num_states, int num_actions, LearnerConfig config,
                           std::uint64_t init_seed)
    : agent_id_(agent_id), num_states_(num_states), num_actions_(num_actions), config_(config) {
  if (num_states < 1 || num_actions < 1) throw ConfigError("learner needs at least one state and action");
  if (!(config.iota >= 0.0 && config.iota <= 1.0)) throw ConfigError("iota must lie in [0, 1]");
  if (!(config.trust_region >= 0.0)) throw ConfigError("trust region must be nonnegative");
  if (!(config.learning_rate >= 0.0)) throw ConfigError("learning rate must be nonnegative");
  Rng rng(init_seed);
  logits_.resize(static_cast<std::size_t>(num_states) * num_actions);
  for (double& v : logits_) v = config.init_scale * rng.normal();
  critic_.assign(num_states, 0.0);
  disc_ = DiscriminatorTable::neutral(agent_id, DiscMode::kStateOnly, num_states, 1);
  disc_.lambda = config.disc_lambda;
}

void AgentLearner::set_logits(std::vector<double> logits) {
  if (logits.size() != logits_.size()) throw InputError("logit table has wrong size");
  for (double v : logits) {
    if (!std::isfinite(v)) throw NumericError("non-finite logit");
  }
  logits_ = std::move(logits);
}

void AgentLearner::set_deterministic(const TabularPolicy& target, double margin) {
  const auto acts = target.actions();
  if (static_cast<int>(acts.size()) != num_states_ || target.num_actions() != num_actions_) {
    throw InputError("target policy does not match the learner");
  }
  std::fill(logits_.begin(), logits_.end(), 0.0);
  for (int s = 0; s < num_states_; ++s) logits_[static_cast<std::size_t>(s) * num_actions_ + acts[s]] = margin;
}

TabularPolicy AgentLearner::policy() const { return softmax_policy(agent_id_, num_states_, num_actions_, logits_); }

TabularPolicy AgentLearner::behavior() const {
  return softmax_policy(agent_id_, num_states_, num_actions_, logits_, config_.iota);
}

ActionId AgentLearner::act(StateId s, Rng& rng) const {
  if (s < 0 || s >= num_states_) throw IndexError("state index out of range");
  std::vector<double> row(num_actions_);
  realized_row(std::span<const double>(logits_).subspan(static_cast<std::size_t>(s) * num_actions_, num_actions_),
               config_.iota, row);
  return rng.categorical(row);
}

void AgentLearner::set_demonstrations(DemonstrationSet demos) {
  if (demos.agent_id != agent_id_) throw InputError("demonstrations belong to another agent");
  demo_states_ = demos.all_states();
  for (StateId s : demo_states_) {
    if (s < 0 || s >= num_states_) throw IndexError("demonstration state out of range");
  }
  if (demo_states_.empty()) throw InputError("empty demonstration set");
}

RewardModel AgentLearner::reward_model() const { return RewardModel::gail(disc_, config_.reward_kind); }

double AgentLearner::discriminator_reward(StateId s) const {
  if (config_.reward_kind == RewardKind::kGailNegLogOneMinusD) return gail_reward(reward_model(), s);
  return disc_.value(s);
}

double AgentLearner::update_discriminator(std::span<const StateId> own_states, int num_demo, Rng& demo_rng) {
  if (demo_states_.empty()) throw PreconditionError("learner has no demonstrations");
  if (own_states.empty() || num_demo < 1) throw InputError("discriminator batches must be non-empty");
  std::vector<int> expert(num_demo);
  for (int& x : expert) x = demo_states_[demo_rng.uniform_int(static_cast<int>(demo_states_.size()))];
  std::vector<int> agent(own_states.begin(), own_states.end());
  disc_ = train_discriminator(std::move(disc_), expert, agent, config_.disc_epochs, config_.disc_lr);
  if (disc_.loss_history.size() > 1) {
    // Keep only the latest curve; the run log records per-epoch losses.
    disc_.loss_history.erase(disc_.loss_history.begin(), disc_.loss_history.end() - 1);
  }
  return disc_.loss_history.empty() ? discriminator_loss(disc_, expert, agent) : disc_.loss_history.back();
}

double AgentLearner::apply_step(std::span<const double> direction) {
  if (direction.size() != logits_.size()) throw InputError("step has wrong size");
  const int A = num_actions_;
  const double delta = config_.trust_region;
  std::vector<double> old_row(A);
  std::vector<double> new_row(A);
  std::vector<double> trial(A);
  double max_tv = 0.0;
  for (int s = 0; s < num_states_; ++s) {
    const std::size_t off = static_cast<std::size_t>(s) * A;
    const std::span<const double> d = direction.subspan(off, A);
    if (std::all_of(d.begin(), d.end(), [](double v) { return v == 0.0; })) continue;
    const std::span<double> th(logits_.data() + off, A);
    realized_row(th, config_.iota, old_row);
    auto tv_at = [&](double t) {
      for (int a = 0; a < A; ++a) trial[a] = th[a] + t * d[a];
      realized_row(trial, config_.iota, new_row);
      return tv(old_row, new_row);
    };
    double t = 1.0;
    double moved = tv_at(1.0);
    if (moved > delta) {
      double lo = 0.0;
      double hi = 1.0;
      for (int it = 0; it < 60; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (tv_at(mid) <= delta) {
          lo = mid;
        } else {
          hi = mid;
        }
      }
      t = lo;
      moved = t > 0.0 ? tv_at(t) : 0.0;
    }
    if (t == 0.0) continue;
    for (int a = 0; a < A; ++a) th[a] += t * d[a];
    max_tv = std::max(max_tv, moved);
  }
  return max_tv;
}

StepStats AgentLearner::policy_gradient_step(const StepBatch& batch) {
  const std::size_t n = batch.size();
  if (n == 0) throw InputError("empty batch");
  if (batch.actions.size() != n || batch.rewards.size() != n || batch.next_states.size() != n ||
      batch.terminal.size() != n || batch.truncated.size() != n) {
    throw InputError("batch columns have different lengths");
  }
  const int A = num_actions_;
  std::vector<double> ret(n);
  double g = 0.0;
  for (std::size_t k = n; k-- > 0;) {
    const double r = batch.rewards[k];
    if (!std::isfinite(r)) throw NumericError("non-finite reward in batch");
    if (batch.terminal[k]) {
      g = r;
    } else if (batch.truncated[k] || k + 1 == n) {
      g = r + critic_[batch.next_states[k]];
    } else {
      g = r + g;
    }
    ret[k] = g;
  }
  std::vector<double> grad(logits_.size(), 0.0);
  std::vector<double> pi(A);
  std::vector<double> mixed(A);
  double adv_sum = 0.0;
  const double w = 1.0 / static_cast<double>(n);
  for (std::size_t k = 0; k < n; ++k) {
    const StateId s = batch.states[k];
    const ActionId a = batch.actions[k];
    if (s < 0 || s >= num_states_ || a < 0 || a >= A) throw IndexError("batch entry out of range");
    const double adv = ret[k] - critic_[s];
    adv_sum += adv;
    const std::size_t off = static_cast<std::size_t>(s) * A;
    softmax_row(std::span<const double>(logits_).subspan(off, A), pi);
    const double mix = (1.0 - config_.iota) * pi[a] + config_.iota / A;
    // d log pi~(a|s) / d theta(s,b) = (1 - iota) pi(a) (1[a=b] - pi(b)) / pi~(a)
    const double scale = w * adv * (1.0 - config_.iota) * pi[a] / mix;
    for (int b = 0; b < A; ++b) grad[off + b] += scale * ((a == b ? 1.0 : 0.0) - pi[b]);
  }
  double norm = 0.0;
  for (double v : grad) norm += v * v;
  norm = std::sqrt(norm);
  if (!std::isfinite(norm)) throw NumericError("non-finite policy gradient; step skipped");

  for (std::size_t k = 0; k < n; ++k) {
    critic_[batch.states[k]] += config_.critic_rate * (ret[k] - critic_[batch.states[k]]);
  }
  for (double& v : grad) v *= config_.learning_rate;
  StepStats st;
  st.grad_norm = norm;
  st.mean_advantage = adv_sum / static_cast<double>(n);
  st.max_tv = apply_step(grad);
  return st;
}

StepStats policy_gradient_step(AgentLearner& learner, const StepBatch& batch) {
  return learner.policy_gradient_step(batch);
}

std::vector<double> exact_policy_gradient(const AgentMdp& mdp, std::span<const double> logits, double iota) {
  const int S = mdp.num_states;
  const int A = mdp.num_actions;
  const TabularPolicy mixed = softmax_policy(mdp.agent, S, A, logits, iota);
  const auto v = evaluate_policy(mdp, mixed);
  const auto q = q_values(mdp, v);
  const auto d = mdp_state_visitation(mdp, mixed);
  std::vector<double> grad(static_cast<std::size_t>(S) * A);
  std::vector<double> pi(A);
  for (int s = 0; s < S; ++s) {
    const std::size_t off = static_cast<std::size_t>(s) * A;
    softmax_row(logits.subspan(off, A), pi);
    double mean_q = 0.0;
    for (int a = 0; a < A; ++a) mean_q += pi[a] * q[off + a];
    for (int b = 0; b < A; ++b) {
      grad[off + b] = d[s] / (1.0 - mdp.gamma) * (1.0 - iota) * pi[b] * (q[off + b] - mean_q);
    }
  }
  return grad;
}

double exact_policy_value(const AgentMdp& mdp, std::span<const double> logits, double iota) {
  const TabularPolicy mixed = softmax_policy(mdp.agent, mdp.num_states, mdp.num_actions, logits, iota);
  return start_value(mdp, evaluate_policy(mdp, mixed));
}

// ---------------------------------------------------------------------------

std::string to_string(TurnReward r) { return r == TurnReward::kAssumption1 ? "assumption1" : "closed_form"; }

TurnReward turn_reward_from_string(const std::string& s) {
  if (s == "assumption1") return TurnReward::kAssumption1;
  if (s == "closed_form") return TurnReward::kClosedForm;
  throw ConfigError("unknown turn reward '" + s + "'");
}

std::vector<double> ImprovementMonitor::sampled_L_eps() const {
  std::vector<double> out;
  for (const auto& r : rounds) {
    if (r.round % H == 0) out.push_back(r.L_eps);
  }
  return out;
}

bool ImprovementMonitor::L_eps_non_decreasing(double tolerance) const {
  const auto v = sampled_L_eps();
  for (std::size_t k = 1; k < v.size(); ++k) {
    if (v[k] < v[k - 1] - tolerance) return false;
  }
  return true;
}

int ImprovementMonitor::condition2_violations() const {
  return static_cast<int>(std::count_if(turns.begin(), turns.end(), [](const TurnRecord& t) { return t.condition2_violation; }));
}

double ImprovementMonitor::worst_accepted_delta() const {
  double worst = std::numeric_limits<double>::infinity();
  for (const auto& t : turns) {
    if (t.accepted) worst = std::min(worst, t.value_after - t.value_before);
  }
  return worst;
}

namespace {

JointPolicy joint_of(const std::vector<AgentLearner>& learners, bool behavior) {
  std::vector<TabularPolicy> ps;
  for (const auto& l : learners) ps.push_back(behavior ? l.behavior() : l.policy());
  return JointPolicy(std::move(ps));
}

void check_learners(const MarkovGame& game, const std::vector<AgentLearner>& learners) {
  if (static_cast<int>(learners.size()) != game.num_agents()) throw ConfigError("one learner per agent required");
  for (int i = 0; i < game.num_agents(); ++i) {
    if (learners[i].agent_id() != i) throw ConfigError("learners must be in agent order");
    if (learners[i].num_states() != game.num_states() || learners[i].num_actions() != game.num_actions(i)) {
      throw ConfigError("learner shape does not match the game");
    }
  }
}

}  // namespace

TurnByTurnResult run_turn_by_turn(const MarkovGame& game, std::vector<AgentLearner>& learners,
                                  const ExpertBundle& expert, const TurnByTurnConfig& cfg) {
  check_learners(game, learners);
  if (cfg.H < 1) throw ConfigError("H must be at least 1");
  if (cfg.max_rounds < 0) throw ConfigError("max_rounds must be nonnegative");
  const int K = game.num_agents();
  const int S = game.num_states();
  const JointPolicy& E = expert.joint_policy;
  if (!E.is_deterministic()) throw UnsupportedInputError("expert policies must be deterministic");
  std::vector<RewardModel> a1;
  for (int i = 0; i < K; ++i) a1.push_back(RewardModel::assumption1(E.agent(i), cfg.c));
  std::vector<VisitationDistribution> expert_marginals;
  if (cfg.reward == TurnReward::kClosedForm) {
    for (int i = 0; i < K; ++i) expert_marginals.push_back(marginal_visitation(game, i, E));
  }
  const double iota = learners.front().config().iota;
  const double epsilon = cfg.epsilon > 0.0 ? cfg.epsilon : exploration_floor(game, iota);

  TurnByTurnResult res;
  res.monitor.H = cfg.H;
  auto record_round = [&](int round, bool changed) {
    const JointPolicy learned = joint_of(learners, false);
    const JointPolicy behavior = joint_of(learners, true);
    const auto rep = evaluate_objectives(game, behavior, E, a1, epsilon);
    RoundRecord r;
    r.round = round;
    r.J = joint_action_matching(game, learned, E);
    r.J_behavior = rep.J;
    r.L = rep.L;
    r.L_eps = rep.L_eps;
    r.epsilon = epsilon;
    r.min_rho = rep.min_rho;
    r.task_return = task_return(game, learned);
    r.changed = changed;
    res.monitor.rounds.push_back(r);
  };
  record_round(0, false);
  res.stop_reason = "max_rounds";

  for (int round = 1; round <= cfg.max_rounds; ++round) {
    bool changed = false;
    for (int i = 0; i < K; ++i) {
      AgentLearner& me = learners[i];
      const JointPolicy behavior = joint_of(learners, true);
      std::vector<double> table;
      double psi = 0.0;
      if (cfg.reward == TurnReward::kAssumption1) {
        table = a1[i].table(S, game.num_actions(i));
      } else {
        const auto current = marginal_visitation(game, i, behavior);
        const auto model = RewardModel::gail(optimal_discriminator(expert_marginals[i], current, i));
        table = model.table(S, game.num_actions(i));
        psi = model.regularizer();
      }
      const AgentMdp mdp = induce_agent_mdp_local(game, i, behavior, table);
      const double v_expert = value_of_table(game, E, i, table);

      TurnRecord tr;
      tr.round = round;
      tr.agent = i;
      tr.value_before = exact_policy_value(mdp, me.logits(), iota);
      tr.gail_loss_before = v_expert - tr.value_before - psi;
      double v_cur = tr.value_before;
      bool any_step = false;
      for (int step = 0; step < cfg.steps_per_turn; ++step) {
        const TabularPolicy mixed = me.behavior();
        const auto v = evaluate_policy(mdp, mixed);
        const auto q = q_values(mdp, v);
        const int A = mdp.num_actions;
        std::vector<double> dir(q.size());
        double max_adv = 0.0;
        for (int s = 0; s < S; ++s) {
          for (int a = 0; a < A; ++a) {
            const double adv = q[static_cast<std::size_t>(s) * A + a] - v[s];
            dir[static_cast<std::size_t>(s) * A + a] = cfg.step_size * adv;
            max_adv = std::max(max_adv, std::abs(adv));
          }
        }
        if (max_adv < 1e-12) {
          tr.converged = true;
          break;
        }
        const std::vector<double> old(me.logits().begin(), me.logits().end());
        double scale = 1.0;
        bool accepted = false;
        for (int bt = 0; bt <= cfg.max_backtracks; ++bt) {
          me.set_logits(old);
          std::vector<double> scaled(dir);
          for (double& x : scaled) x *= scale;
          const double moved = me.apply_step(scaled);
          const double v_new = exact_policy_value(mdp, me.logits(), iota);
          if (v_new >= v_cur - 1e-12 * std::max(1.0, std::abs(v_cur))) {
            accepted = true;
            tr.max_tv = std::max(tr.max_tv, moved);
            v_cur = v_new;
            break;
          }
          ++tr.backtracks;
          scale *= 0.5;
        }
        if (!accepted) {
          me.set_logits(old);
          tr.condition2_violation = true;
          break;
        }
        any_step = true;
      }
      tr.accepted = any_step;
      tr.value_after = exact_policy_value(mdp, me.logits(), iota);
      tr.gail_loss_after = v_expert - tr.value_after - psi;
      changed = changed || (any_step && tr.max_tv > 0.0);
      res.monitor.turns.push_back(tr);
    }
    record_round(round, changed);
    res.rounds = round;
    const auto& rs = res.monitor.rounds;
    if (cfg.plateau_rounds > 0 && static_cast<int>(rs.size()) > cfg.plateau_rounds) {
      const double then = rs[rs.size() - 1 - cfg.plateau_rounds].J;
      if (std::abs(rs.back().J - then) < cfg.plateau_tolerance) {
        res.stop_reason = "plateau";
        break;
      }
    }
  }
  res.learned = joint_of(learners, false);
  res.behavior = joint_of(learners, true);
  return res;
}

// ---------------------------------------------------------------------------

std::string to_string(Dm2Mode m) {
  switch (m) {
    case Dm2Mode::kDm2: return "dm2";
    case Dm2Mode::kGailOnly: return "gail_only";
    case Dm2Mode::kTaskOnly: return "task_only";
  }
  return "unknown";
}

std::vector<AgentLearner> make_learners(const MarkovGame& game, const LearnerConfig& config, std::uint64_t seed) {
  std::vector<AgentLearner> out;
  const Rng root(seed);
  for (int i = 0; i < game.num_agents(); ++i) {
    out.emplace_back(i, game.num_states(), game.num_actions(i), config, root.fork(400 + i).next_u64());
  }
  return out;
}

namespace {

// Monte-Carlo return of the learned policies: episodes end with probability
// 1 - gamma after each step, so the undiscounted episode sum is an unbiased
// estimate of the discounted value.
double monte_carlo_return(const MarkovGame& game, const JointPolicy& policy, int episodes, int max_length, Rng& rng) {
  double total = 0.0;
  for (int e = 0; e < episodes; ++e) {
    const Trajectory t = rollout_discounted(game, policy, max_length, rng);
    for (const auto& st : t.steps) total += st.reward;
  }
  return total / episodes;
}

}  // namespace

Dm2Result run_dm2(const MarkovGame& game, std::vector<AgentLearner>& learners,
                  const std::vector<DemonstrationSet>& demo_sets, const Dm2Config& cfg, const JointPolicy* expert,
                  bool keep_batches) {
  check_learners(game, learners);
  const int K = game.num_agents();
  if (cfg.c < 0.0 || !std::isfinite(cfg.c)) throw ConfigError("mixing coefficient c must be nonnegative");
  if (cfg.epochs < 0 || cfg.steps_per_epoch < 1) throw ConfigError("epochs and steps_per_epoch must be positive");
  if (cfg.eval_every < 1 || cfg.eval_episodes < 1) throw ConfigError("evaluation cadence must be positive");
  const bool imitation = cfg.mode != Dm2Mode::kTaskOnly;
  if (imitation) {
    if (static_cast<int>(demo_sets.size()) != K) throw ConfigError("one demonstration set per agent required");
    for (int k = 0; k < K; ++k) learners[k].set_demonstrations(demo_sets[k]);
  }
  const double env_weight = cfg.mode == Dm2Mode::kGailOnly ? 0.0 : 1.0;
  const double gail_weight = cfg.mode == Dm2Mode::kGailOnly ? 1.0 : (cfg.mode == Dm2Mode::kDm2 ? cfg.c : 0.0);
  const int demo_samples = cfg.demo_samples > 0 ? cfg.demo_samples : cfg.steps_per_epoch;

  // Independent streams: dynamics, each agent's action draws, each agent's
  // demonstration draws, evaluation. Imitation never touches the first two,
  // so c = 0 reproduces task-only trajectories exactly.
  const Rng root(cfg.seed);
  Rng env_rng = root.fork(1);
  Rng eval_rng = root.fork(3);
  std::vector<Rng> act_rng;
  std::vector<Rng> demo_rng;
  for (int k = 0; k < K; ++k) {
    act_rng.push_back(root.fork(100 + k));
    demo_rng.push_back(root.fork(200 + k));
  }

  Dm2Result res;
  res.optimal_return = solve_joint_optimal(game).optimal_return;
  res.threshold = cfg.threshold_fraction * res.optimal_return;
  std::vector<std::vector<double>> targets;
  if (imitation) {
    for (const auto& d : demo_sets) targets.push_back(d.state_frequencies(game.num_states()));
  }
  const auto metric = ground_metric(game);
  const auto& space = game.joint_actions();

  std::int64_t env_steps = 0;
  std::vector<ActionId> acts(K);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const int M = cfg.steps_per_epoch;
    Trajectory batch;
    std::vector<char> terminal(M, 0);
    std::vector<char> truncated(M, 0);
    StateId s = sample_start(game, env_rng);
    int ep_len = 0;
    double env_reward = 0.0;
    for (int t = 0; t < M; ++t) {
      for (int k = 0; k < K; ++k) acts[k] = learners[k].act(s, act_rng[k]);
      const JointActionId ja = space.encode(acts);
      const auto [next, r] = step(game, s, ja, env_rng);
      batch.steps.push_back({s, ja, r, next});
      env_reward += r;
      ++ep_len;
      const bool end = env_rng.uniform() >= game.gamma();
      if (end) {
        terminal[t] = 1;
      } else if (ep_len >= cfg.max_episode_length) {
        truncated[t] = 1;
      }
      if (end || truncated[t]) {
        if (t + 1 < M) s = sample_start(game, env_rng);
        ep_len = 0;
      } else {
        s = next;
      }
    }
    if (!terminal[M - 1]) truncated[M - 1] = 1;
    env_steps += M;

    EpochRecord rec;
    rec.epoch = epoch;
    rec.env_steps = env_steps;
    rec.batch_env_reward = env_reward / M;
    std::vector<StateId> states(M);
    for (int t = 0; t < M; ++t) states[t] = batch.steps[t].state;
    for (int k = 0; k < K; ++k) {
      AgentLearner& me = learners[k];
      double disc_loss = std::numeric_limits<double>::quiet_NaN();
      if (imitation) disc_loss = me.update_discriminator(states, demo_samples, demo_rng[k]);
      StepBatch b;
      b.states = states;
      b.actions.resize(M);
      b.rewards.resize(M);
      b.next_states.resize(M);
      b.terminal = terminal;
      b.truncated = truncated;
      double gsum = 0.0;
      for (int t = 0; t < M; ++t) {
        const auto& st = batch.steps[t];
        b.actions[t] = space.action_of(st.joint_action, k);
        b.next_states[t] = st.next_state;
        const double g = imitation ? me.discriminator_reward(st.state) : 0.0;
        gsum += g;
        b.rewards[t] = env_weight * st.reward + gail_weight * g;
      }
      me.policy_gradient_step(b);
      rec.gail_reward.push_back(imitation ? gsum / M : std::numeric_limits<double>::quiet_NaN());
      rec.disc_loss.push_back(disc_loss);
    }
    if (keep_batches) res.batches.push_back(std::move(batch));

    const JointPolicy learned = joint_of(learners, false);
    const JointPolicy behavior = joint_of(learners, true);
    rec.task_return = task_return(game, learned);
    rec.behavior_return = task_return(game, behavior);
    if (expert) rec.J = joint_action_matching(game, learned, *expert);
    if (epoch % cfg.eval_every == 0) {
      rec.eval_return = monte_carlo_return(game, learned, cfg.eval_episodes, cfg.eval_max_length, eval_rng);
      if (imitation) {
        const auto rho = exact_state_visitation(game, behavior);
        for (int k = 0; k < K; ++k) {
          rec.w1.push_back(wasserstein1(targets[k], rho.values, metric));
          rec.tv.push_back(tv_distance(targets[k], rho.values));
        }
      }
    }
    res.epochs.push_back(std::move(rec));
    if (res.epochs_to_threshold < 0 && res.epochs.back().task_return >= res.threshold) {
      res.epochs_to_threshold = epoch;
      if (cfg.stop_at_threshold) break;
    }
  }
  res.learned = joint_of(learners, false);
  res.behavior = joint_of(learners, true);
  return res;
}

}  // namespace dm2
