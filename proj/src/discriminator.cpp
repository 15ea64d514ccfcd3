#include "dm2/discriminator.hpp"

#include <algorithm>
#include <cmath>

#include "dm2/errors.hpp"
#include "dm2/objectives.hpp"

namespace dm2 {

std::string to_string(DiscMode m) { return m == DiscMode::kStateOnly ? "state_only" : "state_action"; }

namespace {

double sigmoid(double x) {
  x = std::clamp(x, -kLogitClamp, kLogitClamp);
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

// log(sigmoid(x)) without cancellation.
double log_sigmoid(double x) { return x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x)); }

std::vector<double> frequencies(std::span<const int> batch, int size) {
  std::vector<double> p(size, 0.0);
  const double w = 1.0 / static_cast<double>(batch.size());
  for (int x : batch) {
    if (x < 0 || x >= size) throw IndexError("discriminator batch index out of range");
    p[x] += w;
  }
  return p;
}

double balanced_loss(const DiscriminatorTable& d, const std::vector<double>& pe, const std::vector<double>& pa) {
  double loss = 0.0;
  for (int x = 0; x < d.size(); ++x) {
    const double phi = std::clamp(d.logits[x], -kLogitClamp, kLogitClamp);
    if (pe[x] > 0.0) loss -= pe[x] * log_sigmoid(phi);
    if (pa[x] > 0.0) loss -= pa[x] * log_sigmoid(-phi);
  }
  return loss + d.regularizer();
}

}  // namespace

DiscriminatorTable DiscriminatorTable::neutral(int agent_id, DiscMode mode, int num_states, int num_actions) {
  DiscriminatorTable d;
  d.agent_id = agent_id;
  d.mode = mode;
  d.num_states = num_states;
  d.num_actions = mode == DiscMode::kStateOnly ? 1 : num_actions;
  d.logits.assign(static_cast<std::size_t>(num_states) * d.num_actions, 0.0);
  return d;
}

double DiscriminatorTable::value(StateId s, ActionId a) const {
  if (s < 0 || s >= num_states) throw IndexError("state index out of range");
  if (mode == DiscMode::kStateAction && (a < 0 || a >= num_actions)) throw IndexError("action index out of range");
  return sigmoid(logits[index(s, a)]);
}

double DiscriminatorTable::regularizer() const {
  double sq = 0.0;
  for (double v : logits) sq += v * v;
  return lambda * sq;
}

DiscriminatorTable optimal_discriminator(std::span<const double> rho_expert, std::span<const double> rho_agent,
                                         int agent_id, DiscMode mode, int num_states, int num_actions) {
  if (rho_expert.size() != rho_agent.size()) throw InputError("distributions have different supports");
  DiscriminatorTable d = DiscriminatorTable::neutral(agent_id, mode, num_states, num_actions);
  if (static_cast<std::size_t>(d.size()) != rho_expert.size()) throw InputError("distribution size does not match table");
  for (int x = 0; x < d.size(); ++x) {
    const double e = rho_expert[x];
    const double p = rho_agent[x];
    if (e < 0.0 || p < 0.0) throw InputError("distributions must be nonnegative");
    if (e == 0.0 && p == 0.0) {
      d.logits[x] = 0.0;
    } else if (p == 0.0) {
      d.logits[x] = kLogitClamp;
    } else if (e == 0.0) {
      d.logits[x] = -kLogitClamp;
    } else {
      d.logits[x] = std::clamp(std::log(e) - std::log(p), -kLogitClamp, kLogitClamp);
    }
  }
  return d;
}

DiscriminatorTable optimal_discriminator(const VisitationDistribution& rho_expert,
                                         const VisitationDistribution& rho_agent, int agent_id) {
  if (rho_expert.kind != rho_agent.kind || rho_expert.columns != rho_agent.columns ||
      rho_expert.num_states != rho_agent.num_states) {
    throw InputError("distributions have different supports");
  }
  const DiscMode mode = rho_expert.kind == VisitationKind::kState ? DiscMode::kStateOnly : DiscMode::kStateAction;
  if (rho_expert.kind == VisitationKind::kStateActionJoint) {
    throw UnsupportedInputError("discriminators are per-agent; joint state-action tables are not supported");
  }
  return optimal_discriminator(rho_expert.values, rho_agent.values, agent_id, mode, rho_expert.num_states,
                               rho_expert.columns);
}

double discriminator_loss(const DiscriminatorTable& disc, std::span<const int> expert_batch,
                          std::span<const int> agent_batch) {
  if (expert_batch.empty() || agent_batch.empty()) throw InputError("discriminator batches must be non-empty");
  return balanced_loss(disc, frequencies(expert_batch, disc.size()), frequencies(agent_batch, disc.size()));
}

DiscriminatorTable train_discriminator(DiscriminatorTable disc, std::span<const int> expert_batch,
                                       std::span<const int> agent_batch, int epochs, double lr) {
  if (expert_batch.empty() || agent_batch.empty()) throw InputError("discriminator batches must be non-empty");
  if (epochs < 0) throw InputError("epochs must be nonnegative");
  if (!(lr > 0.0 && lr <= 8.0)) throw InputError("learning rate must lie in (0, 8]");
  const auto pe = frequencies(expert_batch, disc.size());
  const auto pa = frequencies(agent_batch, disc.size());
  for (int e = 0; e < epochs; ++e) {
    for (int x = 0; x < disc.size(); ++x) {
      const double precond = pe[x] + pa[x] + 8.0 * disc.lambda;
      if (precond == 0.0) continue;
      const double phi = disc.logits[x];
      const double D = sigmoid(phi);
      const double grad = -pe[x] * (1.0 - D) + pa[x] * D + 2.0 * disc.lambda * phi;
      disc.logits[x] = std::clamp(phi - lr * grad / precond, -kLogitClamp, kLogitClamp);
    }
    disc.loss_history.push_back(balanced_loss(disc, pe, pa));
  }
  return disc;
}

std::string to_string(RewardKind k) {
  switch (k) {
    case RewardKind::kGailD: return "gail_d";
    case RewardKind::kGailNegLogOneMinusD: return "gail_neg_log_one_minus_d";
    case RewardKind::kAssumption1: return "assumption1";
  }
  return "unknown";
}

RewardKind reward_kind_from_string(const std::string& s) {
  if (s == "gail_d") return RewardKind::kGailD;
  if (s == "gail_neg_log_one_minus_d") return RewardKind::kGailNegLogOneMinusD;
  if (s == "assumption1") return RewardKind::kAssumption1;
  throw ConfigError("unknown reward kind '" + s + "'");
}

RewardModel RewardModel::gail(DiscriminatorTable disc, RewardKind kind) {
  if (kind == RewardKind::kAssumption1) throw ConfigError("assumption1 rewards are built from an expert policy");
  RewardModel m;
  m.kind = kind;
  m.agent_id = disc.agent_id;
  m.disc = std::move(disc);
  return m;
}

RewardModel RewardModel::assumption1(const TabularPolicy& expert, double c) {
  if (!(c > 0.0) || !std::isfinite(c)) throw ConfigError("assumption1 scale c must be positive");
  RewardModel m;
  m.kind = RewardKind::kAssumption1;
  m.agent_id = expert.agent_id();
  m.c = c;
  m.expert_actions = expert.actions();
  m.disc.num_states = expert.num_states();
  m.disc.num_actions = expert.num_actions();
  return m;
}

double RewardModel::operator()(StateId s, ActionId a) const {
  switch (kind) {
    case RewardKind::kAssumption1:
      if (s < 0 || s >= static_cast<int>(expert_actions.size())) throw IndexError("state index out of range");
      if (a < 0 || a >= disc.num_actions) throw IndexError("action index out of range");
      return a == expert_actions[s] ? c : 0.0;
    case RewardKind::kGailD:
      return disc.value(s, a);
    case RewardKind::kGailNegLogOneMinusD:
      // -log(1 - sigmoid(phi)) = -log_sigmoid(-phi)
      disc.value(s, a);
      return -log_sigmoid(-std::clamp(disc.logits[disc.index(s, a)], -kLogitClamp, kLogitClamp));
  }
  return 0.0;
}

std::vector<double> RewardModel::table(int num_states, int num_actions) const {
  std::vector<double> t(static_cast<std::size_t>(num_states) * num_actions);
  for (StateId s = 0; s < num_states; ++s) {
    for (ActionId a = 0; a < num_actions; ++a) {
      const ActionId col = (kind != RewardKind::kAssumption1 && disc.mode == DiscMode::kStateOnly) ? 0 : a;
      t[static_cast<std::size_t>(s) * num_actions + a] = (*this)(s, col);
    }
  }
  return t;
}

double gail_reward(const RewardModel& model, StateId s, ActionId a) {
  if (model.kind != RewardKind::kAssumption1 && model.disc.mode == DiscMode::kStateOnly) a = 0;
  return model(s, a);
}

double gail_loss(const MarkovGame& game, int agent, const JointPolicy& policy, const ExpertBundle& expert,
                 const RewardModel& reward) {
  return value_of(game, expert.joint_policy, reward, agent) - value_of(game, policy, reward, agent) -
         reward.regularizer();
}

nlohmann::json discriminator_to_json(const DiscriminatorTable& d) {
  nlohmann::json j;
  j["agent_id"] = d.agent_id;
  j["mode"] = to_string(d.mode);
  j["num_states"] = d.num_states;
  j["num_actions"] = d.num_actions;
  j["lambda"] = d.lambda;
  j["logits"] = d.logits;
  std::vector<double> values(d.logits.size());
  for (std::size_t x = 0; x < values.size(); ++x) values[x] = sigmoid(d.logits[x]);
  j["values"] = values;
  j["loss_history"] = d.loss_history;
  return j;
}

}  // namespace dm2
