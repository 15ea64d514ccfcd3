#include "dm2/game.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "dm2/errors.hpp"

namespace dm2 {

namespace {

void check_distribution(std::span<const double> p, double tol, const std::string& what) {
  double sum = 0.0;
  for (double v : p) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw InputError(what + ": negative or non-finite probability");
    sum += v;
  }
  if (std::abs(sum - 1.0) > tol) {
    std::ostringstream os;
    os << what << ": probabilities sum to " << sum;
    throw InputError(os.str());
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// JointActionSpace

JointActionSpace::JointActionSpace(std::vector<int> actions_per_agent) : sizes_(std::move(actions_per_agent)) {
  if (sizes_.empty()) throw ConfigError("joint action space needs at least one agent");
  strides_.assign(sizes_.size(), 1);
  size_ = 1;
  for (int i = static_cast<int>(sizes_.size()) - 1; i >= 0; --i) {
    if (sizes_[i] <= 0) throw ConfigError("every agent needs at least one action");
    strides_[i] = size_;
    size_ *= sizes_[i];
  }
}

int JointActionSpace::num_actions(int agent) const {
  if (agent < 0 || agent >= num_agents()) throw IndexError("agent index out of range");
  return sizes_[agent];
}

JointActionId JointActionSpace::encode(std::span<const ActionId> actions) const {
  if (static_cast<int>(actions.size()) != num_agents()) throw IndexError("joint action has wrong arity");
  JointActionId joint = 0;
  for (int i = 0; i < num_agents(); ++i) {
    if (actions[i] < 0 || actions[i] >= sizes_[i]) throw IndexError("action index out of range");
    joint += actions[i] * strides_[i];
  }
  return joint;
}

std::vector<ActionId> JointActionSpace::decode(JointActionId joint) const {
  if (joint < 0 || joint >= size_) throw IndexError("joint action index out of range");
  std::vector<ActionId> out(sizes_.size());
  for (int i = 0; i < num_agents(); ++i) out[i] = action_of(joint, i);
  return out;
}

// ---------------------------------------------------------------------------
// MarkovGame

MarkovGame::MarkovGame(GameDefinition def) : def_(std::move(def)), joint_(def_.actions_per_agent) {
  const int S = def_.num_states;
  if (S <= 0) throw ConfigError("game needs at least one state");
  if (!(def_.gamma >= 0.0 && def_.gamma < 1.0)) throw ConfigError("discount must lie in [0, 1)");
  const std::size_t rows = static_cast<std::size_t>(S) * joint_.size();
  if (def_.transitions.size() != rows) throw ConfigError("transition table has wrong number of rows");
  if (def_.reward.size() != rows) throw ConfigError("reward table has wrong size");
  if (static_cast<int>(def_.start.size()) != S) throw ConfigError("start distribution has wrong size");
  try {
    check_distribution(def_.start, kDistributionTolerance, "start distribution");
  } catch (const InputError& e) {
    throw ConfigError(e.what());
  }
  for (std::size_t r = 0; r < rows; ++r) {
    double sum = 0.0;
    for (const auto& [next, prob] : def_.transitions[r]) {
      if (next < 0 || next >= S) throw ConfigError("transition targets an invalid state");
      if (!(prob >= 0.0) || !std::isfinite(prob)) throw ConfigError("negative transition probability");
      sum += prob;
    }
    if (std::abs(sum - 1.0) > kDistributionTolerance) {
      std::ostringstream os;
      os << "transition row " << r << " sums to " << sum;
      throw ConfigError(os.str());
    }
  }
  for (double r : def_.reward) {
    if (!std::isfinite(r)) throw ConfigError("non-finite task reward");
  }
  if (!def_.state_features.empty() && static_cast<int>(def_.state_features.size()) != S) {
    throw ConfigError("state_features must have one entry per state");
  }
  if (!def_.state_labels.empty() && static_cast<int>(def_.state_labels.size()) != S) {
    throw ConfigError("state_labels must have one entry per state");
  }
}

void MarkovGame::check_state(StateId s) const {
  if (s < 0 || s >= num_states()) throw IndexError("state index out of range");
}

void MarkovGame::check_joint_action(JointActionId a) const {
  if (a < 0 || a >= num_joint_actions()) throw IndexError("joint action index out of range");
}

void MarkovGame::check_agent(int agent) const {
  if (agent < 0 || agent >= num_agents()) throw IndexError("agent index out of range");
}

std::span<const TransitionEntry> MarkovGame::transitions(StateId s, JointActionId a) const {
  return def_.transitions[static_cast<std::size_t>(s) * joint_.size() + a];
}

double MarkovGame::reward(StateId s, JointActionId a) const {
  return def_.reward[static_cast<std::size_t>(s) * joint_.size() + a];
}

// ---------------------------------------------------------------------------
// Policies

TabularPolicy::TabularPolicy(int agent_id, int num_states, int num_actions, std::vector<double> probs)
    : agent_id_(agent_id), num_states_(num_states), num_actions_(num_actions), probs_(std::move(probs)) {
  if (num_states <= 0 || num_actions <= 0) throw InputError("policy dimensions must be positive");
  if (probs_.size() != static_cast<std::size_t>(num_states) * num_actions) {
    throw InputError("policy table has wrong size");
  }
  for (int s = 0; s < num_states_; ++s) check_distribution(row(s), kDistributionTolerance, "policy row");
}

TabularPolicy TabularPolicy::uniform(int agent_id, int num_states, int num_actions) {
  return TabularPolicy(agent_id, num_states, num_actions,
                       std::vector<double>(static_cast<std::size_t>(num_states) * num_actions, 1.0 / num_actions));
}

TabularPolicy TabularPolicy::deterministic(int agent_id, int num_actions, std::span<const ActionId> actions) {
  const int S = static_cast<int>(actions.size());
  std::vector<double> probs(static_cast<std::size_t>(S) * num_actions, 0.0);
  for (int s = 0; s < S; ++s) {
    if (actions[s] < 0 || actions[s] >= num_actions) throw IndexError("action index out of range");
    probs[static_cast<std::size_t>(s) * num_actions + actions[s]] = 1.0;
  }
  return TabularPolicy(agent_id, S, num_actions, std::move(probs));
}

bool TabularPolicy::is_deterministic() const {
  for (double p : probs_) {
    if (p != 0.0 && p != 1.0) return false;
  }
  return true;
}

ActionId TabularPolicy::action(StateId s) const {
  const auto r = row(s);
  for (int a = 0; a < num_actions_; ++a) {
    if (r[a] == 1.0) return a;
    if (r[a] != 0.0) break;
  }
  throw UnsupportedInputError("policy row is not deterministic");
}

std::vector<ActionId> TabularPolicy::actions() const {
  std::vector<ActionId> out(num_states_);
  for (int s = 0; s < num_states_; ++s) out[s] = action(s);
  return out;
}

JointPolicy::JointPolicy(std::vector<TabularPolicy> policies) : policies_(std::move(policies)) {
  if (policies_.empty()) throw InputError("joint policy needs at least one agent");
  for (std::size_t i = 0; i < policies_.size(); ++i) {
    if (policies_[i].num_states() != policies_[0].num_states()) {
      throw InputError("agent policies disagree on the number of states");
    }
  }
}

std::vector<double> JointPolicy::joint_row(const JointActionSpace& space, StateId s) const {
  std::vector<double> row(space.size(), 1.0);
  for (JointActionId a = 0; a < space.size(); ++a) {
    double p = 1.0;
    for (int i = 0; i < num_agents(); ++i) p *= policies_[i].prob(s, space.action_of(a, i));
    row[a] = p;
  }
  return row;
}

double JointPolicy::joint_prob(const JointActionSpace& space, StateId s, JointActionId a) const {
  double p = 1.0;
  for (int i = 0; i < num_agents(); ++i) p *= policies_[i].prob(s, space.action_of(a, i));
  return p;
}

bool JointPolicy::is_deterministic() const {
  for (const auto& p : policies_) {
    if (!p.is_deterministic()) return false;
  }
  return true;
}

void validate_policy(const MarkovGame& game, const JointPolicy& policy) {
  if (policy.num_agents() != game.num_agents()) throw InputError("joint policy has wrong number of agents");
  for (int i = 0; i < policy.num_agents(); ++i) {
    const auto& p = policy.agent(i);
    if (p.num_states() != game.num_states() || p.num_actions() != game.num_actions(i)) {
      throw InputError("agent policy dimensions do not match the game");
    }
  }
}

// ---------------------------------------------------------------------------
// Visitation

std::vector<double> VisitationDistribution::state_marginal() const {
  std::vector<double> out(num_states, 0.0);
  for (int s = 0; s < num_states; ++s) {
    for (int c = 0; c < columns; ++c) out[s] += at(s, c);
  }
  return out;
}

double VisitationDistribution::total() const { return std::accumulate(values.begin(), values.end(), 0.0); }

// ---------------------------------------------------------------------------
// Sampling

StepResult step(const MarkovGame& game, StateId s, JointActionId a, Rng& rng) {
  game.check_state(s);
  game.check_joint_action(a);
  const auto row = game.transitions(s, a);
  StateId next = row.back().next;
  if (row.size() > 1) {
    const double u = rng.uniform();
    double acc = 0.0;
    for (const auto& e : row) {
      acc += e.prob;
      if (u < acc) {
        next = e.next;
        break;
      }
    }
  }
  return {next, game.reward(s, a)};
}

StateId sample_start(const MarkovGame& game, Rng& rng) { return rng.categorical(game.start()); }

JointActionId sample_joint_action(const MarkovGame& game, const JointPolicy& policy, StateId s, Rng& rng) {
  std::vector<ActionId> actions(game.num_agents());
  for (int i = 0; i < game.num_agents(); ++i) actions[i] = rng.categorical(policy.agent(i).row(s));
  return game.joint_actions().encode(actions);
}

Trajectory rollout(const MarkovGame& game, const JointPolicy& policy, int horizon, Rng& rng) {
  if (horizon < 1) throw InputError("rollout horizon must be at least 1");
  validate_policy(game, policy);
  Trajectory traj;
  traj.seed = rng.seed();
  traj.steps.reserve(horizon);
  StateId s = sample_start(game, rng);
  for (int t = 0; t < horizon; ++t) {
    const JointActionId a = sample_joint_action(game, policy, s, rng);
    const auto [next, r] = step(game, s, a, rng);
    traj.steps.push_back({s, a, r, next});
    s = next;
  }
  return traj;
}

Trajectory rollout_discounted(const MarkovGame& game, const JointPolicy& policy, int max_length, Rng& rng) {
  if (max_length < 1) throw InputError("episode length must be at least 1");
  validate_policy(game, policy);
  Trajectory traj;
  traj.seed = rng.seed();
  StateId s = sample_start(game, rng);
  for (int t = 0; t < max_length; ++t) {
    const JointActionId a = sample_joint_action(game, policy, s, rng);
    const auto [next, r] = step(game, s, a, rng);
    traj.steps.push_back({s, a, r, next});
    if (rng.uniform() >= game.gamma()) break;
    s = next;
  }
  return traj;
}

// ---------------------------------------------------------------------------
// Exact occupancies

Eigen::MatrixXd state_transition_matrix(const MarkovGame& game, const JointPolicy& policy) {
  validate_policy(game, policy);
  const int S = game.num_states();
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(S, S);
  for (StateId s = 0; s < S; ++s) {
    const auto row = policy.joint_row(game.joint_actions(), s);
    for (JointActionId a = 0; a < game.num_joint_actions(); ++a) {
      if (row[a] == 0.0) continue;
      for (const auto& [next, prob] : game.transitions(s, a)) M(s, next) += row[a] * prob;
    }
  }
  return M;
}

VisitationDistribution exact_state_visitation(const MarkovGame& game, const JointPolicy& policy) {
  const int S = game.num_states();
  const double gamma = game.gamma();
  const Eigen::MatrixXd M = state_transition_matrix(game, policy);
  Eigen::MatrixXd A = Eigen::MatrixXd::Identity(S, S) - gamma * M.transpose();
  Eigen::VectorXd b(S);
  for (int s = 0; s < S; ++s) b(s) = (1.0 - gamma) * game.start()[s];
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(A);
  Eigen::VectorXd rho = lu.solve(b);
  if (!rho.allFinite()) throw NumericError("occupancy solve produced non-finite values");

  VisitationDistribution out;
  out.kind = VisitationKind::kState;
  out.source = VisitationSource::kExact;
  out.num_states = S;
  out.columns = 1;
  out.gamma = gamma;
  out.values.resize(S);
  for (int s = 0; s < S; ++s) out.values[s] = std::max(0.0, rho(s));  // clears -1e-18 style roundoff
  return out;
}

VisitationDistribution joint_state_action_visitation(const MarkovGame& game, const JointPolicy& policy) {
  const auto rho = exact_state_visitation(game, policy);
  const int S = game.num_states();
  const int JA = game.num_joint_actions();
  VisitationDistribution out;
  out.kind = VisitationKind::kStateActionJoint;
  out.num_states = S;
  out.columns = JA;
  out.gamma = game.gamma();
  out.values.resize(static_cast<std::size_t>(S) * JA);
  for (StateId s = 0; s < S; ++s) {
    const auto row = policy.joint_row(game.joint_actions(), s);
    for (JointActionId a = 0; a < JA; ++a) out.values[static_cast<std::size_t>(s) * JA + a] = rho.values[s] * row[a];
  }
  return out;
}

VisitationDistribution marginal_visitation(const MarkovGame& game, int agent, const JointPolicy& policy) {
  game.check_agent(agent);
  const auto rho = exact_state_visitation(game, policy);
  const int S = game.num_states();
  const int A = game.num_actions(agent);
  VisitationDistribution out;
  out.kind = VisitationKind::kStateActionMarginal;
  out.num_states = S;
  out.columns = A;
  out.agent = agent;
  out.gamma = game.gamma();
  out.values.resize(static_cast<std::size_t>(S) * A);
  for (StateId s = 0; s < S; ++s) {
    for (ActionId a = 0; a < A; ++a) out.values[static_cast<std::size_t>(s) * A + a] = rho.values[s] * policy.agent(agent).prob(s, a);
  }
  return out;
}

namespace {

template <typename Visit>
void restart_chain(const MarkovGame& game, const JointPolicy& policy, std::int64_t n_samples, Rng& rng, Visit visit) {
  StateId s = sample_start(game, rng);
  for (std::int64_t n = 0; n < n_samples; ++n) {
    const JointActionId a = sample_joint_action(game, policy, s, rng);
    visit(s, a);
    if (rng.uniform() >= game.gamma()) {
      s = sample_start(game, rng);
    } else {
      s = step(game, s, a, rng).next_state;
    }
  }
}

}  // namespace

VisitationDistribution empirical_state_visitation(const MarkovGame& game, const JointPolicy& policy,
                                                  std::int64_t n_samples, Rng& rng) {
  if (n_samples <= 0) throw InputError("need a positive sample count");
  validate_policy(game, policy);
  VisitationDistribution out;
  out.kind = VisitationKind::kState;
  out.source = VisitationSource::kEmpirical;
  out.num_states = game.num_states();
  out.gamma = game.gamma();
  out.n_samples = n_samples;
  std::vector<std::int64_t> counts(game.num_states(), 0);
  restart_chain(game, policy, n_samples, rng, [&](StateId s, JointActionId) { ++counts[s]; });
  out.values.resize(counts.size());
  for (std::size_t s = 0; s < counts.size(); ++s) out.values[s] = static_cast<double>(counts[s]) / n_samples;
  return out;
}

VisitationDistribution empirical_joint_visitation(const MarkovGame& game, const JointPolicy& policy,
                                                  std::int64_t n_samples, Rng& rng) {
  if (n_samples <= 0) throw InputError("need a positive sample count");
  validate_policy(game, policy);
  const int JA = game.num_joint_actions();
  VisitationDistribution out;
  out.kind = VisitationKind::kStateActionJoint;
  out.source = VisitationSource::kEmpirical;
  out.num_states = game.num_states();
  out.columns = JA;
  out.gamma = game.gamma();
  out.n_samples = n_samples;
  std::vector<std::int64_t> counts(static_cast<std::size_t>(game.num_states()) * JA, 0);
  restart_chain(game, policy, n_samples, rng,
                [&](StateId s, JointActionId a) { ++counts[static_cast<std::size_t>(s) * JA + a]; });
  out.values.resize(counts.size());
  for (std::size_t k = 0; k < counts.size(); ++k) out.values[k] = static_cast<double>(counts[k]) / n_samples;
  return out;
}

std::vector<double> evaluate_joint_reward(const MarkovGame& game, const JointPolicy& policy,
                                          std::span<const double> joint_reward) {
  const int S = game.num_states();
  const int JA = game.num_joint_actions();
  if (joint_reward.size() != static_cast<std::size_t>(S) * JA) throw InputError("reward table has wrong size");
  const Eigen::MatrixXd M = state_transition_matrix(game, policy);
  Eigen::VectorXd r(S);
  for (StateId s = 0; s < S; ++s) {
    const auto row = policy.joint_row(game.joint_actions(), s);
    double acc = 0.0;
    for (JointActionId a = 0; a < JA; ++a) acc += row[a] * joint_reward[static_cast<std::size_t>(s) * JA + a];
    r(s) = acc;
  }
  Eigen::MatrixXd A = Eigen::MatrixXd::Identity(S, S) - game.gamma() * M;
  Eigen::VectorXd v = A.partialPivLu().solve(r);
  if (!v.allFinite()) throw NumericError("policy evaluation produced non-finite values");
  return {v.data(), v.data() + S};
}

double task_return(const MarkovGame& game, const JointPolicy& policy) {
  const auto v = evaluate_joint_reward(game, policy, game.rewards());
  double acc = 0.0;
  for (int s = 0; s < game.num_states(); ++s) acc += game.start()[s] * v[s];
  return acc;
}

// ---------------------------------------------------------------------------
// Serialization

nlohmann::json game_to_json(const MarkovGame& game) {
  const auto& d = game.definition();
  nlohmann::json j;
  j["format"] = "dm2-game";
  j["version"] = 1;
  j["name"] = d.name;
  j["num_states"] = d.num_states;
  j["actions_per_agent"] = d.actions_per_agent;
  j["gamma"] = d.gamma;
  j["start"] = d.start;
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : d.transitions) {
    nlohmann::json r = nlohmann::json::array();
    for (const auto& e : row) r.push_back({e.next, e.prob});
    rows.push_back(std::move(r));
  }
  j["transitions"] = std::move(rows);
  j["reward"] = d.reward;
  if (!d.state_features.empty()) j["state_features"] = d.state_features;
  if (!d.state_labels.empty()) j["state_labels"] = d.state_labels;
  return j;
}

MarkovGame game_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "dm2-game") throw ConfigError("not a dm2-game document");
    GameDefinition d;
    d.name = j.value("name", "");
    d.num_states = j.at("num_states").get<int>();
    d.actions_per_agent = j.at("actions_per_agent").get<std::vector<int>>();
    d.gamma = j.at("gamma").get<double>();
    d.start = j.at("start").get<std::vector<double>>();
    for (const auto& row : j.at("transitions")) {
      std::vector<TransitionEntry> entries;
      for (const auto& e : row) entries.push_back({e.at(0).get<int>(), e.at(1).get<double>()});
      d.transitions.push_back(std::move(entries));
    }
    d.reward = j.at("reward").get<std::vector<double>>();
    if (j.contains("state_features")) d.state_features = j.at("state_features").get<std::vector<std::vector<int>>>();
    if (j.contains("state_labels")) d.state_labels = j.at("state_labels").get<std::vector<std::string>>();
    return MarkovGame(std::move(d));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed game file: ") + e.what());
  }
}

void save_game(const MarkovGame& game, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open " + path + " for writing");
  out << game_to_json(game).dump(1) << '\n';
}

MarkovGame load_game(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("cannot parse ") + path + ": " + e.what());
  }
  return game_from_json(j);
}

nlohmann::json policy_to_json(const JointPolicy& policy) {
  nlohmann::json agents = nlohmann::json::array();
  for (const auto& p : policy.policies()) {
    agents.push_back({{"agent_id", p.agent_id()},
                      {"num_states", p.num_states()},
                      {"num_actions", p.num_actions()},
                      {"probs", p.probs()}});
  }
  return {{"agents", agents}};
}

JointPolicy policy_from_json(const nlohmann::json& j) {
  std::vector<TabularPolicy> out;
  for (const auto& a : j.at("agents")) {
    out.emplace_back(a.at("agent_id").get<int>(), a.at("num_states").get<int>(), a.at("num_actions").get<int>(),
                     a.at("probs").get<std::vector<double>>());
  }
  return JointPolicy(std::move(out));
}

}  // namespace dm2
