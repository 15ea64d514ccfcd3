#include "dm2/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dm2/errors.hpp"

namespace dm2 {

namespace {

void check_expert(const MarkovGame& game, const JointPolicy& expert) {
  validate_policy(game, expert);
  if (!expert.is_deterministic()) throw UnsupportedInputError("expert policies must be deterministic");
}

// sum_i (1/c) E_{a ~ pi_i}[r_i(s, a)] per state.
std::vector<double> normalized_rewards(const MarkovGame& game, const JointPolicy& policy,
                                       std::span<const RewardModel> rewards) {
  if (static_cast<int>(rewards.size()) != game.num_agents()) throw ConfigError("one reward model per agent required");
  const double c = rewards.front().c;
  for (int i = 0; i < game.num_agents(); ++i) {
    if (rewards[i].kind != RewardKind::kAssumption1) throw ConfigError("bounds need assumption1 reward models");
    if (rewards[i].agent_id != i) throw ConfigError("reward models must be listed in agent order");
    if (rewards[i].c != c) throw ConfigError("reward models must share a common c");
  }
  std::vector<double> out(game.num_states(), 0.0);
  for (int i = 0; i < game.num_agents(); ++i) {
    const auto& pi = policy.agent(i);
    for (StateId s = 0; s < game.num_states(); ++s) {
      double e = 0.0;
      for (ActionId a = 0; a < pi.num_actions(); ++a) e += pi.prob(s, a) * rewards[i](s, a);
      out[s] += e / c;
    }
  }
  return out;
}

}  // namespace

std::vector<double> joint_match_probability(const MarkovGame& game, const JointPolicy& policy,
                                            const JointPolicy& expert) {
  check_expert(game, expert);
  validate_policy(game, policy);
  std::vector<double> m(game.num_states(), 1.0);
  for (int i = 0; i < game.num_agents(); ++i) {
    for (StateId s = 0; s < game.num_states(); ++s) m[s] *= policy.agent(i).prob(s, expert.agent(i).action(s));
  }
  return m;
}

double joint_action_matching(const MarkovGame& game, const JointPolicy& policy, const JointPolicy& expert) {
  const auto m = joint_match_probability(game, policy, expert);
  const auto rho = exact_state_visitation(game, policy);
  double j = 0.0;
  for (StateId s = 0; s < game.num_states(); ++s) j += rho.values[s] * ((game.num_agents() - 1) + m[s]);
  return j;
}

double joint_action_matching(const MarkovGame& game, const JointPolicy& policy, const ExpertBundle& expert) {
  return joint_action_matching(game, policy, expert.joint_policy);
}

double lower_bound_L(const MarkovGame& game, const JointPolicy& policy, std::span<const RewardModel> rewards) {
  const auto per_state = normalized_rewards(game, policy, rewards);
  const auto rho = exact_state_visitation(game, policy);
  double l = 0.0;
  for (StateId s = 0; s < game.num_states(); ++s) l += rho.values[s] * per_state[s];
  return l;
}

double lower_bound_L_eps(const MarkovGame& game, const JointPolicy& policy, std::span<const RewardModel> rewards,
                         double epsilon) {
  if (!(epsilon > 0.0)) throw InputError("epsilon must be positive");
  const auto per_state = normalized_rewards(game, policy, rewards);
  double l = 0.0;
  for (double v : per_state) l += v;
  return epsilon * l;
}

double value_of_table(const MarkovGame& game, const JointPolicy& policy, int agent,
                      std::span<const double> reward_table) {
  game.check_agent(agent);
  const int A = game.num_actions(agent);
  if (reward_table.size() != static_cast<std::size_t>(game.num_states()) * A) {
    throw InputError("reward table has wrong size");
  }
  const auto rho = exact_state_visitation(game, policy);
  const auto& pi = policy.agent(agent);
  double v = 0.0;
  for (StateId s = 0; s < game.num_states(); ++s) {
    double e = 0.0;
    for (ActionId a = 0; a < A; ++a) e += pi.prob(s, a) * reward_table[static_cast<std::size_t>(s) * A + a];
    v += rho.values[s] * e;
  }
  return v / (1.0 - game.gamma());
}

double value_of(const MarkovGame& game, const JointPolicy& policy, const RewardModel& reward, int agent) {
  game.check_agent(agent);
  return value_of_table(game, policy, agent, reward.table(game.num_states(), game.num_actions(agent)));
}

double tv_distance(std::span<const double> mu, std::span<const double> nu) {
  if (mu.size() != nu.size()) throw InputError("distributions have different supports");
  double d = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) d += std::abs(mu[i] - nu[i]);
  return 0.5 * d;
}

double wasserstein1(std::span<const double> mu, std::span<const double> nu, const Eigen::MatrixXd& metric) {
  const int n = static_cast<int>(mu.size());
  if (static_cast<int>(nu.size()) != n) throw InputError("distributions have different supports");
  if (metric.rows() != n || metric.cols() != n) throw InputError("ground metric does not match the support");
  double tm = 0.0;
  double tn = 0.0;
  for (int i = 0; i < n; ++i) {
    if (!(mu[i] >= 0.0) || !(nu[i] >= 0.0)) throw InputError("distributions must be nonnegative");
    tm += mu[i];
    tn += nu[i];
    for (int j = 0; j < n; ++j) {
      const double d = metric(i, j);
      if (!(d >= 0.0) || d != metric(j, i) || (i == j && d != 0.0)) {
        throw InputError("ground metric must be symmetric, nonnegative, and zero on the diagonal");
      }
    }
  }
  if (std::abs(tm - tn) > 1e-9) throw InputError("distributions carry different total mass");

  // Successive shortest paths on the bipartite supply/demand graph, with
  // Johnson potentials so Dijkstra runs on nonnegative reduced costs.
  std::vector<int> src;
  std::vector<int> dst;
  for (int i = 0; i < n; ++i) {
    if (mu[i] > 0.0) src.push_back(i);
    if (nu[i] > 0.0) dst.push_back(i);
  }
  const int n1 = static_cast<int>(src.size());
  const int n2 = static_cast<int>(dst.size());
  if (n1 == 0 || n2 == 0) return 0.0;
  std::vector<double> supply(n1);
  std::vector<double> demand(n2);
  for (int i = 0; i < n1; ++i) supply[i] = mu[src[i]];
  for (int j = 0; j < n2; ++j) demand[j] = nu[dst[j]];
  Eigen::MatrixXd cost(n1, n2);
  for (int i = 0; i < n1; ++i) {
    for (int j = 0; j < n2; ++j) cost(i, j) = metric(src[i], dst[j]);
  }
  Eigen::MatrixXd flow = Eigen::MatrixXd::Zero(n1, n2);
  // Nodes 0..n1-1 are sources, n1..n1+n2-1 are sinks.
  const int N = n1 + n2;
  std::vector<double> pot(N, 0.0);
  std::vector<double> dist(N);
  std::vector<int> parent(N);
  std::vector<char> done(N);
  const double inf = std::numeric_limits<double>::infinity();

  while (true) {
    std::fill(dist.begin(), dist.end(), inf);
    std::fill(parent.begin(), parent.end(), -1);
    std::fill(done.begin(), done.end(), 0);
    for (int i = 0; i < n1; ++i) {
      if (supply[i] > 0.0) dist[i] = 0.0;
    }
    int target = -1;
    while (true) {
      int u = -1;
      for (int v = 0; v < N; ++v) {
        if (!done[v] && dist[v] < inf && (u < 0 || dist[v] < dist[u])) u = v;
      }
      if (u < 0) break;
      done[u] = 1;
      if (u >= n1 && demand[u - n1] > 0.0) {
        target = u;
        break;
      }
      if (u < n1) {
        for (int j = 0; j < n2; ++j) {
          const int v = n1 + j;
          if (done[v]) continue;
          const double nd = dist[u] + std::max(0.0, cost(u, j) + pot[u] - pot[v]);
          if (nd < dist[v]) {
            dist[v] = nd;
            parent[v] = u;
          }
        }
      } else {
        const int j = u - n1;
        for (int i = 0; i < n1; ++i) {
          if (done[i] || flow(i, j) <= 0.0) continue;
          const double nd = dist[u] + std::max(0.0, -cost(i, j) + pot[u] - pot[i]);
          if (nd < dist[i]) {
            dist[i] = nd;
            parent[i] = u;
          }
        }
      }
    }
    if (target < 0) break;
    const double dt = dist[target];
    for (int v = 0; v < N; ++v) pot[v] += std::min(dist[v], dt);

    double amount = demand[target - n1];
    int v = target;
    while (parent[v] >= 0) {
      const int u = parent[v];
      if (u >= n1) amount = std::min(amount, flow(v, u - n1));
      v = u;
    }
    amount = std::min(amount, supply[v]);
    const int origin = v;
    v = target;
    while (parent[v] >= 0) {
      const int u = parent[v];
      if (u < n1) {
        flow(u, v - n1) += amount;
      } else {
        flow(v, u - n1) -= amount;
        if (flow(v, u - n1) < 0.0) flow(v, u - n1) = 0.0;
      }
      v = u;
    }
    supply[origin] -= amount;
    demand[target - n1] -= amount;
    if (amount <= 0.0) break;
  }
  return flow.cwiseProduct(cost).sum();
}

Eigen::MatrixXd ground_metric(const MarkovGame& game) {
  const int S = game.num_states();
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(S, S);
  const auto& f = game.state_features();
  for (int a = 0; a < S; ++a) {
    for (int b = 0; b < S; ++b) {
      if (a == b) continue;
      if (f.empty()) {
        d(a, b) = 1.0;
      } else {
        double m = 0.0;
        for (std::size_t k = 0; k < f[a].size(); ++k) m += std::abs(f[a][k] - f[b][k]);
        d(a, b) = m;
      }
    }
  }
  return d;
}

std::vector<double> exploration_floor_per_state(const MarkovGame& game, double iota) {
  if (!(iota > 0.0 && iota <= 1.0)) throw InputError("iota must lie in (0, 1]");
  const int S = game.num_states();
  double kappa = 1.0;
  for (int i = 0; i < game.num_agents(); ++i) kappa *= iota / game.num_actions(i);
  // Every joint action has probability >= kappa, so M_pi >= kappa B entrywise
  // and (I - gamma M_pi)^-1 >= (I - gamma kappa B)^-1.
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(S, S);
  for (StateId s = 0; s < S; ++s) {
    for (JointActionId a = 0; a < game.num_joint_actions(); ++a) {
      for (const auto& [next, p] : game.transitions(s, a)) B(s, next) += p;
    }
  }
  Eigen::MatrixXd lhs = Eigen::MatrixXd::Identity(S, S) - game.gamma() * kappa * B.transpose();
  Eigen::VectorXd rhs(S);
  for (int s = 0; s < S; ++s) rhs(s) = (1.0 - game.gamma()) * game.start()[s];
  Eigen::VectorXd floor = lhs.partialPivLu().solve(rhs);
  if (!floor.allFinite()) throw NumericError("exploration floor solve failed");
  std::vector<double> out(S);
  for (int s = 0; s < S; ++s) out[s] = std::max(0.0, floor(s));
  return out;
}

double exploration_floor(const MarkovGame& game, double iota) {
  const auto f = exploration_floor_per_state(game, iota);
  return *std::min_element(f.begin(), f.end());
}

ObjectiveReport evaluate_objectives(const MarkovGame& game, const JointPolicy& policy, const JointPolicy& expert,
                                    std::span<const RewardModel> rewards, double epsilon,
                                    std::span<const std::vector<double>> targets) {
  ObjectiveReport r;
  const auto rho = exact_state_visitation(game, policy);
  r.min_rho = *std::min_element(rho.values.begin(), rho.values.end());
  r.epsilon = epsilon > 0.0 ? epsilon : r.min_rho;
  r.epsilon_valid = r.epsilon <= r.min_rho;
  r.J = joint_action_matching(game, policy, expert);
  r.L = lower_bound_L(game, policy, rewards);
  r.L_eps = r.epsilon > 0.0 ? lower_bound_L_eps(game, policy, rewards, r.epsilon) : 0.0;
  r.task_return = task_return(game, policy);
  for (int i = 0; i < game.num_agents(); ++i) {
    double m = 0.0;
    for (StateId s = 0; s < game.num_states(); ++s) m += rho.values[s] * policy.agent(i).prob(s, expert.agent(i).action(s));
    r.match_probability.push_back(m);
  }
  if (!targets.empty()) {
    const auto metric = ground_metric(game);
    for (const auto& t : targets) {
      r.w1.push_back(wasserstein1(t, rho.values, metric));
      r.tv.push_back(tv_distance(t, rho.values));
    }
  }
  return r;
}

std::vector<std::string> bound_chain_violations(const ObjectiveReport& r, int num_states, int num_agents,
                                                double slack) {
  std::vector<std::string> out;
  const double K = num_agents;
  if (r.J < K - 1 - slack) out.push_back("J < K-1");
  if (r.J > K + slack) out.push_back("J > K");
  if (r.L > r.J + slack) out.push_back("L > J");
  if (r.L_eps < -slack) out.push_back("L_eps < 0");
  if (r.L_eps > r.epsilon * num_states * K + slack) out.push_back("L_eps > eps|S|K");
  if (r.L_eps > r.L + slack) out.push_back("L_eps > L");
  return out;
}

}  // namespace dm2
