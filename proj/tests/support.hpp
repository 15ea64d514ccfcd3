#pragma once

#include <cmath>
#include <vector>

#include "dm2/game.hpp"

namespace dm2::test {

// Random dense game: every (s, joint a) row mixes up to `fanout` next states.
inline MarkovGame random_game(Rng& rng, int S, std::vector<int> actions, double gamma, int fanout = 3) {
  GameDefinition d;
  d.name = "random";
  d.num_states = S;
  d.actions_per_agent = actions;
  d.gamma = gamma;
  int JA = 1;
  for (int a : actions) JA *= a;
  for (int r = 0; r < S * JA; ++r) {
    std::vector<TransitionEntry> row;
    std::vector<double> w(S, 0.0);
    double tot = 0.0;
    for (int k = 0; k < fanout; ++k) {
      const int t = rng.uniform_int(S);
      const double x = 0.05 + rng.uniform();
      w[t] += x;
      tot += x;
    }
    for (int t = 0; t < S; ++t) {
      if (w[t] > 0.0) row.push_back({t, w[t] / tot});
    }
    d.transitions.push_back(row);
    d.reward.push_back(rng.uniform() < 0.3 ? rng.uniform() : 0.0);
  }
  d.start.assign(S, 0.0);
  double tot = 0.0;
  for (auto& x : d.start) tot += x = 0.1 + rng.uniform();
  for (auto& x : d.start) x /= tot;
  return MarkovGame(std::move(d));
}

inline TabularPolicy random_policy(int agent, int S, int A, Rng& rng) {
  std::vector<double> p(static_cast<std::size_t>(S) * A);
  for (int s = 0; s < S; ++s) {
    double tot = 0.0;
    for (int a = 0; a < A; ++a) tot += p[s * A + a] = -std::log(1.0 - rng.uniform());
    for (int a = 0; a < A; ++a) p[s * A + a] /= tot;
  }
  return TabularPolicy(agent, S, A, std::move(p));
}

inline JointPolicy random_joint(const MarkovGame& g, Rng& rng) {
  std::vector<TabularPolicy> ps;
  for (int i = 0; i < g.num_agents(); ++i) ps.push_back(random_policy(i, g.num_states(), g.num_actions(i), rng));
  return JointPolicy(std::move(ps));
}

inline JointPolicy random_deterministic(const MarkovGame& g, Rng& rng) {
  std::vector<TabularPolicy> ps;
  for (int i = 0; i < g.num_agents(); ++i) {
    std::vector<ActionId> acts(g.num_states());
    for (auto& a : acts) a = rng.uniform_int(g.num_actions(i));
    ps.push_back(TabularPolicy::deterministic(i, g.num_actions(i), acts));
  }
  return JointPolicy(std::move(ps));
}

inline JointPolicy uniform_joint(const MarkovGame& g) {
  std::vector<TabularPolicy> ps;
  for (int i = 0; i < g.num_agents(); ++i) ps.push_back(TabularPolicy::uniform(i, g.num_states(), g.num_actions(i)));
  return JointPolicy(std::move(ps));
}

// Single absorbing state; `reward` per joint action (zeros if empty).
inline MarkovGame single_state(std::vector<int> actions, double gamma, std::vector<double> reward = {}) {
  GameDefinition d;
  d.name = "single";
  d.num_states = 1;
  d.actions_per_agent = actions;
  d.gamma = gamma;
  int JA = 1;
  for (int a : actions) JA *= a;
  d.transitions.assign(JA, {{0, 1.0}});
  d.reward = reward.empty() ? std::vector<double>(JA, 0.0) : reward;
  d.start = {1.0};
  return MarkovGame(std::move(d));
}

// Enumerates every deterministic joint policy (product of per-agent maps).
template <class F>
void for_each_deterministic(const MarkovGame& g, F&& f) {
  const int K = g.num_agents();
  const int S = g.num_states();
  std::vector<std::vector<ActionId>> acts(K, std::vector<ActionId>(S, 0));
  while (true) {
    std::vector<TabularPolicy> ps;
    for (int i = 0; i < K; ++i) ps.push_back(TabularPolicy::deterministic(i, g.num_actions(i), acts[i]));
    f(JointPolicy(std::move(ps)));
    int i = 0, s = 0;
    for (;;) {
      if (++acts[i][s] < g.num_actions(i)) break;
      acts[i][s] = 0;
      if (++s == S) {
        s = 0;
        if (++i == K) return;
      }
    }
  }
}

inline double tv(const std::vector<double>& a, const std::vector<double>& b) {
  double t = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) t += std::abs(a[i] - b[i]);
  return 0.5 * t;
}

// Exact optimal transport by enumerating every basis of the coupling polytope.
inline double w1_vertex_oracle(const std::vector<double>& mu, const std::vector<double>& nu, const Eigen::MatrixXd& d) {
  const int n = static_cast<int>(mu.size());
  const int vars = n * n;
  const int rank = 2 * n - 1;
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(2 * n, vars);
  Eigen::VectorXd b(2 * n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      A(i, i * n + j) = 1;
      A(n + j, i * n + j) = 1;
    }
    b(i) = mu[i];
    b(n + i) = nu[i];
  }
  double best = 1e300;
  for (int mask = 0; mask < (1 << vars); ++mask) {
    if (__builtin_popcount(mask) != rank) continue;
    Eigen::MatrixXd B(2 * n, rank);
    std::vector<int> cols;
    for (int k = 0; k < vars; ++k) {
      if (mask >> k & 1) {
        B.col(static_cast<int>(cols.size())) = A.col(k);
        cols.push_back(k);
      }
    }
    if (Eigen::FullPivLU<Eigen::MatrixXd>(B).rank() < rank) continue;
    Eigen::VectorXd x = B.colPivHouseholderQr().solve(b);
    if ((B * x - b).cwiseAbs().maxCoeff() > 1e-10 || x.minCoeff() < -1e-12) continue;
    double v = 0;
    for (int k = 0; k < rank; ++k) v += d(cols[k] / n, cols[k] % n) * x(k);
    best = std::min(best, v);
  }
  return best;
}

}  // namespace dm2::test
