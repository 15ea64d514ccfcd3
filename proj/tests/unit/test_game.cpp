#include <doctest.h>

#include <cmath>
#include <sstream>

#include "../support.hpp"
#include "dm2/errors.hpp"
#include "dm2/game.hpp"

using namespace dm2;
using namespace dm2::test;

namespace {

MarkovGame chain(double gamma) {
  GameDefinition d;
  d.num_states = 2;
  d.actions_per_agent = {1};
  d.gamma = gamma;
  d.transitions = {{{1, 1.0}}, {{1, 1.0}}};
  d.reward = {0.0, 1.0};
  d.start = {1.0, 0.0};
  return MarkovGame(d);
}

}  // namespace

TEST_CASE("joint action encoding puts agent 0 first") {
  JointActionSpace space({2, 3});
  CHECK(space.size() == 6);
  CHECK(space.encode(std::vector<int>{1, 0}) == 3);
  CHECK(space.encode(std::vector<int>{0, 2}) == 2);
  for (int j = 0; j < 6; ++j) CHECK(space.encode(space.decode(j)) == j);
  CHECK_THROWS_AS(space.encode(std::vector<int>{2, 0}), IndexError);
}

TEST_CASE("game validation rejects malformed tables") {
  GameDefinition d;
  d.num_states = 1;
  d.actions_per_agent = {1};
  d.transitions = {{{0, 0.9}}};
  d.reward = {0.0};
  d.start = {1.0};
  CHECK_THROWS_AS(MarkovGame{d}, ConfigError);
  d.transitions = {{{0, 1.0}}};
  d.gamma = 1.0;
  CHECK_THROWS_AS(MarkovGame{d}, ConfigError);
  d.gamma = 0.5;
  d.start = {0.5};
  CHECK_THROWS_AS(MarkovGame{d}, ConfigError);
}

TEST_CASE("step: absorbing state, deterministic chain, index errors") {
  Rng rng(1);
  auto g = single_state({2}, 0.9, {0.25, 0.75});
  for (int k = 0; k < 10; ++k) {
    auto r = step(g, 0, 1, rng);
    CHECK(r.next_state == 0);
    CHECK(r.reward == 0.75);
  }
  auto c = chain(0.9);
  for (int k = 0; k < 10; ++k) CHECK(step(c, 0, 0, rng).next_state == 1);
  CHECK_THROWS_AS(step(c, 2, 0, rng), IndexError);
  CHECK_THROWS_AS(step(c, 0, 1, rng), IndexError);
}

TEST_CASE("step: stochastic row frequencies") {
  GameDefinition d;
  d.num_states = 2;
  d.actions_per_agent = {1};
  d.transitions = {{{0, 0.3}, {1, 0.7}}, {{1, 1.0}}};
  d.reward = {0.0, 0.0};
  d.start = {1.0, 0.0};
  MarkovGame g(d);
  Rng rng(5);
  int ones = 0;
  const int n = 100000;
  for (int k = 0; k < n; ++k) ones += step(g, 0, 0, rng).next_state == 1;
  CHECK(std::abs(ones / double(n) - 0.7) <= 0.01);
}

TEST_CASE("rollout: length, chaining and determinism") {
  Rng grng(3);
  auto g = random_game(grng, 6, {2, 3}, 0.9);
  auto pi = random_joint(g, grng);
  Rng rng(11);
  CHECK(rollout(g, pi, 1, rng).steps.size() == 1);
  auto t = rollout(g, pi, 50, rng);
  REQUIRE(t.steps.size() == 50);
  for (std::size_t k = 1; k < t.steps.size(); ++k) CHECK(t.steps[k].state == t.steps[k - 1].next_state);
  Rng a(9), b(9);
  auto ta = rollout(g, pi, 40, a), tb = rollout(g, pi, 40, b);
  for (std::size_t k = 0; k < 40; ++k) {
    CHECK(ta.steps[k].state == tb.steps[k].state);
    CHECK(ta.steps[k].joint_action == tb.steps[k].joint_action);
  }
  CHECK_THROWS_AS(rollout(g, pi, 0, rng), InputError);

  // No randomness anywhere: identical across seeds.
  auto c = chain(0.9);
  JointPolicy det({TabularPolicy::deterministic(0, 1, std::vector<int>{0, 0})});
  Rng r1(1), r2(999);
  auto t1 = rollout(c, det, 5, r1), t2 = rollout(c, det, 5, r2);
  for (int k = 0; k < 5; ++k) CHECK(t1.steps[k].state == t2.steps[k].state);
}

TEST_CASE("exact visitation: closed forms and truncated-sum oracle") {
  auto one = single_state({3}, 0.9);
  JointPolicy u({TabularPolicy::uniform(0, 1, 3)});
  CHECK(exact_state_visitation(one, u).values[0] == doctest::Approx(1.0).epsilon(1e-15));

  auto c = chain(0.9);
  JointPolicy det({TabularPolicy::deterministic(0, 1, std::vector<int>{0, 0})});
  auto rho = exact_state_visitation(c, det);
  // Oracle: (1 - gamma) sum_{t < 200} gamma^t P(s_t = s).
  double r0 = 0.0, r1 = 0.0, w = 0.1;
  for (int t = 0; t < 200; ++t, w *= 0.9) (t == 0 ? r0 : r1) += w;
  CHECK(std::abs(rho.values[0] - 0.1) <= 1e-12);
  CHECK(std::abs(rho.values[1] - 0.9) <= 1e-12);
  CHECK(std::abs(rho.values[1] - r1) <= 1e-9);
}

TEST_CASE("exact visitation is a distribution and agrees with power iteration on random games") {
  Rng rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    const int S = 1 + rng.uniform_int(12);
    auto g = random_game(rng, S, {1 + rng.uniform_int(3), 1 + rng.uniform_int(3)}, 0.95 * rng.uniform());
    auto pi = random_joint(g, rng);
    auto rho = exact_state_visitation(g, pi);
    double tot = 0.0;
    for (double x : rho.values) {
      CHECK(x >= 0.0);
      tot += x;
    }
    CHECK(std::abs(tot - 1.0) <= 1e-9);
    Eigen::MatrixXd M = state_transition_matrix(g, pi);
    Eigen::VectorXd p(S), acc = Eigen::VectorXd::Zero(S);
    for (int s = 0; s < S; ++s) p(s) = g.start()[s];
    double w = 1.0 - g.gamma();
    for (int t = 0; t < 2000 && w > 1e-18; ++t, w *= g.gamma()) {
      acc += w * p;
      p = M.transpose() * p;
    }
    for (int s = 0; s < S; ++s) CHECK(std::abs(acc(s) - rho.values[s]) <= 1e-9);
  }
}

TEST_CASE("joint and marginal visitation: product structure and marginalization") {
  auto one = single_state({2, 2}, 0.5);
  auto u = uniform_joint(one);
  auto joint = joint_state_action_visitation(one, u);
  for (double x : joint.values) CHECK(x == doctest::Approx(0.25).epsilon(1e-14));

  auto one3 = single_state({3}, 0.5);
  auto m3 = marginal_visitation(one3, 0, uniform_joint(one3));
  for (double x : m3.values) CHECK(x == doctest::Approx(1.0 / 3.0).epsilon(1e-14));

  Rng rng(4);
  auto g = random_game(rng, 7, {2, 3, 2}, 0.8);
  auto pi = random_joint(g, rng);
  auto rho = exact_state_visitation(g, pi);
  auto J = joint_state_action_visitation(g, pi);
  const auto& space = g.joint_actions();
  for (int s = 0; s < g.num_states(); ++s) {
    double tot = 0.0;
    for (int a = 0; a < g.num_joint_actions(); ++a) tot += J.at(s, a);
    CHECK(std::abs(tot - rho.values[s]) <= 1e-12);
  }
  for (int i = 0; i < g.num_agents(); ++i) {
    auto m = marginal_visitation(g, i, pi);
    for (int s = 0; s < g.num_states(); ++s) {
      double ms = 0.0;
      for (int a = 0; a < g.num_actions(i); ++a) {
        double from_joint = 0.0;
        for (int ja = 0; ja < g.num_joint_actions(); ++ja) {
          if (space.action_of(ja, i) == a) from_joint += J.at(s, ja);
        }
        CHECK(std::abs(m.at(s, a) - from_joint) <= 1e-12);
        ms += m.at(s, a);
      }
      CHECK(std::abs(ms - rho.values[s]) <= 1e-12);
    }
  }
}

TEST_CASE("empirical visitation converges to exact (Monte-Carlo oracle)") {
  Rng rng(8);
  auto g = random_game(rng, 10, {2, 2}, 0.9);
  auto pi = random_joint(g, rng);
  Rng mc(99);
  auto emp = empirical_state_visitation(g, pi, 1'000'000, mc);
  CHECK(tv(emp.values, exact_state_visitation(g, pi).values) <= 0.01);
  auto empj = empirical_joint_visitation(g, pi, 1'000'000, mc);
  CHECK(tv(empj.values, joint_state_action_visitation(g, pi).values) <= 0.01);
  double tot = 0.0;
  for (double x : empj.values) tot += x;
  CHECK(std::abs(tot - 1.0) <= 1e-3);
}

TEST_CASE("game and policy serialization round-trips exactly") {
  Rng rng(12);
  auto g = random_game(rng, 5, {2, 3}, 0.7);
  auto back = game_from_json(nlohmann::json::parse(game_to_json(g).dump()));
  CHECK(back.num_states() == g.num_states());
  CHECK(back.gamma() == g.gamma());
  CHECK(back.definition().reward == g.definition().reward);
  for (int s = 0; s < g.num_states(); ++s) {
    for (int a = 0; a < g.num_joint_actions(); ++a) {
      auto r1 = g.transitions(s, a), r2 = back.transitions(s, a);
      REQUIRE(r1.size() == r2.size());
      for (std::size_t k = 0; k < r1.size(); ++k) {
        CHECK(r1[k].next == r2[k].next);
        CHECK(r1[k].prob == r2[k].prob);
      }
    }
  }
  auto pi = random_joint(g, rng);
  CHECK(policy_from_json(nlohmann::json::parse(policy_to_json(pi).dump())) == pi);
}

TEST_CASE("policies: validation and deterministic helpers") {
  CHECK_THROWS_AS(TabularPolicy(0, 1, 2, {0.7, 0.7}), InputError);
  auto d = TabularPolicy::deterministic(0, 3, std::vector<int>{2, 0});
  CHECK(d.is_deterministic());
  CHECK(d.action(0) == 2);
  CHECK_THROWS_AS(TabularPolicy::uniform(0, 1, 2).action(0), UnsupportedInputError);
}

TEST_CASE("rng: fork streams are independent and reproducible") {
  Rng a(42);
  Rng f1 = a.fork(1), f2 = a.fork(1), f3 = a.fork(2);
  CHECK(f1.next_u64() == f2.next_u64());
  CHECK(a.fork(1).next_u64() != f3.next_u64());
  Rng b(42);
  CHECK(a.next_u64() == b.next_u64());
  for (int k = 0; k < 1000; ++k) {
    int x = a.uniform_int(7);
    CHECK((x >= 0 && x < 7));
  }
}
