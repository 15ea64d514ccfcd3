#include <doctest.h>

#include <cmath>

#include "../support.hpp"
#include "dm2/environments.hpp"
#include "dm2/equilibrium.hpp"
#include "dm2/errors.hpp"
#include "dm2/experts.hpp"
#include "dm2/mdp.hpp"

using namespace dm2;
using namespace dm2::test;

TEST_CASE("K=1 best response equals exhaustive search on a 4-state fixture") {
  Rng rng(1);
  for (int trial = 0; trial < 10; ++trial) {
    auto g = random_game(rng, 4, {3}, 0.9);
    auto pi = random_joint(g, rng);
    auto br = best_response(g, 0, pi, g.rewards());
    CHECK(br.residual < 1e-10);
    CHECK(br.policy.is_deterministic());
    double best = -1e300;
    for_each_deterministic(g, [&](const JointPolicy& d) { best = std::max(best, task_return(g, d)); });
    CHECK(std::abs(br.value - best) <= 1e-9);
    CHECK(std::abs(br.current_value - task_return(g, pi)) <= 1e-9);
    CHECK(br.gain() >= -1e-9);
  }
}

TEST_CASE("best response dominates every deterministic unilateral deviation") {
  Rng rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    auto g = random_game(rng, 3, {2, 3}, 0.8);
    auto pi = random_joint(g, rng);
    for (int agent = 0; agent < 2; ++agent) {
      auto br = best_response(g, agent, pi, g.rewards());
      const int A = g.num_actions(agent);
      std::vector<int> acts(3, 0);
      while (true) {
        auto ps = pi.policies();
        ps[agent] = TabularPolicy::deterministic(agent, A, acts);
        CHECK(task_return(g, JointPolicy(ps)) <= br.value + 1e-9);
        int s = 0;
        while (s < 3 && ++acts[s] == A) acts[s++] = 0;
        if (s == 3) break;
      }
    }
  }
}

TEST_CASE("imitation reward at the expert: best response is the expert action, gain 0") {
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    auto g = random_game(rng, 5, {2, 3}, 0.9);
    ExpertBundle e;
    e.joint_policy = random_deterministic(g, rng);
    auto models = expert_imitation_rewards(e, 1.0);
    for (int i = 0; i < 2; ++i) {
      auto br = best_response(g, i, e.joint_policy, models[i]);
      CHECK(std::abs(br.gain()) <= 1e-9);
      CHECK(br.policy == e.joint_policy.agent(i));
    }
    CHECK(certify_nash(g, e.joint_policy, RewardSpec::imitation_only(models)).pass);
  }
}

TEST_CASE("zero reward: every policy is optimal with value 0") {
  Rng rng(4);
  auto g = random_game(rng, 4, {2, 2}, 0.9);
  auto pi = random_joint(g, rng);
  std::vector<double> zero(4 * 4, 0.0);
  auto br = best_response(g, 1, pi, zero);
  CHECK(br.value == 0.0);
  CHECK(br.current_value == 0.0);
}

TEST_CASE("grid_meet: co-trained experts pass, uniform policy fails") {
  auto g = make_env(EnvSpec::grid_meet(3, 3));
  auto e = cotrain_experts(g, 1.0, 0);
  auto ok = certify_nash(g, e.joint_policy, RewardSpec::task());
  CHECK(ok.pass);
  for (double d : ok.gains) CHECK(d >= -1e-9);
  auto bad = certify_nash(g, uniform_joint(g), RewardSpec::task());
  CHECK_FALSE(bad.pass);
  CHECK(bad.epsilon > 0.01);
  auto j = certificate_to_json(bad);
  CHECK(j.at("pass") == false);
}

TEST_CASE("mixed-reward sweep on grid_meet: 9/9 and the small-beta limit") {
  auto g = make_env(EnvSpec::grid_meet(3, 3));
  auto e = cotrain_experts(g, 1.0, 0);
  std::vector<double> grid{0.1, 1.0, 10.0};
  auto res = theorem2_sweep(g, e, grid, grid);
  CHECK(res.task.pass);
  REQUIRE(res.imitation.size() == 2u);
  for (const auto& c : res.imitation) CHECK(c.pass);
  REQUIRE(res.mixed.size() == 9u);
  for (const auto& c : res.mixed) CHECK(c.pass);
  CHECK(res.all_pass());
  std::vector<double> a{1.0}, b{1e-6};
  CHECK(theorem2_sweep(g, e, a, b).all_pass());
  std::vector<double> neg{-1.0};
  CHECK_THROWS_AS(theorem2_sweep(g, e, neg, b), ConfigError);
}

TEST_CASE("sweep refuses a non-equilibrium expert") {
  auto spec = EnvSpec::grid_meet(3, 3);
  spec.reward_style = RewardStyle::kDelayed;
  auto g = make_env(spec);
  auto e = cotrain_experts(g, 0.5, 0);
  REQUIRE_FALSE(certify_nash(g, e.joint_policy, RewardSpec::task()).pass);
  std::vector<double> grid{1.0};
  CHECK_THROWS_AS(theorem2_sweep(g, e, grid, grid), PreconditionError);
}

TEST_CASE("property: wherever both prerequisites pass, every mixed certificate passes") {
  Rng rng(5);
  int checked = 0;
  for (int trial = 0; trial < 40; ++trial) {
    auto g = random_game(rng, 3 + rng.uniform_int(3), {2, 2}, 0.9);
    auto e = cotrain_experts(g, 1.0, trial);
    if (!certify_nash(g, e.joint_policy, RewardSpec::task()).pass) continue;
    std::vector<double> as{0.01 + 5 * rng.uniform()}, bs{0.01 + 5 * rng.uniform()};
    auto res = theorem2_sweep(g, e, as, bs);
    bool pre = res.task.pass;
    for (const auto& c : res.imitation) pre = pre && c.pass;
    if (!pre) continue;
    ++checked;
    for (const auto& c : res.mixed) CHECK(c.pass);
  }
  CHECK(checked >= 10);
}
