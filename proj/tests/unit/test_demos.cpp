#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "../support.hpp"
#include "dm2/demos.hpp"
#include "dm2/environments.hpp"
#include "dm2/errors.hpp"
#include "dm2/experts.hpp"

using namespace dm2;
using namespace dm2::test;

namespace {

struct Fixture {
  MarkovGame game = make_env(EnvSpec::grid_meet(3, 3));
  ExpertBundle co = cotrain_experts(game, 1.0, 0);
  ExpertBundle sep = [this] {
    std::vector<std::uint64_t> seeds{1, 2};
    return independent_train(game, seeds);
  }();
};

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("dm2_test_" + name);
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("style tags round-trip") {
  for (auto st : DemoStyle::all()) CHECK(DemoStyle::from_tag(st.tag()) == st);
  CHECK(DemoStyle::all().size() == 4u);
  CHECK_THROWS_AS(DemoStyle::from_tag("co_parallel"), ConfigError);
}

TEST_CASE("concurrent sets share episodes, non-concurrent ones are disjoint") {
  Fixture f;
  Rng rng(1);
  auto conc = sample_demonstrations(f.game, f.co, DemoStyle::from_tag("co_conc"), 50, 100, rng);
  REQUIRE(conc.size() == 2u);
  for (int e = 0; e < 50; ++e) {
    CHECK(conc[0].episodes[e].episode_id == e);
    CHECK(conc[1].episodes[e].episode_id == e);
    CHECK(conc[0].episodes[e].states == conc[1].episodes[e].states);
  }
  auto non = sample_demonstrations(f.game, f.co, DemoStyle::from_tag("co_nonconc"), 50, 100, rng);
  std::set<std::int64_t> ids;
  for (int k = 0; k < 2; ++k) {
    for (const auto& ep : non[k].episodes) {
      CHECK(ep.episode_id >= k * 50);
      CHECK(ep.episode_id < (k + 1) * 50);
      ids.insert(ep.episode_id);
    }
  }
  CHECK(ids.size() == 100u);
  for (const auto& s : non) {
    CHECK(s.style.sampling == DemoSampling::kNonConcurrent);
    CHECK(s.bundle_id == f.co.id);
    for (const auto& ep : s.episodes) {
      CHECK(!ep.states.empty());
      CHECK(static_cast<int>(ep.states.size()) <= 100);
    }
  }
}

TEST_CASE("demo state frequencies estimate the expert's discounted visitation") {
  Fixture f;
  Rng rng(3);
  const auto exact = exact_state_visitation(f.game, f.co.joint_policy).values;
  auto conc = sample_demonstrations(f.game, f.co, DemoStyle::from_tag("co_conc"), 20000, 1000, rng);
  auto non = sample_demonstrations(f.game, f.co, DemoStyle::from_tag("co_nonconc"), 20000, 1000, rng);
  for (int k = 0; k < 2; ++k) {
    REQUIRE(conc[k].num_steps() >= 100000);
    const auto fc = conc[k].state_frequencies(f.game.num_states());
    const auto fn = non[k].state_frequencies(f.game.num_states());
    CHECK(tv(fc, exact) <= 0.02);
    CHECK(tv(fn, exact) <= 0.02);
    CHECK(tv(fc, fn) <= 0.03);
  }
  // The separate styles follow the assembled mixed team.
  const auto exact_sep = exact_state_visitation(f.game, f.sep.joint_policy).values;
  auto sep = sample_demonstrations(f.game, f.sep, DemoStyle::from_tag("sep_nonconc"), 20000, 1000, rng);
  for (int k = 0; k < 2; ++k) CHECK(tv(sep[k].state_frequencies(f.game.num_states()), exact_sep) <= 0.02);
}

TEST_CASE("demonstrations with actions match the marginal visitation") {
  Fixture f;
  Rng rng(4);
  auto sets = sample_demonstrations(f.game, f.co, DemoStyle::from_tag("co_conc"), 20000, 1000, rng, true);
  for (int k = 0; k < 2; ++k) {
    const auto m = marginal_visitation(f.game, k, f.co.joint_policy);
    CHECK(tv(sets[k].state_action_frequencies(f.game.num_states(), f.game.num_actions(k)), m.values) <= 0.02);
  }
  auto bare = sample_demonstrations(f.game, f.co, DemoStyle::from_tag("co_conc"), 5, 10, rng);
  CHECK_THROWS_AS(bare[0].state_action_frequencies(f.game.num_states(), 5), UnsupportedInputError);
}

TEST_CASE("style/provenance mismatch and bad sizes are rejected") {
  Fixture f;
  Rng rng(5);
  CHECK_THROWS_AS(sample_demonstrations(f.game, f.sep, DemoStyle::from_tag("co_conc"), 5, 10, rng), ConfigError);
  CHECK_THROWS_AS(sample_demonstrations(f.game, f.co, DemoStyle::from_tag("sep_conc"), 5, 10, rng), ConfigError);
  CHECK_THROWS_AS(sample_demonstrations(f.game, f.co, DemoStyle::from_tag("co_conc"), 0, 10, rng), ConfigError);
  CHECK_THROWS_AS(sample_demonstrations(f.game, f.co, DemoStyle::from_tag("co_conc"), 5, 0, rng), ConfigError);
}

TEST_CASE("sampling is reproducible from the seed") {
  Fixture f;
  Rng a(77), b(77);
  auto x = sample_demonstrations(f.game, f.co, DemoStyle::from_tag("co_nonconc"), 30, 50, a);
  auto y = sample_demonstrations(f.game, f.co, DemoStyle::from_tag("co_nonconc"), 30, 50, b);
  for (int k = 0; k < 2; ++k) {
    for (int e = 0; e < 30; ++e) CHECK(x[k].episodes[e].states == y[k].episodes[e].states);
  }
}

TEST_CASE("write/read round-trip") {
  Fixture f;
  Rng rng(6);
  for (bool acts : {false, true}) {
    auto sets = sample_demonstrations(f.game, f.sep, DemoStyle::from_tag("sep_conc"), 40, 60, rng, acts);
    const auto dir = scratch(acts ? "demos_a" : "demos_s");
    write_demonstrations(dir, sets);
    auto back = read_demonstrations(dir);
    REQUIRE(back.size() == sets.size());
    for (std::size_t k = 0; k < sets.size(); ++k) {
      CHECK(back[k].agent_id == sets[k].agent_id);
      CHECK(back[k].style == sets[k].style);
      CHECK(back[k].bundle_id == sets[k].bundle_id);
      CHECK(back[k].seed == sets[k].seed);
      CHECK(back[k].with_actions == acts);
      REQUIRE(back[k].episodes.size() == sets[k].episodes.size());
      for (std::size_t e = 0; e < sets[k].episodes.size(); ++e) {
        CHECK(back[k].episodes[e].episode_id == sets[k].episodes[e].episode_id);
        CHECK(back[k].episodes[e].states == sets[k].episodes[e].states);
        CHECK(back[k].episodes[e].actions == sets[k].episodes[e].actions);
      }
    }
    std::filesystem::remove_all(dir);
  }
  CHECK_THROWS_AS(read_demonstrations(scratch("missing")), InputError);
}

TEST_CASE("compatibility: a policy's own marginals are always compatible") {
  Rng rng(10);
  for (int trial = 0; trial < 10; ++trial) {
    auto g = random_game(rng, 4, {2, 2}, 0.8);
    auto pi = random_joint(g, rng);
    std::vector<VisitationDistribution> t{marginal_visitation(g, 0, pi), marginal_visitation(g, 1, pi)};
    auto r = check_compatibility(g, t);
    CHECK(r.lp_feasible);
    CHECK(r.witness_verified);
    CHECK(r.compatible);
    CHECK(r.witness_error <= kWitnessTolerance);
    // The witness reproduces pi itself wherever pi visits.
    for (int i = 0; i < 2; ++i) {
      for (int s = 0; s < 4; ++s) {
        for (int a = 0; a < 2; ++a) CHECK(std::abs(r.witness[i].prob(s, a) - pi.agent(i).prob(s, a)) <= 1e-6);
      }
    }
  }
}

TEST_CASE("compatibility: co-trained expert marginals, conflicting and compatible scenarios") {
  Fixture f;
  std::vector<VisitationDistribution> t{marginal_visitation(f.game, 0, f.co.joint_policy),
                                        marginal_visitation(f.game, 1, f.co.joint_policy)};
  CHECK(check_compatibility(f.game, t).compatible);

  auto bad = conflicting_demo_scenario();
  auto rb = check_compatibility(bad.game, bad.targets);
  CHECK_FALSE(rb.compatible);
  CHECK_FALSE(rb.lp_feasible);
  CHECK(rb.infeasibility > 1e-3);

  auto good = compatible_demo_scenario();
  CHECK(check_compatibility(good.game, good.targets).compatible);

  std::vector<VisitationDistribution> one{t[0]};
  CHECK_THROWS_AS(check_compatibility(f.game, one), InputError);
}
