#include "dm2/demos.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "dm2/errors.hpp"
#include "dm2/lp.hpp"

namespace dm2 {

std::string DemoStyle::tag() const {
  return std::string(source == DemoSource::kCoTrained ? "co" : "sep") +
         (sampling == DemoSampling::kConcurrent ? "_conc" : "_nonconc");
}

DemoStyle DemoStyle::from_tag(const std::string& tag) {
  for (const auto& s : all()) {
    if (s.tag() == tag) return s;
  }
  throw ConfigError("unknown demonstration style '" + tag + "'");
}

std::vector<DemoStyle> DemoStyle::all() {
  return {{DemoSource::kCoTrained, DemoSampling::kConcurrent},
          {DemoSource::kCoTrained, DemoSampling::kNonConcurrent},
          {DemoSource::kSeparate, DemoSampling::kConcurrent},
          {DemoSource::kSeparate, DemoSampling::kNonConcurrent}};
}

std::int64_t DemonstrationSet::num_steps() const {
  std::int64_t n = 0;
  for (const auto& e : episodes) n += static_cast<std::int64_t>(e.states.size());
  return n;
}

std::vector<StateId> DemonstrationSet::all_states() const {
  std::vector<StateId> out;
  out.reserve(num_steps());
  for (const auto& e : episodes) out.insert(out.end(), e.states.begin(), e.states.end());
  return out;
}

std::vector<double> DemonstrationSet::state_frequencies(int num_states) const {
  std::vector<double> f(num_states, 0.0);
  const double w = 1.0 / static_cast<double>(std::max<std::int64_t>(1, num_steps()));
  for (const auto& e : episodes) {
    for (StateId s : e.states) {
      if (s < 0 || s >= num_states) throw IndexError("demonstration state out of range");
      f[s] += w;
    }
  }
  return f;
}

std::vector<double> DemonstrationSet::state_action_frequencies(int num_states, int num_actions) const {
  if (!with_actions) throw UnsupportedInputError("demonstration set is state-only");
  std::vector<double> f(static_cast<std::size_t>(num_states) * num_actions, 0.0);
  const double w = 1.0 / static_cast<double>(std::max<std::int64_t>(1, num_steps()));
  for (const auto& e : episodes) {
    for (std::size_t t = 0; t < e.states.size(); ++t) f[static_cast<std::size_t>(e.states[t]) * num_actions + e.actions[t]] += w;
  }
  return f;
}

namespace {

DemoEpisode slice(const MarkovGame& game, const Trajectory& traj, int agent, bool with_actions) {
  DemoEpisode ep;
  ep.episode_id = traj.episode_id;
  for (const auto& st : traj.steps) {
    ep.states.push_back(st.state);
    if (with_actions) ep.actions.push_back(game.joint_actions().action_of(st.joint_action, agent));
  }
  return ep;
}

Trajectory episode(const MarkovGame& game, const JointPolicy& policy, std::int64_t id, int ep_len, const Rng& base) {
  Rng rng = base.fork(static_cast<std::uint64_t>(id));
  Trajectory t = rollout_discounted(game, policy, ep_len, rng);
  t.episode_id = id;
  return t;
}

}  // namespace

std::vector<DemonstrationSet> sample_demonstrations(const MarkovGame& game, const ExpertBundle& bundle,
                                                    DemoStyle style, int n_episodes, int ep_len, Rng& rng,
                                                    bool with_actions) {
  if (n_episodes < 1) throw ConfigError("n_episodes must be at least 1");
  if (ep_len < 1) throw ConfigError("episode length must be at least 1");
  const int K = game.num_agents();
  if (style.source == DemoSource::kCoTrained && bundle.provenance != Provenance::kCoTrained) {
    throw ConfigError("co-trained demonstration styles need a co-trained expert bundle");
  }
  if (style.source == DemoSource::kSeparate && bundle.provenance != Provenance::kSeparatelyTrained) {
    throw ConfigError("separate demonstration styles need separately trained experts");
  }
  const Rng base(rng.next_u64());
  std::vector<DemonstrationSet> sets(K);
  for (int k = 0; k < K; ++k) {
    sets[k].agent_id = k;
    sets[k].style = style;
    sets[k].bundle_id = bundle.id;
    sets[k].seed = base.seed();
    sets[k].n_episodes = n_episodes;
    sets[k].episode_length = ep_len;
    sets[k].with_actions = with_actions;
  }
  if (style.sampling == DemoSampling::kConcurrent) {
    for (int e = 0; e < n_episodes; ++e) {
      const Trajectory t = episode(game, bundle.joint_policy, e, ep_len, base);
      for (int k = 0; k < K; ++k) sets[k].episodes.push_back(slice(game, t, k, with_actions));
    }
  } else {
    for (int k = 0; k < K; ++k) {
      for (int e = 0; e < n_episodes; ++e) {
        const std::int64_t id = static_cast<std::int64_t>(k) * n_episodes + e;
        sets[k].episodes.push_back(slice(game, episode(game, bundle.joint_policy, id, ep_len, base), k, with_actions));
      }
    }
  }
  return sets;
}

void write_demonstrations(const std::filesystem::path& dir, const std::vector<DemonstrationSet>& sets) {
  std::filesystem::create_directories(dir);
  nlohmann::json index;
  index["format"] = "dm2-demos";
  index["version"] = 1;
  index["agents"] = nlohmann::json::array();
  for (const auto& set : sets) {
    const std::string file = "agent" + std::to_string(set.agent_id) + ".jsonl";
    std::ofstream out(dir / file);
    if (!out) throw InputError("cannot write " + (dir / file).string());
    for (const auto& ep : set.episodes) {
      for (std::size_t t = 0; t < ep.states.size(); ++t) {
        nlohmann::json rec{{"episode_id", ep.episode_id},
                           {"t", t},
                           {"agent_id", set.agent_id},
                           {"state_index", ep.states[t]}};
        if (set.with_actions) rec["action_index"] = ep.actions[t];
        out << rec.dump() << '\n';
      }
    }
    index["agents"].push_back({{"agent_id", set.agent_id},
                               {"file", file},
                               {"style", set.style.tag()},
                               {"bundle_id", set.bundle_id},
                               {"seed", set.seed},
                               {"n_episodes", set.n_episodes},
                               {"episode_length", set.episode_length},
                               {"with_actions", set.with_actions},
                               {"steps", set.num_steps()}});
  }
  std::ofstream idx(dir / "index.json");
  idx << index.dump(2) << '\n';
}

std::vector<DemonstrationSet> read_demonstrations(const std::filesystem::path& dir) {
  std::ifstream idx(dir / "index.json");
  if (!idx) throw InputError("missing demonstration index in " + dir.string());
  std::vector<DemonstrationSet> sets;
  try {
    const auto index = nlohmann::json::parse(idx);
    if (index.at("format") != "dm2-demos") throw InputError("not a demonstration index");
    for (const auto& a : index.at("agents")) {
      DemonstrationSet set;
      set.agent_id = a.at("agent_id").get<int>();
      set.style = DemoStyle::from_tag(a.at("style").get<std::string>());
      set.bundle_id = a.at("bundle_id").get<std::string>();
      set.seed = a.at("seed").get<std::uint64_t>();
      set.n_episodes = a.at("n_episodes").get<int>();
      set.episode_length = a.at("episode_length").get<int>();
      set.with_actions = a.at("with_actions").get<bool>();
      std::ifstream in(dir / a.at("file").get<std::string>());
      if (!in) throw InputError("missing demonstration file " + a.at("file").get<std::string>());
      std::string line;
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto rec = nlohmann::json::parse(line);
        const auto id = rec.at("episode_id").get<std::int64_t>();
        const auto t = rec.at("t").get<std::size_t>();
        if (rec.at("agent_id").get<int>() != set.agent_id) throw InputError("record belongs to another agent");
        if (t == 0) {
          set.episodes.push_back({id, {}, {}});
        } else if (set.episodes.empty() || set.episodes.back().episode_id != id ||
                   set.episodes.back().states.size() != t) {
          throw InputError("demonstration records out of order");
        }
        set.episodes.back().states.push_back(rec.at("state_index").get<StateId>());
        if (set.with_actions) set.episodes.back().actions.push_back(rec.at("action_index").get<ActionId>());
      }
      sets.push_back(std::move(set));
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed demonstration files: ") + e.what());
  }
  return sets;
}

CompatibilityResult check_compatibility(const MarkovGame& game, const std::vector<VisitationDistribution>& targets,
                                        double tolerance) {
  const int K = game.num_agents();
  const int S = game.num_states();
  const int JA = game.num_joint_actions();
  if (static_cast<int>(targets.size()) != K) throw InputError("one target marginal per agent required");
  if (static_cast<double>(S) * JA > 1e5) throw UnsupportedInputError("compatibility check limited to 1e5 variables");
  for (int i = 0; i < K; ++i) {
    const auto& t = targets[i];
    if (t.num_states != S || t.columns != game.num_actions(i)) throw InputError("target has the wrong shape");
    double total = 0.0;
    for (double v : t.values) {
      if (!(v >= 0.0)) throw InputError("target marginals must be nonnegative");
      total += v;
    }
    if (std::abs(total - 1.0) > 1e-6) throw InputError("target marginal is not normalized");
  }
  const auto& space = game.joint_actions();
  auto target = [&](int i, StateId s, ActionId a) { return targets[i].at(s, a); };

  // Only joint actions whose every component has target mass can be used.
  std::vector<int> var_of(static_cast<std::size_t>(S) * JA, -1);
  int n = 0;
  for (StateId s = 0; s < S; ++s) {
    for (JointActionId ja = 0; ja < JA; ++ja) {
      bool ok = true;
      for (int i = 0; i < K && ok; ++i) ok = target(i, s, space.action_of(ja, i)) > 0.0;
      if (ok) var_of[static_cast<std::size_t>(s) * JA + ja] = n++;
    }
  }
  std::vector<Eigen::VectorXd> rows;
  std::vector<double> rhs;
  // Bellman flow.
  for (StateId sp = 0; sp < S; ++sp) {
    Eigen::VectorXd row = Eigen::VectorXd::Zero(n);
    for (JointActionId ja = 0; ja < JA; ++ja) {
      const int v = var_of[static_cast<std::size_t>(sp) * JA + ja];
      if (v >= 0) row(v) += 1.0;
    }
    for (StateId s = 0; s < S; ++s) {
      for (JointActionId ja = 0; ja < JA; ++ja) {
        const int v = var_of[static_cast<std::size_t>(s) * JA + ja];
        if (v < 0) continue;
        for (const auto& [next, p] : game.transitions(s, ja)) {
          if (next == sp) row(v) -= game.gamma() * p;
        }
      }
    }
    rows.push_back(std::move(row));
    rhs.push_back((1.0 - game.gamma()) * game.start()[sp]);
  }
  // Per-agent marginals.
  for (int i = 0; i < K; ++i) {
    for (StateId s = 0; s < S; ++s) {
      for (ActionId a = 0; a < game.num_actions(i); ++a) {
        Eigen::VectorXd row = Eigen::VectorXd::Zero(n);
        bool any = false;
        for (JointActionId ja = 0; ja < JA; ++ja) {
          const int v = var_of[static_cast<std::size_t>(s) * JA + ja];
          if (v >= 0 && space.action_of(ja, i) == a) {
            row(v) = 1.0;
            any = true;
          }
        }
        if (!any && target(i, s, a) == 0.0) continue;
        rows.push_back(std::move(row));
        rhs.push_back(target(i, s, a));
      }
    }
  }
  Eigen::MatrixXd A(static_cast<Eigen::Index>(rows.size()), n);
  Eigen::VectorXd b(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (n > 0) A.row(static_cast<Eigen::Index>(r)) = rows[r].transpose();
    b(static_cast<Eigen::Index>(r)) = rhs[r];
  }
  LpOptions opt;
  opt.feasibility_tolerance = tolerance;
  const LpResult lp = solve_lp(A, b, Eigen::VectorXd::Zero(n), opt);

  CompatibilityResult res;
  res.lp_feasible = lp.status != LpStatus::kInfeasible;
  res.infeasibility = lp.infeasibility;
  res.pivots = lp.pivots;
  if (!res.lp_feasible) return res;

  std::vector<TabularPolicy> witness;
  for (int i = 0; i < K; ++i) {
    const int A_i = game.num_actions(i);
    std::vector<double> probs(static_cast<std::size_t>(S) * A_i);
    for (StateId s = 0; s < S; ++s) {
      double mass = 0.0;
      for (ActionId a = 0; a < A_i; ++a) mass += target(i, s, a);
      for (ActionId a = 0; a < A_i; ++a) {
        probs[static_cast<std::size_t>(s) * A_i + a] = mass > 0.0 ? target(i, s, a) / mass : 1.0 / A_i;
      }
      // Exact renormalization keeps the row-sum invariant at 1e-12.
      double total = 0.0;
      for (ActionId a = 0; a < A_i; ++a) total += probs[static_cast<std::size_t>(s) * A_i + a];
      for (ActionId a = 0; a < A_i; ++a) probs[static_cast<std::size_t>(s) * A_i + a] /= total;
    }
    witness.emplace_back(i, S, A_i, std::move(probs));
  }
  const JointPolicy joint(witness);
  double err = 0.0;
  for (int i = 0; i < K; ++i) {
    const auto m = marginal_visitation(game, i, joint);
    for (std::size_t x = 0; x < m.values.size(); ++x) err = std::max(err, std::abs(m.values[x] - targets[i].values[x]));
  }
  res.witness = std::move(witness);
  res.witness_error = err;
  res.witness_verified = err <= kWitnessTolerance;
  res.compatible = res.lp_feasible && res.witness_verified;
  return res;
}

}  // namespace dm2
