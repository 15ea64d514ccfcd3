#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <json.hpp>

#include "dm2/demos.hpp"
#include "dm2/environments.hpp"
#include "dm2/equilibrium.hpp"
#include "dm2/errors.hpp"
#include "dm2/experts.hpp"
#include "dm2/harness.hpp"
#include "dm2/objectives.hpp"

namespace py = pybind11;
using namespace dm2;
using nlohmann::json;

// Structured values cross the boundary as JSON text; the Python package
// turns them into dicts.

namespace {

std::vector<std::vector<double>> as_rows(const VisitationDistribution& d) {
  std::vector<std::vector<double>> rows(d.num_states, std::vector<double>(d.columns));
  for (int s = 0; s < d.num_states; ++s) {
    for (int c = 0; c < d.columns; ++c) rows[s][c] = d.at(s, c);
  }
  return rows;
}

JointPolicy from_tables(const std::vector<std::vector<std::vector<double>>>& tables) {
  std::vector<TabularPolicy> ps;
  for (std::size_t i = 0; i < tables.size(); ++i) {
    const auto& t = tables[i];
    if (t.empty()) throw InputError("empty policy table");
    const int A = static_cast<int>(t[0].size());
    std::vector<double> flat;
    for (const auto& row : t) {
      if (static_cast<int>(row.size()) != A) throw InputError("ragged policy table");
      flat.insert(flat.end(), row.begin(), row.end());
    }
    ps.emplace_back(static_cast<int>(i), static_cast<int>(t.size()), A, std::move(flat));
  }
  return JointPolicy(std::move(ps));
}

std::vector<RewardModel> assumption1_rewards(const JointPolicy& expert, double c) {
  std::vector<RewardModel> r;
  for (int i = 0; i < expert.num_agents(); ++i) r.push_back(RewardModel::assumption1(expert.agent(i), c));
  return r;
}

std::string objectives_json(const MarkovGame& g, const JointPolicy& pi, const ExpertBundle& e, double c,
                            double epsilon) {
  const auto rewards = assumption1_rewards(e.joint_policy, c);
  const auto r = evaluate_objectives(g, pi, e.joint_policy, rewards, epsilon);
  json j = {{"J", r.J},
            {"L", r.L},
            {"L_eps", r.L_eps},
            {"epsilon", r.epsilon},
            {"min_rho", r.min_rho},
            {"epsilon_valid", r.epsilon_valid},
            {"task_return", r.task_return},
            {"match_probability", r.match_probability},
            {"bound_chain_violations", bound_chain_violations(r, g.num_states(), g.num_agents())}};
  return j.dump();
}

std::string sweep_json(const MarkovGame& g, const ExpertBundle& e, const std::vector<double>& alphas,
                       const std::vector<double>& betas) {
  const auto r = theorem2_sweep(g, e, alphas, betas);
  json j = {{"all_pass", r.all_pass()}, {"task", certificate_to_json(r.task)}};
  j["imitation"] = json::array();
  for (const auto& c : r.imitation) j["imitation"].push_back(certificate_to_json(c));
  j["mixed"] = json::array();
  for (const auto& c : r.mixed) j["mixed"].push_back(certificate_to_json(c));
  return j.dump();
}

std::string compatibility_json(const MarkovGame& g, const std::vector<std::vector<std::vector<double>>>& targets) {
  std::vector<VisitationDistribution> ts;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    VisitationDistribution d;
    d.kind = VisitationKind::kStateActionMarginal;
    d.agent = static_cast<int>(i);
    d.gamma = g.gamma();
    d.num_states = static_cast<int>(targets[i].size());
    d.columns = d.num_states ? static_cast<int>(targets[i][0].size()) : 0;
    for (const auto& row : targets[i]) d.values.insert(d.values.end(), row.begin(), row.end());
    ts.push_back(std::move(d));
  }
  const auto r = check_compatibility(g, ts);
  json j = {{"compatible", r.compatible},           {"lp_feasible", r.lp_feasible},
            {"infeasibility", r.infeasibility},     {"witness_verified", r.witness_verified},
            {"witness_error", r.witness_error},     {"pivots", r.pivots}};
  if (!r.witness.empty()) j["witness"] = policy_to_json(JointPolicy(r.witness));
  return j.dump();
}

std::string demos_json(const MarkovGame& g, const ExpertBundle& e, const std::string& style, int n, int len,
                       std::uint64_t seed, bool with_actions) {
  Rng rng(seed);
  const auto sets = sample_demonstrations(g, e, DemoStyle::from_tag(style), n, len, rng, with_actions);
  json out = json::array();
  for (const auto& s : sets) {
    json eps = json::array();
    for (const auto& ep : s.episodes) {
      json x = {{"episode_id", ep.episode_id}, {"states", ep.states}};
      if (s.with_actions) x["actions"] = ep.actions;
      eps.push_back(std::move(x));
    }
    out.push_back({{"agent_id", s.agent_id},
                   {"style", s.style.tag()},
                   {"bundle_id", s.bundle_id},
                   {"state_frequencies", s.state_frequencies(g.num_states())},
                   {"episodes", std::move(eps)}});
  }
  return out.dump();
}

py::tuple run_command(const std::string& cmd, const std::string& config_json, std::optional<std::uint64_t> seed,
                      const std::string& out, int jobs, const std::vector<std::filesystem::path>& inputs) {
  harness::CommandOptions o;
  o.seed = seed;
  o.out = out;
  o.jobs = jobs;
  o.inputs = inputs;
  harness::CommandResult r;
  {
    py::gil_scoped_release release;
    if (cmd == "report") {
      r = harness::cmd_report(o);
    } else {
      auto cfg = harness::parse_config(json::parse(config_json));
      if (cmd == "train-experts") r = harness::cmd_train_experts(std::move(cfg), o);
      else if (cmd == "sample-demos") r = harness::cmd_sample_demos(std::move(cfg), o);
      else if (cmd == "run") r = harness::cmd_run(std::move(cfg), o);
      else if (cmd == "ablate") r = harness::cmd_ablate(std::move(cfg), o);
      else if (cmd == "verify") r = harness::cmd_verify(std::move(cfg), o);
      else throw ConfigError("unknown command '" + cmd + "'");
    }
  }
  return py::make_tuple(r.run_dir.string(), r.ok, r.summary.dump());
}

}  // namespace

PYBIND11_MODULE(_dm2lab, m) {
  m.doc() = "Tabular decentralized distribution-matching MARL core";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
  py::register_exception<IndexError>(m, "IndexError", PyExc_IndexError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<PreconditionError>(m, "PreconditionError", PyExc_RuntimeError);
  py::register_exception<UnsupportedInputError>(m, "UnsupportedInputError", PyExc_ValueError);

  py::class_<MarkovGame>(m, "Game")
      .def_property_readonly("name", &MarkovGame::name)
      .def_property_readonly("num_states", &MarkovGame::num_states)
      .def_property_readonly("num_agents", &MarkovGame::num_agents)
      .def_property_readonly("num_joint_actions", &MarkovGame::num_joint_actions)
      .def_property_readonly("gamma", &MarkovGame::gamma)
      .def_property_readonly("start", [](const MarkovGame& g) { return std::vector<double>(g.start().begin(), g.start().end()); })
      .def("num_actions", &MarkovGame::num_actions)
      .def("reward", &MarkovGame::reward)
      .def("transitions",
           [](const MarkovGame& g, int s, int a) {
             std::vector<std::pair<int, double>> out;
             for (const auto& [t, p] : g.transitions(s, a)) out.emplace_back(t, p);
             return out;
           })
      .def("to_json", [](const MarkovGame& g) { return game_to_json(g).dump(); })
      .def_static("from_json", [](const std::string& s) { return game_from_json(json::parse(s)); });

  py::class_<JointPolicy>(m, "JointPolicy")
      .def(py::init(&from_tables), py::arg("tables"))
      .def_property_readonly("num_agents", &JointPolicy::num_agents)
      .def("prob", [](const JointPolicy& p, int agent, int s, int a) { return p.agent(agent).prob(s, a); })
      .def("table",
           [](const JointPolicy& p, int agent) {
             const auto& t = p.agent(agent);
             std::vector<std::vector<double>> rows(t.num_states());
             for (int s = 0; s < t.num_states(); ++s) rows[s].assign(t.row(s).begin(), t.row(s).end());
             return rows;
           })
      .def("is_deterministic", &JointPolicy::is_deterministic)
      .def("to_json", [](const JointPolicy& p) { return policy_to_json(p).dump(); })
      .def(py::self == py::self);

  py::class_<ExpertBundle>(m, "ExpertBundle")
      .def_readonly("id", &ExpertBundle::id)
      .def_readonly("joint_policy", &ExpertBundle::joint_policy)
      .def_property_readonly("provenance", [](const ExpertBundle& b) { return to_string(b.provenance); })
      .def_readonly("seeds", &ExpertBundle::seeds)
      .def_readonly("achieved_return", &ExpertBundle::achieved_return)
      .def_readonly("optimal_return", &ExpertBundle::optimal_return)
      .def_readonly("quality_tag", &ExpertBundle::quality_tag)
      .def("to_json", [](const ExpertBundle& b) { return bundle_to_json(b).dump(); })
      .def_static("from_json", [](const std::string& s) { return bundle_from_json(json::parse(s)); });

  m.def("make_env", [](const std::string& env_json) {
    return make_env(harness::parse_config(json{{"env", json::parse(env_json)}}).env);
  }, py::arg("env_json"));
  m.def("uniform_policy", [](const MarkovGame& g) {
    std::vector<TabularPolicy> ps;
    for (int i = 0; i < g.num_agents(); ++i) ps.push_back(TabularPolicy::uniform(i, g.num_states(), g.num_actions(i)));
    return JointPolicy(std::move(ps));
  });

  m.def("cotrain_experts", &cotrain_experts, py::arg("game"), py::arg("quality") = 1.0, py::arg("seed") = 0);
  m.def("independent_train", [](const MarkovGame& g, const std::vector<std::uint64_t>& seeds) {
    return independent_train(g, seeds);
  }, py::arg("game"), py::arg("seeds"));

  m.def("state_visitation", [](const MarkovGame& g, const JointPolicy& p) { return exact_state_visitation(g, p).values; });
  m.def("marginal_visitation", [](const MarkovGame& g, int agent, const JointPolicy& p) {
    return as_rows(marginal_visitation(g, agent, p));
  });
  m.def("task_return", &task_return);
  m.def("joint_action_matching",
        [](const MarkovGame& g, const JointPolicy& p, const ExpertBundle& e) { return joint_action_matching(g, p, e); });
  m.def("objectives", &objectives_json, py::arg("game"), py::arg("policy"), py::arg("expert"), py::arg("c") = 1.0,
        py::arg("epsilon") = 0.0);
  m.def("certify_nash_task", [](const MarkovGame& g, const JointPolicy& p, double tol) {
    return certificate_to_json(certify_nash(g, p, RewardSpec::task(), tol)).dump();
  }, py::arg("game"), py::arg("policy"), py::arg("tolerance") = kNashTolerance);
  m.def("theorem2_sweep", &sweep_json, py::arg("game"), py::arg("expert"), py::arg("alphas"), py::arg("betas"));
  m.def("check_compatibility", &compatibility_json, py::arg("game"), py::arg("targets"));
  m.def("sample_demonstrations", &demos_json, py::arg("game"), py::arg("expert"), py::arg("style"),
        py::arg("episodes"), py::arg("max_length"), py::arg("seed"), py::arg("with_actions") = false);

  m.def("wasserstein1", [](const std::vector<double>& mu, const std::vector<double>& nu,
                           const std::vector<std::vector<double>>& metric) {
    const int n = static_cast<int>(metric.size());
    Eigen::MatrixXd d(n, n);
    for (int i = 0; i < n; ++i) {
      if (static_cast<int>(metric[i].size()) != n) throw InputError("ground metric must be square");
      for (int j = 0; j < n; ++j) d(i, j) = metric[i][j];
    }
    return wasserstein1(mu, nu, d);
  });
  m.def("tv_distance", [](const std::vector<double>& mu, const std::vector<double>& nu) { return tv_distance(mu, nu); });
  m.def("ground_metric", [](const MarkovGame& g) {
    const auto d = ground_metric(g);
    std::vector<std::vector<double>> rows(d.rows(), std::vector<double>(d.cols()));
    for (int i = 0; i < d.rows(); ++i) {
      for (int j = 0; j < d.cols(); ++j) rows[i][j] = d(i, j);
    }
    return rows;
  });

  m.def("resolve_config", [](const std::string& s) { return harness::to_json(harness::parse_config(json::parse(s))).dump(); });
  m.def("config_hash", [](const std::string& s) { return harness::config_hash(harness::parse_config(json::parse(s))); });
  m.def("set_quiet", &harness::set_quiet);
  m.def("run_command", &run_command, py::arg("command"), py::arg("config_json") = "{}", py::arg("seed") = py::none(),
        py::arg("out") = "", py::arg("jobs") = 1, py::arg("inputs") = std::vector<std::filesystem::path>{});
  m.attr("__version__") = harness::kCodeVersion;
}
