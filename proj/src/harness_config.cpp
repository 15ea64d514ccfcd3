#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "dm2/demos.hpp"
#include "dm2/errors.hpp"
#include "dm2/harness.hpp"

namespace dm2::harness {

using nlohmann::json;

std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::kDm2: return "dm2";
    case Algorithm::kGailOnly: return "gail_only";
    case Algorithm::kTaskOnly: return "task_only";
    case Algorithm::kTurnByTurn: return "turn_by_turn";
  }
  return "unknown";
}

namespace {

Algorithm algorithm_from_string(const std::string& s) {
  for (auto a : {Algorithm::kDm2, Algorithm::kGailOnly, Algorithm::kTaskOnly, Algorithm::kTurnByTurn}) {
    if (to_string(a) == s) return a;
  }
  throw ConfigError("unknown algorithm '" + s + "' (dm2, gail_only, task_only, turn_by_turn)");
}

std::string start_to_string(StartMode m) { return m == StartMode::kUniform ? "uniform" : "fixed"; }

StartMode start_from_string(const std::string& s) {
  if (s == "uniform") return StartMode::kUniform;
  if (s == "fixed") return StartMode::kFixed;
  throw ConfigError("unknown start mode '" + s + "' (uniform, fixed)");
}

// Collects every problem instead of stopping at the first one.
class Reader {
 public:
  std::vector<std::string> errors;

  void fail(const std::string& path, const std::string& msg) { errors.push_back(path + ": " + msg); }

  bool object(const json& j, const std::string& path) {
    if (!j.is_object()) {
      fail(path, "expected an object");
      return false;
    }
    return true;
  }

  void only_keys(const json& j, const std::string& path, std::initializer_list<const char*> allowed) {
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [k, v] : j.items()) {
      if (!ok.contains(k)) fail(path + "." + k, "unknown key");
    }
  }

  template <class T, class Check>
  void read(const json& j, const std::string& key, const std::string& path, T& out, Check check) {
    if (!j.contains(key)) return;
    const std::string p = path + "." + key;
    const json& v = j.at(key);
    try {
      T tmp;
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw std::invalid_argument("expected true/false");
        tmp = v.get<bool>();
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw std::invalid_argument("expected a string");
        tmp = v.get<std::string>();
      } else if constexpr (std::is_same_v<T, double>) {
        if (!v.is_number()) throw std::invalid_argument("expected a number");
        tmp = v.get<double>();
      } else if constexpr (std::is_same_v<T, std::uint64_t>) {
        if (!v.is_number_unsigned()) throw std::invalid_argument("expected a nonnegative integer");
        tmp = v.get<std::uint64_t>();
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw std::invalid_argument("expected an integer");
        tmp = v.get<T>();
      } else {
        tmp = v.get<T>();
      }
      if (std::string msg = check(tmp); !msg.empty()) throw std::invalid_argument(msg);
      out = std::move(tmp);
    } catch (const std::exception& e) {
      fail(p, e.what());
    }
  }

  template <class T>
  void read(const json& j, const std::string& key, const std::string& path, T& out) {
    read(j, key, path, out, [](const T&) { return std::string(); });
  }

  // Enum via a from_string function that throws ConfigError.
  template <class E>
  void read_enum(const json& j, const std::string& key, const std::string& path, E& out,
                 const std::function<E(const std::string&)>& parse) {
    std::string s;
    bool present = j.contains(key);
    read(j, key, path, s);
    if (!present || s.empty()) return;
    try {
      out = parse(s);
    } catch (const std::exception& e) {
      fail(path + "." + key, e.what());
    }
  }
};

auto positive = [](auto x) { return x > 0 ? std::string() : std::string("must be positive"); };
auto nonnegative = [](auto x) { return x >= 0 ? std::string() : std::string("must be nonnegative"); };
auto finite_nonneg = [](double x) { return std::isfinite(x) && x >= 0 ? std::string() : std::string("must be finite and >= 0"); };
auto unit_open_closed = [](double x) { return x > 0 && x <= 1 ? std::string() : std::string("must lie in (0, 1]"); };
auto unit_closed_open = [](double x) { return x >= 0 && x < 1 ? std::string() : std::string("must lie in [0, 1)"); };
auto unit_closed = [](double x) { return x >= 0 && x <= 1 ? std::string() : std::string("must lie in [0, 1]"); };

void parse_env(Reader& r, const json& j, EnvSpec& env) {
  const std::string p = "env";
  if (!r.object(j, p)) return;
  r.only_keys(j, p, {"name", "width", "height", "num_agents", "goals", "reward_style", "goal_reward", "gamma", "start",
                     "start_cells", "corridor_length"});
  EnvName name = EnvName::kGridMeet;
  r.read_enum<EnvName>(j, "name", p, name, env_name_from_string);
  int width = 3, height = 3, length = 3;
  r.read(j, "width", p, width, positive);
  r.read(j, "height", p, height, positive);
  r.read(j, "corridor_length", p, length, positive);
  switch (name) {
    case EnvName::kFourTile: env = EnvSpec::four_tile(); break;
    case EnvName::kGridMeet: env = EnvSpec::grid_meet(width, height); break;
    case EnvName::kCorridorSwitch: env = EnvSpec::corridor_switch(length); break;
  }
  if (name == EnvName::kFourTile) {
    if (j.contains("width") || j.contains("height")) r.fail(p, "four_tile has a fixed 2x2 layout");
  }
  r.read(j, "num_agents", p, env.num_agents, positive);
  r.read(j, "goals", p, env.goals);
  r.read_enum<RewardStyle>(j, "reward_style", p, env.reward_style, reward_style_from_string);
  r.read(j, "goal_reward", p, env.goal_reward, [](double x) { return std::isfinite(x) ? "" : "must be finite"; });
  r.read(j, "gamma", p, env.gamma, unit_closed_open);
  r.read_enum<StartMode>(j, "start", p, env.start, start_from_string);
  r.read(j, "start_cells", p, env.start_cells);
  if (r.errors.empty()) {
    try {
      (void)make_env(env);
    } catch (const std::exception& e) {
      r.fail(p, e.what());
    }
  }
}

void parse_demos(Reader& r, const json& j, DemoConfig& d) {
  const std::string p = "demos";
  if (!r.object(j, p)) return;
  r.only_keys(j, p, {"styles", "episodes", "max_length", "seed", "with_actions", "path"});
  r.read(j, "styles", p, d.styles, [](const std::vector<std::string>& v) {
    if (v.empty()) return std::string("must list at least one style");
    for (const auto& s : v) {
      if (s == "all") continue;
      try {
        (void)DemoStyle::from_tag(s);
      } catch (const std::exception&) {
        return "unknown style '" + s + "' (co_conc, co_nonconc, sep_conc, sep_nonconc, all)";
      }
    }
    return std::string();
  });
  std::vector<std::string> expanded;
  for (const auto& s : d.styles) {
    if (s == "all") {
      for (const auto& st : DemoStyle::all()) expanded.push_back(st.tag());
    } else {
      expanded.push_back(s);
    }
  }
  d.styles = expanded;
  r.read(j, "episodes", p, d.episodes, positive);
  r.read(j, "max_length", p, d.max_length, positive);
  r.read(j, "seed", p, d.seed);
  r.read(j, "with_actions", p, d.with_actions);
  r.read(j, "path", p, d.path);
}

void parse_expert(Reader& r, const json& j, ExpertConfig& e) {
  const std::string p = "expert";
  if (!r.object(j, p)) return;
  r.only_keys(j, p, {"quality", "seed", "separate_seeds", "path"});
  r.read(j, "quality", p, e.quality, unit_open_closed);
  r.read(j, "seed", p, e.seed);
  r.read(j, "separate_seeds", p, e.separate_seeds);
  r.read(j, "path", p, e.path);
}

void parse_training(Reader& r, const json& j, TrainingConfig& t) {
  const std::string p = "training";
  if (!r.object(j, p)) return;
  r.only_keys(j, p, {"epochs", "steps_per_epoch", "demo_samples", "max_episode_length", "threshold_fraction",
                     "stop_at_threshold", "learning_rate", "trust_region", "iota", "init_scale", "critic_rate",
                     "disc_epochs", "disc_lr", "disc_lambda", "reward_kind", "max_rounds", "H", "turn_reward",
                     "imitation_c", "step_size", "steps_per_turn", "max_backtracks", "plateau_rounds",
                     "plateau_tolerance", "epsilon"});
  r.read(j, "epochs", p, t.epochs, nonnegative);
  r.read(j, "steps_per_epoch", p, t.steps_per_epoch, positive);
  r.read(j, "demo_samples", p, t.demo_samples, nonnegative);
  r.read(j, "max_episode_length", p, t.max_episode_length, positive);
  r.read(j, "threshold_fraction", p, t.threshold_fraction, unit_closed);
  r.read(j, "stop_at_threshold", p, t.stop_at_threshold);
  LearnerConfig& l = t.learner;
  r.read(j, "learning_rate", p, l.learning_rate, finite_nonneg);
  r.read(j, "trust_region", p, l.trust_region, unit_closed);
  r.read(j, "iota", p, l.iota, unit_closed_open);
  r.read(j, "init_scale", p, l.init_scale, finite_nonneg);
  r.read(j, "critic_rate", p, l.critic_rate, unit_closed);
  r.read(j, "disc_epochs", p, l.disc_epochs, nonnegative);
  r.read(j, "disc_lr", p, l.disc_lr, [](double x) { return x > 0 && x <= 8 ? "" : "must lie in (0, 8]"; });
  r.read(j, "disc_lambda", p, l.disc_lambda, finite_nonneg);
  r.read_enum<RewardKind>(j, "reward_kind", p, l.reward_kind, reward_kind_from_string);
  if (l.reward_kind == RewardKind::kAssumption1) r.fail(p + ".reward_kind", "sample learners use gail_d or gail_neg_log_one_minus_d");
  r.read(j, "max_rounds", p, t.max_rounds, positive);
  r.read(j, "H", p, t.H, positive);
  r.read_enum<TurnReward>(j, "turn_reward", p, t.turn_reward, turn_reward_from_string);
  r.read(j, "imitation_c", p, t.imitation_c, [](double x) { return std::isfinite(x) && x > 0 ? "" : "must be > 0"; });
  r.read(j, "step_size", p, t.step_size, [](double x) { return std::isfinite(x) && x > 0 ? "" : "must be > 0"; });
  r.read(j, "steps_per_turn", p, t.steps_per_turn, positive);
  r.read(j, "max_backtracks", p, t.max_backtracks, nonnegative);
  r.read(j, "plateau_rounds", p, t.plateau_rounds, positive);
  r.read(j, "plateau_tolerance", p, t.plateau_tolerance, finite_nonneg);
  r.read(j, "epsilon", p, t.epsilon, [](double x) { return std::isfinite(x) ? "" : "must be finite"; });
}

void parse_evaluation(Reader& r, const json& j, EvaluationConfig& e) {
  const std::string p = "evaluation";
  if (!r.object(j, p)) return;
  r.only_keys(j, p, {"every", "episodes", "max_length", "bound_chain_samples"});
  r.read(j, "every", p, e.every, positive);
  r.read(j, "episodes", p, e.episodes, positive);
  r.read(j, "max_length", p, e.max_length, positive);
  r.read(j, "bound_chain_samples", p, e.bound_chain_samples, nonnegative);
}

}  // namespace

ExperimentConfig parse_config(const json& j) {
  Reader r;
  ExperimentConfig c;
  if (!r.object(j, "config")) throw ConfigError("config: expected a JSON object");
  r.only_keys(j, "config", {"env", "algorithm", "mixing_c", "alphas", "betas", "demos", "expert", "seeds", "training",
                            "evaluation", "output_dir"});
  if (j.contains("env")) {
    parse_env(r, j.at("env"), c.env);
  } else {
    r.fail("config.env", "missing (required)");
  }
  r.read_enum<Algorithm>(j, "algorithm", "config", c.algorithm, algorithm_from_string);
  r.read(j, "mixing_c", "config", c.mixing_c, finite_nonneg);
  auto positive_list = [](const std::vector<double>& v) {
    if (v.empty()) return std::string("must not be empty");
    for (double x : v) {
      if (!(std::isfinite(x) && x > 0)) return std::string("entries must be finite and > 0");
    }
    return std::string();
  };
  r.read(j, "alphas", "config", c.alphas, positive_list);
  r.read(j, "betas", "config", c.betas, positive_list);
  if (j.contains("demos")) parse_demos(r, j.at("demos"), c.demos);
  if (j.contains("expert")) parse_expert(r, j.at("expert"), c.expert);
  r.read(j, "seeds", "config", c.seeds, [](const std::vector<std::uint64_t>& v) {
    return v.empty() ? std::string("must list at least one seed") : std::string();
  });
  if (j.contains("training")) parse_training(r, j.at("training"), c.training);
  if (j.contains("evaluation")) parse_evaluation(r, j.at("evaluation"), c.evaluation);
  r.read(j, "output_dir", "config", c.output_dir);
  if (r.errors.empty() && static_cast<int>(c.expert.separate_seeds.size()) != c.env.num_agents) {
    r.fail("config.expert.separate_seeds", "needs one seed per agent");
  }
  if (!r.errors.empty()) {
    std::ostringstream os;
    os << "invalid config (" << r.errors.size() << " problem" << (r.errors.size() > 1 ? "s" : "") << "):";
    for (const auto& e : r.errors) os << "\n  " << e;
    throw ConfigError(os.str());
  }
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_config(j);
}

json to_json(const ExperimentConfig& c) {
  json j;
  const EnvSpec& e = c.env;
  j["env"] = {{"name", to_string(e.name)},
              {"num_agents", e.num_agents},
              {"goals", e.goals},
              {"reward_style", to_string(e.reward_style)},
              {"goal_reward", e.goal_reward},
              {"gamma", e.gamma},
              {"start", start_to_string(e.start)},
              {"start_cells", e.start_cells}};
  if (e.name == EnvName::kGridMeet) {
    j["env"]["width"] = e.width;
    j["env"]["height"] = e.height;
  }
  if (e.name == EnvName::kCorridorSwitch) j["env"]["corridor_length"] = e.corridor_length;
  j["algorithm"] = to_string(c.algorithm);
  j["mixing_c"] = c.mixing_c;
  j["alphas"] = c.alphas;
  j["betas"] = c.betas;
  j["demos"] = {{"styles", c.demos.styles},           {"episodes", c.demos.episodes},
                {"max_length", c.demos.max_length},   {"seed", c.demos.seed},
                {"with_actions", c.demos.with_actions}, {"path", c.demos.path}};
  j["expert"] = {{"quality", c.expert.quality},
                 {"seed", c.expert.seed},
                 {"separate_seeds", c.expert.separate_seeds},
                 {"path", c.expert.path}};
  j["seeds"] = c.seeds;
  const TrainingConfig& t = c.training;
  const LearnerConfig& l = t.learner;
  j["training"] = {{"epochs", t.epochs},
                   {"steps_per_epoch", t.steps_per_epoch},
                   {"demo_samples", t.demo_samples},
                   {"max_episode_length", t.max_episode_length},
                   {"threshold_fraction", t.threshold_fraction},
                   {"stop_at_threshold", t.stop_at_threshold},
                   {"learning_rate", l.learning_rate},
                   {"trust_region", l.trust_region},
                   {"iota", l.iota},
                   {"init_scale", l.init_scale},
                   {"critic_rate", l.critic_rate},
                   {"disc_epochs", l.disc_epochs},
                   {"disc_lr", l.disc_lr},
                   {"disc_lambda", l.disc_lambda},
                   {"reward_kind", to_string(l.reward_kind)},
                   {"max_rounds", t.max_rounds},
                   {"H", t.H},
                   {"turn_reward", to_string(t.turn_reward)},
                   {"imitation_c", t.imitation_c},
                   {"step_size", t.step_size},
                   {"steps_per_turn", t.steps_per_turn},
                   {"max_backtracks", t.max_backtracks},
                   {"plateau_rounds", t.plateau_rounds},
                   {"plateau_tolerance", t.plateau_tolerance},
                   {"epsilon", t.epsilon}};
  j["evaluation"] = {{"every", c.evaluation.every},
                     {"episodes", c.evaluation.episodes},
                     {"max_length", c.evaluation.max_length},
                     {"bound_chain_samples", c.evaluation.bound_chain_samples}};
  j["output_dir"] = c.output_dir;
  return j;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string config_hash(const ExperimentConfig& config) {
  // Seeds and the output location are excluded: the seed is its own CSV
  // column, and moving outputs does not change results.
  json j = to_json(config);
  j.erase("seeds");
  j.erase("output_dir");
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(j.dump())));
  return buf;
}

std::string format_double(double x) {
  if (std::isnan(x)) return "";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace dm2::harness
