#pragma once

#include <cstdint>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include "json.hpp"

#include "dsoba/engine.hpp"
#include "dsoba/error.hpp"
#include "dsoba/metrics.hpp"
#include "dsoba/topology.hpp"

namespace dsoba {

// Experiment configuration, read from an INI-style file:
//
//   [problem]            family = quadratic | ridge | logcosh | trivial, plus
//                        family parameters (see kProblemKeys)
//   [topology.<name>]    kind = full | ring | adjusted_ring | torus |
//                        exponential | custom, plus kind parameters
//   [run]                variants, step sizes, horizon, sweep settings
//
// Unknown sections and keys are rejected.

struct ProblemConfig {
  std::string family = "quadratic";
  std::uint64_t seed = 0;
  int nodes = 4;
  int dim_x = 1;
  int dim_y = 1;
  double conditioning = 4.0;
  double heterogeneity = 0.0;
  int batch = 1;
  double hessian_noise = 0.0;
  double jacobian_noise = 0.0;
  double gradient_noise = 0.0;
  double coupling = 1.0;
  double upper_reg = 1.0;

  bool operator==(const ProblemConfig&) const = default;
};

struct TopologyConfig {
  std::string name;
  std::string kind = "full";
  double self_weight = 1.0 / 3.0;
  double neighbor_weight = 1.0 / 3.0;
  int rows = 0;
  int cols = 0;
  std::string file;

  bool operator==(const TopologyConfig&) const = default;

  MixingMatrix build(int n) const {
    if (kind == "full") return build_topology(FullyConnected{}, n);
    if (kind == "ring") return build_topology(Ring{self_weight, neighbor_weight}, n);
    if (kind == "adjusted_ring") return build_topology(AdjustedRing{}, n);
    if (kind == "torus") return build_topology(Torus2D{rows, cols}, n);
    if (kind == "exponential") return build_topology(ExponentialGraph{}, n);
    if (kind == "custom") {
      MixingMatrix w = load_mixing_matrix(file);
      if (w.n() != n) {
        throw Error(ErrorCode::IncompatibleSize, "custom topology '" + name + "' has " +
                                                     std::to_string(w.n()) + " nodes, expected " +
                                                     std::to_string(n));
      }
      return w;
    }
    throw ConfigError(ErrorCode::ValidationError, "kind", "unknown topology kind '" + kind + "'");
  }
};

struct RunConfig {
  std::vector<Variant> variants{Variant::SecondOrder};
  double alpha = 0.1;
  double c1 = 1.0;
  double c2 = 1.0;
  double c3 = 1.0;
  bool theta_follows_decay = true;
  double tau = 1.0;
  double decay_factor = 1.0;
  long decay_period = 1000;
  double delta = 1e-3;
  bool delta_adaptive = false;
  double delta_max = 1e-1;
  double delta_target_bias = 1e-6;
  double delta_lipschitz = 1.0;
  bool clamp_z = false;
  double init_scale = 0.0;
  long iterations = 1000;
  long probe_every = 10;
  int trials = 1;
  std::uint64_t base_seed = 1;
  std::string out_dir;
  int workers = 1;
  double rel_tol = 0.2;
  int window = 5;
  std::string metric = "grad_sq_norm";
  double wall_seconds = 0.0;

  bool operator==(const RunConfig&) const = default;

  HyperParams hyper(Variant v) const {
    HyperParams h;
    h.alpha0 = alpha;
    h.c1 = c1;
    h.c2 = c2;
    h.c3 = c3;
    h.theta_follows_decay = theta_follows_decay;
    h.tau = tau;
    if (decay_factor != 1.0) h.decay = StageDecay{decay_factor, decay_period};
    h.delta.fixed = delta;
    h.delta.adaptive = delta_adaptive;
    h.delta.max_delta = delta_max;
    h.delta.target_bias = delta_target_bias;
    h.delta.hessian_lipschitz = delta_lipschitz;
    h.variant = v;
    h.clamp_z = clamp_z;
    return h;
  }
};

struct ExperimentConfig {
  ProblemConfig problem;
  std::vector<TopologyConfig> topologies;
  RunConfig run;

  bool operator==(const ExperimentConfig&) const = default;
};

// ---------------------------------------------------------------------------
// Key tables
// ---------------------------------------------------------------------------

inline const std::map<std::string, std::set<std::string>>& problem_keys() {
  static const std::map<std::string, std::set<std::string>> keys{
      {"quadratic",
       {"family", "seed", "nodes", "dim_x", "dim_y", "conditioning", "heterogeneity",
        "hessian_noise", "jacobian_noise", "gradient_noise"}},
      {"trivial", {"family", "seed", "nodes", "dim_y", "hessian_noise", "jacobian_noise",
                   "gradient_noise"}},
      {"ridge", {"family", "seed", "nodes", "dim_y", "heterogeneity", "batch"}},
      {"logcosh",
       {"family", "seed", "nodes", "dim_x", "dim_y", "coupling", "heterogeneity", "upper_reg",
        "hessian_noise", "jacobian_noise", "gradient_noise"}},
  };
  return keys;
}

inline const std::map<std::string, std::set<std::string>>& topology_keys() {
  static const std::map<std::string, std::set<std::string>> keys{
      {"full", {"kind"}},
      {"ring", {"kind", "self_weight", "neighbor_weight"}},
      {"adjusted_ring", {"kind"}},
      {"torus", {"kind", "rows", "cols"}},
      {"exponential", {"kind"}},
      {"custom", {"kind", "file"}},
  };
  return keys;
}

inline const std::set<std::string>& run_keys() {
  static const std::set<std::string> keys{
      "variants",      "alpha",        "c1",           "c2",
      "c3",            "theta_follows_decay",          "tau",
      "decay_factor",  "decay_period", "delta",        "delta_adaptive",
      "delta_max",     "delta_target_bias",            "delta_lipschitz",
      "clamp_z",       "init_scale",   "iterations",   "probe_every",
      "trials",        "base_seed",    "out_dir",      "workers",
      "rel_tol",       "window",       "metric",       "wall_seconds"};
  return keys;
}

namespace detail {

using boost::property_tree::ptree;

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

template <typename T>
T convert(const std::string& key, const std::string& raw) {
  const std::string text = trim(raw);
  std::istringstream in(text);
  T value{};
  if constexpr (std::is_same_v<T, bool>) {
    if (text == "true" || text == "1" || text == "yes") return true;
    if (text == "false" || text == "0" || text == "no") return false;
    throw ConfigError(ErrorCode::ValidationError, key, "expected true/false, got '" + text + "'");
  } else if constexpr (std::is_same_v<T, std::string>) {
    return text;
  } else {
    if constexpr (std::is_unsigned_v<T>) {
      if (!text.empty() && text.front() == '-') {
        throw ConfigError(ErrorCode::ValidationError, key, "must be non-negative");
      }
    }
    in >> value;
    if (text.empty() || !in || !in.eof()) {
      throw ConfigError(ErrorCode::ValidationError, key, "cannot parse '" + text + "'");
    }
    return value;
  }
}

inline void check_keys(const ptree& section, const std::set<std::string>& allowed,
                       const std::string& prefix) {
  for (const auto& [key, child] : section) {
    if (!child.empty()) {
      throw ConfigError(ErrorCode::ParseError, prefix + key, "unexpected nested value");
    }
    if (!allowed.count(key)) {
      throw ConfigError(ErrorCode::ValidationError, prefix + key, "unknown key");
    }
  }
}

template <typename T>
void read(const ptree& section, const std::string& prefix, const std::string& key, T& target) {
  if (auto v = section.get_optional<std::string>(key)) target = convert<T>(prefix + key, *v);
}

inline std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace detail

/// Checks cross-field invariants; throws ConfigError naming the key.
inline void validate(const ExperimentConfig& cfg) {
  auto fail = [](const std::string& key, const std::string& why) {
    throw ConfigError(ErrorCode::ValidationError, key, why);
  };
  const auto& pr = cfg.problem;
  if (!problem_keys().count(pr.family)) fail("problem.family", "unknown family '" + pr.family + "'");
  if (pr.nodes < 1) fail("problem.nodes", "must be >= 1");
  if (pr.dim_x < 1) fail("problem.dim_x", "must be >= 1");
  if (pr.dim_y < 1) fail("problem.dim_y", "must be >= 1");
  if (!(pr.conditioning >= 1.0)) fail("problem.conditioning", "must be >= 1");
  if (!(pr.heterogeneity >= 0.0)) fail("problem.heterogeneity", "must be >= 0");
  if (pr.batch < 1) fail("problem.batch", "must be >= 1");
  if (!(pr.hessian_noise >= 0.0 && pr.jacobian_noise >= 0.0 && pr.gradient_noise >= 0.0)) {
    fail("problem.noise", "noise levels must be >= 0");
  }
  if (pr.family == "ridge" && pr.dim_x != 1) fail("problem.dim_x", "ridge tuning has scalar x");
  if (pr.family == "trivial" && pr.dim_x != pr.dim_y) fail("problem.dim_x", "trivial needs d = p");

  if (cfg.topologies.empty()) fail("topology", "at least one [topology.<name>] section is required");
  std::set<std::string> names;
  for (const auto& t : cfg.topologies) {
    const std::string prefix = "topology." + t.name + ".";
    if (t.name.empty() || t.name == "centralized" || t.name.find_first_of(" /\\,") != std::string::npos) {
      fail(prefix + "name", "invalid topology name");
    }
    if (!names.insert(t.name).second) fail(prefix + "name", "duplicate topology");
    if (!topology_keys().count(t.kind)) fail(prefix + "kind", "unknown kind '" + t.kind + "'");
    if (t.kind == "torus" && t.rows * t.cols != pr.nodes) {
      fail(prefix + "rows", "rows * cols must equal problem.nodes");
    }
    if (t.kind == "custom" && t.file.empty()) fail(prefix + "file", "custom topology needs a file");
  }

  const auto& r = cfg.run;
  if (r.variants.empty()) fail("run.variants", "at least one variant is required");
  if (r.iterations < 1) fail("run.iterations", "must be >= 1");
  if (r.probe_every < 1) fail("run.probe_every", "must be >= 1");
  if (r.trials < 1) fail("run.trials", "must be >= 1");
  if (r.workers < 1) fail("run.workers", "must be >= 1");
  if (!(r.rel_tol >= 0.0)) fail("run.rel_tol", "must be >= 0");
  if (r.window < 1) fail("run.window", "must be >= 1");
  if (!parse_metric(r.metric)) fail("run.metric", "unknown metric '" + r.metric + "'");
  if (!(r.wall_seconds >= 0.0)) fail("run.wall_seconds", "must be >= 0");
  if (!(r.init_scale >= 0.0)) fail("run.init_scale", "must be >= 0");
  try {
    r.hyper(r.variants.front()).validate();
  } catch (const ConfigError& e) {
    fail("run." + e.key(), e.what());
  }
}

/// Parses and validates the INI text. ParseError carries the line number;
/// ValidationError names the offending key.
inline ExperimentConfig parse_config(const std::string& text) {
  using detail::ptree;
  ptree tree;
  try {
    std::istringstream in(text);
    boost::property_tree::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(ErrorCode::ParseError, "",
                      "line " + std::to_string(e.line()) + ": " + e.message());
  }

  ExperimentConfig cfg;
  bool have_problem = false;
  bool have_run = false;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      throw ConfigError(ErrorCode::ValidationError, section, "key outside of any section");
    }
    if (section == "problem") {
      have_problem = true;
      auto& pr = cfg.problem;
      detail::read(body, "problem.", "family", pr.family);
      const auto fam = problem_keys().find(pr.family);
      if (fam == problem_keys().end()) {
        throw ConfigError(ErrorCode::ValidationError, "problem.family",
                          "unknown family '" + pr.family + "'");
      }
      detail::check_keys(body, fam->second, "problem.");
      detail::read(body, "problem.", "seed", pr.seed);
      detail::read(body, "problem.", "nodes", pr.nodes);
      detail::read(body, "problem.", "dim_x", pr.dim_x);
      detail::read(body, "problem.", "dim_y", pr.dim_y);
      detail::read(body, "problem.", "conditioning", pr.conditioning);
      detail::read(body, "problem.", "heterogeneity", pr.heterogeneity);
      detail::read(body, "problem.", "batch", pr.batch);
      detail::read(body, "problem.", "hessian_noise", pr.hessian_noise);
      detail::read(body, "problem.", "jacobian_noise", pr.jacobian_noise);
      detail::read(body, "problem.", "gradient_noise", pr.gradient_noise);
      detail::read(body, "problem.", "coupling", pr.coupling);
      detail::read(body, "problem.", "upper_reg", pr.upper_reg);
      if (pr.family == "trivial") pr.dim_x = pr.dim_y;
    } else if (section.rfind("topology.", 0) == 0) {
      TopologyConfig t;
      t.name = section.substr(std::string("topology.").size());
      const std::string prefix = section + ".";
      detail::read(body, prefix, "kind", t.kind);
      const auto kind = topology_keys().find(t.kind);
      if (kind == topology_keys().end()) {
        throw ConfigError(ErrorCode::ValidationError, prefix + "kind",
                          "unknown kind '" + t.kind + "'");
      }
      detail::check_keys(body, kind->second, prefix);
      detail::read(body, prefix, "self_weight", t.self_weight);
      detail::read(body, prefix, "neighbor_weight", t.neighbor_weight);
      detail::read(body, prefix, "rows", t.rows);
      detail::read(body, prefix, "cols", t.cols);
      detail::read(body, prefix, "file", t.file);
      cfg.topologies.push_back(std::move(t));
    } else if (section == "run") {
      have_run = true;
      auto& r = cfg.run;
      detail::check_keys(body, run_keys(), "run.");
      if (auto v = body.get_optional<std::string>("variants")) {
        r.variants.clear();
        for (const auto& name : detail::split_list(*v)) {
          const auto variant = parse_variant(name);
          if (!variant) {
            throw ConfigError(ErrorCode::ValidationError, "run.variants",
                              "unknown variant '" + name + "'");
          }
          r.variants.push_back(*variant);
        }
      }
      detail::read(body, "run.", "alpha", r.alpha);
      detail::read(body, "run.", "c1", r.c1);
      detail::read(body, "run.", "c2", r.c2);
      detail::read(body, "run.", "c3", r.c3);
      detail::read(body, "run.", "theta_follows_decay", r.theta_follows_decay);
      detail::read(body, "run.", "tau", r.tau);
      detail::read(body, "run.", "decay_factor", r.decay_factor);
      detail::read(body, "run.", "decay_period", r.decay_period);
      detail::read(body, "run.", "delta", r.delta);
      detail::read(body, "run.", "delta_adaptive", r.delta_adaptive);
      detail::read(body, "run.", "delta_max", r.delta_max);
      detail::read(body, "run.", "delta_target_bias", r.delta_target_bias);
      detail::read(body, "run.", "delta_lipschitz", r.delta_lipschitz);
      detail::read(body, "run.", "clamp_z", r.clamp_z);
      detail::read(body, "run.", "init_scale", r.init_scale);
      detail::read(body, "run.", "iterations", r.iterations);
      detail::read(body, "run.", "probe_every", r.probe_every);
      detail::read(body, "run.", "trials", r.trials);
      detail::read(body, "run.", "base_seed", r.base_seed);
      detail::read(body, "run.", "out_dir", r.out_dir);
      detail::read(body, "run.", "workers", r.workers);
      detail::read(body, "run.", "rel_tol", r.rel_tol);
      detail::read(body, "run.", "window", r.window);
      detail::read(body, "run.", "metric", r.metric);
      detail::read(body, "run.", "wall_seconds", r.wall_seconds);
    } else {
      throw ConfigError(ErrorCode::ValidationError, section, "unknown section");
    }
  }
  if (!have_problem) throw ConfigError(ErrorCode::ValidationError, "problem", "missing [problem]");
  if (!have_run) throw ConfigError(ErrorCode::ValidationError, "run", "missing [run]");
  validate(cfg);
  return cfg;
}

// ---------------------------------------------------------------------------
// JSON (manifest) form
// ---------------------------------------------------------------------------

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ProblemConfig, family, seed, nodes, dim_x, dim_y, conditioning,
                                   heterogeneity, batch, hessian_noise, jacobian_noise,
                                   gradient_noise, coupling, upper_reg)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(TopologyConfig, name, kind, self_weight, neighbor_weight, rows,
                                   cols, file)

inline void to_json(nlohmann::json& j, const RunConfig& r) {
  std::vector<std::string> variants;
  for (Variant v : r.variants) variants.emplace_back(variant_name(v));
  j = nlohmann::json{{"variants", variants},
                     {"alpha", r.alpha},
                     {"c1", r.c1},
                     {"c2", r.c2},
                     {"c3", r.c3},
                     {"theta_follows_decay", r.theta_follows_decay},
                     {"tau", r.tau},
                     {"decay_factor", r.decay_factor},
                     {"decay_period", r.decay_period},
                     {"delta", r.delta},
                     {"delta_adaptive", r.delta_adaptive},
                     {"delta_max", r.delta_max},
                     {"delta_target_bias", r.delta_target_bias},
                     {"delta_lipschitz", r.delta_lipschitz},
                     {"clamp_z", r.clamp_z},
                     {"init_scale", r.init_scale},
                     {"iterations", r.iterations},
                     {"probe_every", r.probe_every},
                     {"trials", r.trials},
                     {"base_seed", r.base_seed},
                     {"out_dir", r.out_dir},
                     {"workers", r.workers},
                     {"rel_tol", r.rel_tol},
                     {"window", r.window},
                     {"metric", r.metric},
                     {"wall_seconds", r.wall_seconds}};
}

inline void from_json(const nlohmann::json& j, RunConfig& r) {
  r.variants.clear();
  for (const auto& name : j.at("variants")) {
    const auto v = parse_variant(name.get<std::string>());
    if (!v) throw ConfigError(ErrorCode::ValidationError, "run.variants", "unknown variant");
    r.variants.push_back(*v);
  }
  j.at("alpha").get_to(r.alpha);
  j.at("c1").get_to(r.c1);
  j.at("c2").get_to(r.c2);
  j.at("c3").get_to(r.c3);
  j.at("theta_follows_decay").get_to(r.theta_follows_decay);
  j.at("tau").get_to(r.tau);
  j.at("decay_factor").get_to(r.decay_factor);
  j.at("decay_period").get_to(r.decay_period);
  j.at("delta").get_to(r.delta);
  j.at("delta_adaptive").get_to(r.delta_adaptive);
  j.at("delta_max").get_to(r.delta_max);
  j.at("delta_target_bias").get_to(r.delta_target_bias);
  j.at("delta_lipschitz").get_to(r.delta_lipschitz);
  j.at("clamp_z").get_to(r.clamp_z);
  j.at("init_scale").get_to(r.init_scale);
  j.at("iterations").get_to(r.iterations);
  j.at("probe_every").get_to(r.probe_every);
  j.at("trials").get_to(r.trials);
  j.at("base_seed").get_to(r.base_seed);
  j.at("out_dir").get_to(r.out_dir);
  j.at("workers").get_to(r.workers);
  j.at("rel_tol").get_to(r.rel_tol);
  j.at("window").get_to(r.window);
  j.at("metric").get_to(r.metric);
  j.at("wall_seconds").get_to(r.wall_seconds);
}

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ExperimentConfig, problem, topologies, run)

/// FNV-1a over the canonical JSON form, as 16 hex digits.
inline std::string config_hash(const ExperimentConfig& cfg) {
  const std::string text = nlohmann::json(cfg).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace dsoba
