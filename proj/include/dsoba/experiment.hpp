#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "json.hpp"

#include "dsoba/config.hpp"
#include "dsoba/csv.hpp"
#include "dsoba/engine.hpp"
#include "dsoba/logcosh.hpp"
#include "dsoba/metrics.hpp"
#include "dsoba/quadratic.hpp"
#include "dsoba/ridge.hpp"
#include "dsoba/topology.hpp"

namespace dsoba {

inline constexpr const char* kOutDirEnv = "DSOBA_OUT_DIR";
inline constexpr const char* kCentralizedTopology = "centralized";

enum ExitCode : int { kExitOk = 0, kExitConfig = 1, kExitDivergence = 2, kExitIo = 3 };

using AnyProblem = std::variant<QuadraticProblem, RidgeTuningProblem, LogCoshProblem>;

inline QuadraticNoise noise_of(const ProblemConfig& c) {
  QuadraticNoise n;
  n.hessian = c.hessian_noise;
  n.jacobian = c.jacobian_noise;
  n.gradient = c.gradient_noise;
  return n;
}

inline AnyProblem make_problem(const ProblemConfig& c) {
  if (c.family == "quadratic") {
    QuadraticSpec s;
    s.seed = c.seed;
    s.n_nodes = c.nodes;
    s.dim_x = c.dim_x;
    s.dim_y = c.dim_y;
    s.conditioning = c.conditioning;
    s.heterogeneity = c.heterogeneity;
    s.noise = noise_of(c);
    return make_quadratic(s);
  }
  if (c.family == "trivial") return make_trivial(c.nodes, c.dim_y, noise_of(c));
  if (c.family == "ridge") {
    RidgeTuningSpec s;
    s.seed = c.seed;
    s.dim = c.dim_y;
    s.heterogeneity = c.heterogeneity;
    s.batch = c.batch;
    return make_ridge_tuning(s, c.nodes);
  }
  if (c.family == "logcosh") {
    LogCoshSpec s;
    s.seed = c.seed;
    s.n_nodes = c.nodes;
    s.dim_x = c.dim_x;
    s.dim_y = c.dim_y;
    s.coupling = c.coupling;
    s.heterogeneity = c.heterogeneity;
    s.upper_reg = c.upper_reg;
    s.noise = noise_of(c);
    return make_logcosh(s);
  }
  throw ConfigError(ErrorCode::ValidationError, "problem.family", "unknown family '" + c.family + "'");
}

/// Centralized variant that shares the hvp mode of `v`.
inline Variant reference_variant(Variant v) {
  return uses_finite_differences(v) ? Variant::CentralizedFirstOrder : Variant::Centralized;
}

struct RunOverrides {
  std::optional<std::string> out_dir;
  std::optional<int> workers;
  std::optional<int> trials;
};

/// One (topology, variant, trial) cell of a sweep.
struct Cell {
  std::string topology;
  Variant variant = Variant::SecondOrder;
  int trial = 0;
  std::uint64_t run_seed = 0;
};

struct CellResult {
  Cell cell;
  RunRecord record;
  std::string status = "pending";  // ok | diverged | timeout | error
  std::string error;
  long failed_iteration = -1;
  double wall_seconds = 0.0;
  std::string csv_path;
};

struct ExperimentResult {
  int exit_code = kExitOk;
  std::string out_dir;
  std::vector<CellResult> cells;
  nlohmann::json manifest;
};

inline std::string resolve_out_dir(const ExperimentConfig& cfg, const RunOverrides& ov) {
  if (ov.out_dir && !ov.out_dir->empty()) return *ov.out_dir;
  if (!cfg.run.out_dir.empty()) return cfg.run.out_dir;
  if (const char* env = std::getenv(kOutDirEnv); env && *env) return env;
  return "dsoba_out";
}

inline std::string run_file_name(const Cell& c) {
  return c.topology + "__" + variant_name(c.variant) + "__trial" + std::to_string(c.trial) + ".csv";
}

/// Cells in a fixed order: decentralized (topology, variant, trial), then one
/// centralized reference per needed hvp mode and trial.
inline std::vector<Cell> plan_cells(const ExperimentConfig& cfg, int trials) {
  std::vector<Variant> decentral;
  std::vector<Variant> central;
  auto add = [](std::vector<Variant>& list, Variant v) {
    for (Variant u : list) {
      if (u == v) return;
    }
    list.push_back(v);
  };
  for (Variant v : cfg.run.variants) {
    if (is_centralized(v)) {
      add(central, v);
    } else {
      add(decentral, v);
      add(central, reference_variant(v));
    }
  }
  std::vector<Cell> cells;
  for (const auto& topo : cfg.topologies) {
    for (Variant v : decentral) {
      for (int k = 0; k < trials; ++k) {
        cells.push_back({topo.name, v, k, cfg.run.base_seed + static_cast<std::uint64_t>(k)});
      }
    }
  }
  for (Variant v : central) {
    for (int k = 0; k < trials; ++k) {
      cells.push_back({kCentralizedTopology, v, k, cfg.run.base_seed + static_cast<std::uint64_t>(k)});
    }
  }
  return cells;
}

namespace detail {

template <typename P>
nlohmann::json constants_json(const P& problem) {
  ProblemConstants c = problem.constants();
  if constexpr (std::is_same_v<P, RidgeTuningProblem>) {
    c = problem.estimate_constants(5.0, 16, 200, 0x5eed);
  }
  nlohmann::json j{{"mu_g", c.mu_g}};
  auto put = [&j](const char* key, const std::optional<double>& v) {
    if (v) j[key] = *v;
  };
  put("L_f", c.L_f);
  put("L_grad_f", c.L_grad_f);
  put("L_grad_g", c.L_grad_g);
  put("L_hess_g", c.L_hess_g);
  put("sigma", c.sigma);
  put("b1", c.b1);
  put("b2", c.b2);
  return j;
}

inline void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) {
    throw Error(ErrorCode::IoError, "cannot create directory " + dir.string());
  }
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

}  // namespace detail

/// Runs the full sweep and writes runs/*.csv, summary.csv and manifest.json
/// under the output directory. Divergent runs are recorded, not fatal.
inline ExperimentResult run_experiment(ExperimentConfig cfg, const RunOverrides& ov = {}) {
  if (ov.trials) cfg.run.trials = *ov.trials;
  if (ov.workers) cfg.run.workers = *ov.workers;
  validate(cfg);

  ExperimentResult result;
  result.out_dir = resolve_out_dir(cfg, ov);
  const std::filesystem::path root(result.out_dir);
  detail::ensure_dir(root / "runs");

  const std::string hash = config_hash(cfg);
  const AnyProblem problem = make_problem(cfg.problem);
  const int n = cfg.problem.nodes;

  std::map<std::string, MixingMatrix> mixing;
  for (const auto& t : cfg.topologies) mixing.emplace(t.name, t.build(n));
  mixing.emplace(kCentralizedTopology, build_topology(FullyConnected{}, n));

  const std::vector<Cell> cells = plan_cells(cfg, cfg.run.trials);
  result.cells.resize(cells.size());
  for (std::size_t k = 0; k < cells.size(); ++k) result.cells[k].cell = cells[k];

  ProbeSpec probe;
  probe.every = cfg.run.probe_every;
  probe.wall_seconds = cfg.run.wall_seconds;
  InitSpec init_spec;
  init_spec.scale = cfg.run.init_scale;

  auto execute = [&](CellResult& out) {
    const Cell& c = out.cell;
    out.record.meta.config_hash = hash;
    out.record.meta.problem_seed = cfg.problem.seed;
    out.record.meta.topology = c.topology;
    out.record.meta.trial = c.trial;
    const auto start = std::chrono::steady_clock::now();
    try {
      std::visit(
          [&](const auto& p) {
            run_into(p, mixing.at(c.topology), cfg.run.hyper(c.variant), cfg.run.iterations,
                     c.run_seed, probe, out.record, init_spec);
          },
          problem);
      out.status = "ok";
    } catch (const DivergenceError& e) {
      out.status = "diverged";
      out.error = e.what();
      out.failed_iteration = e.iteration();
    } catch (const Error& e) {
      out.status = e.code() == ErrorCode::WallClockLimit ? "timeout" : "error";
      out.error = e.what();
    } catch (const std::exception& e) {
      out.status = "error";
      out.error = e.what();
    }
    out.record.meta.topology = c.topology;
    out.record.meta.trial = c.trial;
    out.record.meta.run_seed = c.run_seed;
    out.record.meta.variant = variant_name(c.variant);
    out.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };

  const int workers = std::max(1, std::min<int>(cfg.run.workers, static_cast<int>(cells.size())));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < result.cells.size(); k = next++) execute(result.cells[k]);
  };
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  // sequential reduce
  bool any_failed = false;
  std::vector<RunRecord> completed;
  for (auto& r : result.cells) {
    r.csv_path = (std::filesystem::path("runs") / run_file_name(r.cell)).string();
    write_run_csv((root / r.csv_path).string(), r.record);
    if (r.status == "ok") {
      completed.push_back(r.record);
    } else {
      any_failed = true;
    }
  }
  {
    std::ostringstream summary;
    if (completed.empty()) {
      write_summary_csv(summary, {});
    } else {
      write_summary_csv(summary, summarize(completed));
    }
    detail::write_text(root / "summary.csv", summary.str());
  }

  const Metric metric = *parse_metric(cfg.run.metric);
  auto find_reference = [&](const Cell& c) -> const CellResult* {
    const Variant ref = reference_variant(c.variant);
    for (const auto& r : result.cells) {
      if (r.cell.topology == kCentralizedTopology && r.cell.variant == ref &&
          r.cell.trial == c.trial) {
        return &r;
      }
    }
    return nullptr;
  };

  nlohmann::json runs = nlohmann::json::array();
  for (const auto& r : result.cells) {
    nlohmann::json j{{"topology", r.cell.topology},
                     {"variant", variant_name(r.cell.variant)},
                     {"trial", r.cell.trial},
                     {"run_seed", r.cell.run_seed},
                     {"status", r.status},
                     {"wall_seconds", r.wall_seconds},
                     {"csv", r.csv_path},
                     {"probes", r.record.probes.size()}};
    if (!r.error.empty()) j["error"] = r.error;
    if (r.failed_iteration >= 0) j["failed_iteration"] = r.failed_iteration;
    if (r.cell.topology != kCentralizedTopology) {
      const CellResult* ref = find_reference(r.cell);
      nlohmann::json tr{{"reference", ref ? ref->csv_path : std::string()},
                        {"metric", cfg.run.metric},
                        {"rel_tol", cfg.run.rel_tol},
                        {"window", cfg.run.window}};
      if (ref && r.status == "ok" && ref->status == "ok") {
        try {
          const auto est =
              transient_cutoff(r.record, ref->record, cfg.run.rel_tol, cfg.run.window, metric);
          tr["cutoff_iteration"] = est.cutoff_iteration;
          tr["matched"] = est.matched;
        } catch (const Error& e) {
          tr["error"] = e.what();
        }
      } else {
        tr["error"] = "run or reference did not complete";
      }
      j["transient"] = tr;
    }
    runs.push_back(std::move(j));
  }

  nlohmann::json topologies = nlohmann::json::object();
  for (const auto& [name, w] : mixing) {
    topologies[name] = {{"rho", w.rho()}, {"spectral_gap", 1.0 - w.rho()}};
  }

  result.exit_code = any_failed ? kExitDivergence : kExitOk;
  result.manifest = {{"config", cfg},
                     {"config_hash", hash},
                     {"problem_seed", cfg.problem.seed},
                     {"base_seed", cfg.run.base_seed},
                     {"topologies", topologies},
                     {"constants", std::visit([](const auto& p) { return detail::constants_json(p); },
                                              problem)},
                     {"runs", runs},
                     {"status", any_failed ? "partial" : "complete"},
                     {"exit_code", result.exit_code}};
  detail::write_text(root / "manifest.json", result.manifest.dump(2) + "\n");
  return result;
}

}  // namespace dsoba
