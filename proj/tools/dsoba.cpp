// dsoba: run, validate and analyse decentralized bilevel experiments.

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "dsoba/dsoba.hpp"

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw dsoba::Error(dsoba::ErrorCode::IoError, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int report(const dsoba::Error& e) {
  std::cerr << "error [" << dsoba::to_string(e.code()) << "]";
  if (const auto* ce = dynamic_cast<const dsoba::ConfigError*>(&e); ce && !ce->key().empty()) {
    std::cerr << " key '" << ce->key() << "'";
  }
  std::cerr << ": " << e.what() << '\n';
  switch (e.code()) {
    case dsoba::ErrorCode::IoError: return dsoba::kExitIo;
    case dsoba::ErrorCode::NumericalDivergence: return dsoba::kExitDivergence;
    default: return dsoba::kExitConfig;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Decentralized stochastic bilevel optimization simulator"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  int workers = 0;
  int trials = 0;
  auto* run = app.add_subcommand("run", "Run the sweep described by a config file");
  run->add_option("config", config_path, "Config file")->required();
  run->add_option("--out", out_dir, "Output directory (default: run.out_dir, then $DSOBA_OUT_DIR)");
  run->add_option("--workers", workers, "Concurrent runs")->check(CLI::PositiveNumber);
  run->add_option("--trials", trials, "Override run.trials")->check(CLI::PositiveNumber);

  auto* validate = app.add_subcommand("validate", "Parse and validate a config file");
  validate->add_option("config", config_path, "Config file")->required();

  std::string run_csv;
  std::string ref_csv;
  double rel_tol = 0.2;
  int window = 5;
  std::string metric = "grad_sq_norm";
  auto* transient = app.add_subcommand("transient", "Transient cutoff of a run against a reference");
  transient->add_option("run", run_csv, "Decentralized run CSV")->required();
  transient->add_option("ref", ref_csv, "Centralized reference CSV")->required();
  transient->add_option("--rel-tol", rel_tol, "Relative tolerance")->check(CLI::NonNegativeNumber);
  transient->add_option("--window", window, "Median smoothing window")->check(CLI::PositiveNumber);
  transient->add_option("--metric", metric, "Metric column");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : dsoba::kExitConfig;
  }

  try {
    if (*validate) {
      const auto cfg = dsoba::parse_config(slurp(config_path));
      std::cout << "ok " << dsoba::config_hash(cfg) << '\n';
      return dsoba::kExitOk;
    }
    if (*run) {
      const auto cfg = dsoba::parse_config(slurp(config_path));
      dsoba::RunOverrides ov;
      if (!out_dir.empty()) ov.out_dir = out_dir;
      if (workers > 0) ov.workers = workers;
      if (trials > 0) ov.trials = trials;
      const auto result = dsoba::run_experiment(cfg, ov);
      int failed = 0;
      for (const auto& c : result.cells) {
        if (c.status != "ok") {
          ++failed;
          std::cerr << c.cell.topology << '/' << dsoba::variant_name(c.cell.variant) << '/'
                    << c.cell.trial << ": " << c.status << ": " << c.error << '\n';
        }
      }
      std::cout << result.cells.size() - static_cast<std::size_t>(failed) << '/'
                << result.cells.size() << " runs completed, results in " << result.out_dir
                << '\n';
      return result.exit_code;
    }
    if (*transient) {
      const auto m = dsoba::parse_metric(metric);
      if (!m) {
        throw dsoba::ConfigError(dsoba::ErrorCode::ValidationError, "metric",
                                 "unknown metric '" + metric + "'");
      }
      const auto est = dsoba::transient_cutoff(dsoba::read_run_csv(run_csv),
                                               dsoba::read_run_csv(ref_csv), rel_tol, window, *m);
      std::cout << "cutoff_iteration=" << est.cutoff_iteration
                << " matched=" << (est.matched ? "true" : "false") << " rel_tol=" << rel_tol
                << " window=" << window << '\n';
      return dsoba::kExitOk;
    }
  } catch (const dsoba::Error& e) {
    return report(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return dsoba::kExitIo;
  }
  return dsoba::kExitOk;
}
