#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "dsoba/dsoba.hpp"

namespace {

using namespace dsoba;
namespace fs = std::filesystem;

const std::string kMinimal = R"(
[problem]
family = quadratic
seed = 3
nodes = 4
dim_x = 2
dim_y = 3

[topology.ring]
kind = ring

[run]
variants = so, fo
alpha = 0.05
iterations = 10
probe_every = 2
trials = 1
)";

const std::string kDiverging = R"(
[problem]
family = trivial
nodes = 3
dim_y = 1

[topology.ring]
kind = ring

[run]
variants = so
alpha = 5
c3 = 0.1
init_scale = 1
iterations = 10000
probe_every = 1
)";

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("dsoba_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

fs::path write_file(const fs::path& dir, const std::string& name, const std::string& text) {
  const fs::path p = dir / name;
  std::ofstream(p, std::ios::binary) << text;
  return p;
}

struct Cli {
  int code;
  std::string out;
};

Cli cli(const std::string& args) {
  const std::string cmd = std::string(DSOBA_CLI) + " " + args + " 2>/dev/null";
  FILE* pipe = popen(cmd.c_str(), "r");
  std::string out;
  std::array<char, 256> buf{};
  while (pipe && std::fgets(buf.data(), buf.size(), pipe)) out += buf.data();
  const int status = pipe ? pclose(pipe) : -1;
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

TEST(Config, ParsesTheMinimalConfig) {
  const auto cfg = parse_config(kMinimal);
  EXPECT_EQ(cfg.problem.family, "quadratic");
  EXPECT_EQ(cfg.problem.nodes, 4);
  EXPECT_EQ(cfg.problem.dim_y, 3);
  ASSERT_EQ(cfg.topologies.size(), 1u);
  EXPECT_EQ(cfg.topologies[0].name, "ring");
  EXPECT_EQ(cfg.run.variants, (std::vector<Variant>{Variant::SecondOrder, Variant::FirstOrder}));
  EXPECT_EQ(cfg.run.alpha, 0.05);
  EXPECT_EQ(cfg.run.iterations, 10);
}

TEST(Config, UnknownKeyIsNamed) {
  std::string text = kMinimal + "alpha_zero = 0.1\n";
  try {
    parse_config(text);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.code(), ErrorCode::ValidationError);
    EXPECT_EQ(e.key(), "run.alpha_zero");
  }
}

TEST(Config, OutOfRangeValueIsNamed) {
  std::string text = kMinimal;
  text.replace(text.find("nodes = 4"), 9, "nodes = 0");
  try {
    parse_config(text);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.key(), "problem.nodes");
  }
}

TEST(Config, MalformedIniReportsTheLine) {
  try {
    parse_config("[problem]\nfamily = quadratic\n[run\n");
    FAIL() << "expected ParseError";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.code(), ErrorCode::ParseError);
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(Config, ShippedConfigsAreValid) {
  int count = 0;
  for (const auto& entry : fs::directory_iterator(DSOBA_CONFIG_DIR)) {
    if (entry.path().extension() != ".ini") continue;
    EXPECT_NO_THROW(parse_config(slurp(entry.path()))) << entry.path();
    ++count;
  }
  EXPECT_GE(count, 3);
}

TEST(Config, JsonRoundTripAndHash) {
  const auto cfg = parse_config(slurp(fs::path(DSOBA_CONFIG_DIR) / "ridge_mild.ini"));
  const auto back = nlohmann::json::parse(nlohmann::json(cfg).dump()).get<ExperimentConfig>();
  EXPECT_TRUE(back == cfg);
  EXPECT_EQ(config_hash(back), config_hash(cfg));
  EXPECT_EQ(config_hash(cfg).size(), 16u);
  auto other = cfg;
  other.run.alpha *= 2.0;
  EXPECT_NE(config_hash(other), config_hash(cfg));
}

TEST(Csv, RoundTripIsExact) {
  RunRecord r;
  for (int k = 0; k < 5; ++k) {
    Probe p;
    p.t = 10 * k;
    p.grad_sq_norm = 1.0 / 3.0 * (k + 1);
    p.phi_gap = k == 2 ? std::numeric_limits<double>::quiet_NaN() : 1e-300 * k;
    p.consensus_error = 0.1 + k;
    p.upper_loss = -2.5e7;
    p.alpha = 0.1;
    r.probes.push_back(p);
  }
  std::stringstream ss;
  write_run_csv(ss, r);
  EXPECT_EQ(ss.str().substr(0, ss.str().find('\n')), kRunCsvHeader);
  const auto back = read_run_csv(ss);
  ASSERT_EQ(back.probes.size(), r.probes.size());
  for (std::size_t k = 0; k < r.probes.size(); ++k) {
    EXPECT_EQ(back.probes[k].t, r.probes[k].t);
    EXPECT_EQ(back.probes[k].grad_sq_norm, r.probes[k].grad_sq_norm);
    if (k == 2) {
      EXPECT_TRUE(std::isnan(back.probes[k].phi_gap));
    } else {
      EXPECT_EQ(back.probes[k].phi_gap, r.probes[k].phi_gap);
    }
    EXPECT_EQ(back.probes[k].consensus_error, r.probes[k].consensus_error);
    EXPECT_EQ(back.probes[k].upper_loss, r.probes[k].upper_loss);
  }
}

TEST(Csv, RejectsForeignHeader) {
  std::stringstream ss("t,loss\n0,1\n");
  try {
    read_run_csv(ss);
    FAIL() << "expected ParseError";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ParseError);
  }
}

TEST(Experiment, WritesRunsSummaryAndManifest) {
  const auto dir = scratch("layout");
  RunOverrides ov;
  ov.out_dir = dir.string();
  const auto res = run_experiment(parse_config(kMinimal), ov);
  EXPECT_EQ(res.exit_code, kExitOk);
  for (const char* name : {"ring__so__trial0.csv", "ring__fo__trial0.csv",
                           "centralized__centralized__trial0.csv",
                           "centralized__centralized_fo__trial0.csv"}) {
    const auto p = dir / "runs" / name;
    ASSERT_TRUE(fs::exists(p)) << name;
    EXPECT_EQ(read_run_csv(p.string()).grid(), (std::vector<long>{0, 2, 4, 6, 8, 10}));
  }
  EXPECT_TRUE(fs::exists(dir / "summary.csv"));
  const auto manifest = nlohmann::json::parse(slurp(dir / "manifest.json"));
  EXPECT_EQ(manifest.at("config_hash"), config_hash(parse_config(kMinimal)));
  EXPECT_TRUE(manifest.contains("topologies"));
  EXPECT_EQ(manifest.at("runs").size(), 4u);
}

TEST(Experiment, RepeatedRunsAreByteIdentical) {
  const auto cfg = parse_config(kMinimal);
  std::vector<fs::path> dirs;
  for (int workers : {1, 1, 3}) {
    const auto dir = scratch("repeat" + std::to_string(dirs.size()));
    RunOverrides ov;
    ov.out_dir = dir.string();
    ov.workers = workers;
    ASSERT_EQ(run_experiment(cfg, ov).exit_code, kExitOk);
    dirs.push_back(dir);
  }
  for (const auto& entry : fs::directory_iterator(dirs[0] / "runs")) {
    const auto name = entry.path().filename();
    EXPECT_EQ(slurp(entry.path()), slurp(dirs[1] / "runs" / name)) << name;
    EXPECT_EQ(slurp(entry.path()), slurp(dirs[2] / "runs" / name)) << name;
  }
  EXPECT_EQ(slurp(dirs[0] / "summary.csv"), slurp(dirs[2] / "summary.csv"));
}

TEST(Experiment, DivergenceKeepsPartialRunAndFlagsExit) {
  const auto dir = scratch("diverge");
  RunOverrides ov;
  ov.out_dir = dir.string();
  const auto res = run_experiment(parse_config(kDiverging), ov);
  EXPECT_EQ(res.exit_code, kExitDivergence);
  bool saw = false;
  for (const auto& c : res.cells) {
    if (c.status == "diverged") {
      saw = true;
      EXPECT_GT(c.failed_iteration, 0);
      EXPECT_FALSE(read_run_csv((dir / c.csv_path).string()).probes.empty());
    }
  }
  EXPECT_TRUE(saw);
}

TEST(Cli, ValidatePrintsHash) {
  const auto dir = scratch("cli_validate");
  const auto cfg = write_file(dir, "min.ini", kMinimal);
  const auto r = cli("validate " + cfg.string());
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.out, "ok " + config_hash(parse_config(kMinimal)) + "\n");
}

TEST(Cli, ExitCodes) {
  const auto dir = scratch("cli_codes");
  const auto bad = write_file(dir, "bad.ini", kMinimal + "alpha_zero = 1\n");
  EXPECT_EQ(cli("validate " + bad.string()).code, kExitConfig);
  EXPECT_EQ(cli("validate " + (dir / "missing.ini").string()).code, kExitIo);
  EXPECT_EQ(cli("frobnicate").code, kExitConfig);

  const auto div = write_file(dir, "div.ini", kDiverging);
  EXPECT_EQ(cli("run " + div.string() + " --out " + (dir / "div").string()).code, kExitDivergence);
}

TEST(Cli, RunThenTransient) {
  const auto dir = scratch("cli_run");
  const auto cfg = write_file(dir, "min.ini", kMinimal);
  const auto out = dir / "out";
  const auto r = cli("run " + cfg.string() + " --out " + out.string() + " --workers 2");
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("4/4 runs completed"), std::string::npos) << r.out;

  const auto t = cli("transient " + (out / "runs" / "ring__so__trial0.csv").string() + " " +
                     (out / "runs" / "centralized__centralized__trial0.csv").string() +
                     " --rel-tol 0.5 --window 3");
  EXPECT_EQ(t.code, 0);
  EXPECT_EQ(t.out.rfind("cutoff_iteration=", 0), 0u) << t.out;

  const auto mismatch = write_file(dir, "short.csv", std::string(kRunCsvHeader) + "\n0,1,1,0,1,0.1\n");
  EXPECT_EQ(cli("transient " + mismatch.string() + " " +
                (out / "runs" / "ring__so__trial0.csv").string())
                .code,
            kExitConfig);
}

}  // namespace
