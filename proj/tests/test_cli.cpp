#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "kmtl/experiment.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

using namespace kmtl;
namespace fs = std::filesystem;

namespace {

// Scratch directory cleaned up on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& name) : path_(fs::temp_directory_path() / name) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  std::string str() const { return path_.string(); }
  fs::path path() const { return path_; }

 private:
  fs::path path_;
};

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path);
  out << content;
}

std::vector<Vector> scalar_points(std::initializer_list<double> xs) {
  std::vector<Vector> out;
  for (double x : xs) {
    Vector v(1);
    v(0) = x;
    out.push_back(v);
  }
  return out;
}

int run_tool(const std::string& args) {
  const std::string cmd = std::string(MTBENCH_BIN) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  if (status == -1) return -1;
  return WEXITSTATUS(status);
}

ExperimentConfig base_config(const std::string& out_dir) {
  ExperimentConfig config;
  config.data_dir = TEST_DATA_DIR;
  config.out_dir = out_dir;
  config.threads = 2;
  return config;
}

}  // namespace

TEST_CASE("bandwidth selection: median formula and degenerate fallback") {
  std::vector<std::string> warnings;
  // Two points at distance 2: sigma = 2 / sqrt(2).
  const double two = median_pairwise_bandwidth(scalar_points({0.0, 2.0}), &warnings);
  CHECK(two == doctest::Approx(1.41421).epsilon(1e-5));
  CHECK(warnings.empty());

  // Three collinear points: pairwise distances {1, 2, 3}, median 2.
  const double three = median_pairwise_bandwidth(scalar_points({0.0, 1.0, 3.0}), &warnings);
  CHECK(three == doctest::Approx(2.0 / std::sqrt(2.0)).epsilon(1e-12));
  CHECK(warnings.empty());

  // Identical points fall back to 1 and say so.
  const double degenerate =
      median_pairwise_bandwidth(scalar_points({0.5, 0.5, 0.5}), &warnings);
  CHECK(degenerate == 1.0);
  CHECK(!warnings.empty());
}

TEST_CASE("bandwidth selection: cross-validated pick is deterministic and on-grid") {
  std::vector<Vector> points;
  std::vector<Vector> targets;
  std::mt19937_64 rng(5);
  std::normal_distribution<double> noise(0.0, 0.05);
  for (int i = 0; i < 60; ++i) {
    Vector x(1);
    x(0) = static_cast<double>(i) / 10.0;
    points.push_back(x);
    Vector y(1);
    y(0) = std::sin(x(0)) + noise(rng);
    targets.push_back(y);
  }

  std::vector<std::string> warnings;
  const double first = select_bandwidth(points, targets, "grid-cv", 17, &warnings);
  const double second = select_bandwidth(points, targets, "grid-cv", 17, &warnings);
  CHECK(first == second);
  CHECK(first > 0.0);

  // The pick is one of 7 log-spaced multiples of the median-heuristic value.
  const double median = median_pairwise_bandwidth(points, nullptr);
  bool on_grid = false;
  for (double factor : {0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0})
    if (first == doctest::Approx(median * factor).epsilon(1e-12)) on_grid = true;
  CHECK(on_grid);

  CHECK_THROWS_AS(select_bandwidth(points, targets, "bisection", 17, &warnings),
                  std::invalid_argument);
}

TEST_CASE("config parsing: sections, comments, and error locations") {
  TempDir dir("mtb_cli_config");
  const fs::path path = dir.path() / "experiment.ini";
  write_file(path,
             "# experiment description\n"
             "[experiment]\n"
             "env = synthetic\n"
             "policies = kmtl-ucb, random\n"
             "T = 40\n"
             "runs = 3\n"
             "seed = 9\n"
             "\n"
             "[environment]\n"
             "num_arms = 4\n"
             "noise_sd = 0.01\n"
             "\n"
             "[policy]\n"
             "lambda = 0.5\n"
             "beta = 2.5\n"
             "incremental = yes\n"
             "\n"
             "[kernel]\n"
             "context_bandwidth = 0.9\n"
             "bandwidth_strategy = median\n");
  const ExperimentConfig config = parse_config_file(path.string());
  CHECK(config.env == "synthetic");
  CHECK(config.policies == std::vector<std::string>{"kmtl-ucb", "random"});
  CHECK(config.T == 40);
  CHECK(config.runs == 3);
  CHECK(config.seed == 9);
  CHECK(config.num_arms == 4);
  CHECK(config.noise_sd == doctest::Approx(0.01));
  CHECK(config.lambda == doctest::Approx(0.5));
  CHECK(config.beta == "2.5");
  CHECK(config.incremental);
  CHECK(config.context_bandwidth == "0.9");
  CHECK(config.bandwidth_strategy == "median");

  const fs::path bad = dir.path() / "bad.ini";
  write_file(bad, "[experiment]\nT = 40\nmystery = 1\n");
  try {
    parse_config_file(bad.string());
    FAIL("expected an unknown-key error");
  } catch (const std::invalid_argument& e) {
    const std::string what = e.what();
    CHECK(what.find(":3:") != std::string::npos);
    CHECK(what.find("mystery") != std::string::npos);
  }

  const fs::path malformed = dir.path() / "malformed.ini";
  write_file(malformed, "[experiment]\nno equals sign here\n");
  CHECK_THROWS_AS(parse_config_file(malformed.string()), std::invalid_argument);

  ExperimentConfig entry;
  CHECK_THROWS_AS(apply_config_entry(entry, "mystery", "key", "1"), std::invalid_argument);
  CHECK_THROWS_AS(apply_config_entry(entry, "experiment", "T", "not-a-number"),
                  std::invalid_argument);
}

TEST_CASE("experiment runner: unknown targets exit with the contract code") {
  TempDir dir("mtb_cli_unknown");
  ExperimentConfig config = base_config(dir.str());
  config.policies = {"kmtl-ucb", "thompson"};
  config.T = 10;
  config.runs = 1;
  CHECK(run_experiment(config).status == kExitUnknownTarget);

  ExperimentConfig env_config = base_config(dir.str());
  env_config.env = "no-such-environment";
  env_config.T = 10;
  env_config.runs = 1;
  CHECK(run_experiment(env_config).status == kExitUnknownTarget);
}

TEST_CASE("experiment runner: dataset failures exit with the contract code") {
  TempDir dir("mtb_cli_dataset");
  // A manifest row whose file does not exist.
  write_file(dir.path() / "manifest.json",
             R"({"datasets":[{"name":"ghost","path":"ghost.csv","url":"","format":"csv-dense","num_classes":2,"dim":2,"sha256":""}]})");
  ExperimentConfig config;
  config.data_dir = dir.str();
  config.out_dir = "";
  config.env = "ghost";
  config.T = 5;
  config.runs = 1;
  const ExperimentResult missing = run_experiment(config);
  CHECK(missing.status == kExitDatasetError);
  CHECK(!missing.error.empty());

  // A present but malformed file.
  write_file(dir.path() / "mangled.csv", "label,f1\n1,0.5\n2,oops\n");
  write_file(dir.path() / "manifest.json",
             R"({"datasets":[{"name":"mangled","path":"mangled.csv","url":"","format":"csv-dense","num_classes":2,"dim":1,"sha256":""}]})");
  ExperimentConfig bad = config;
  bad.env = "mangled";
  CHECK(run_experiment(bad).status == kExitDatasetError);

  // A dataset too small for the requested horizon.
  write_file(dir.path() / "small.csv", "label,f1\n1,0.1\n2,0.9\n1,0.2\n2,0.8\n1,0.3\n2,0.7\n");
  write_file(dir.path() / "manifest.json",
             R"({"datasets":[{"name":"small","path":"small.csv","url":"","format":"csv-dense","num_classes":2,"dim":1,"sha256":""}]})");
  ExperimentConfig tiny = config;
  tiny.env = "small";
  tiny.T = 50;
  CHECK(run_experiment(tiny).status == kExitDatasetError);
}

TEST_CASE("experiment runner: invalid knobs throw; the tool maps them to exit 1") {
  ExperimentConfig config = base_config("");
  config.T = 0;
  CHECK_THROWS_AS(run_experiment(config), std::invalid_argument);

  ExperimentConfig nobeta = base_config("");
  nobeta.T = 5;
  nobeta.runs = 1;
  nobeta.beta = "what";
  const ExperimentResult result = run_experiment(nobeta);
  CHECK(result.status == 1);
  CHECK(result.error.find("beta") != std::string::npos);
}

TEST_CASE("experiment runner: the oracle baseline has zero regret everywhere") {
  TempDir dir("mtb_cli_oracle");
  ExperimentConfig config = base_config(dir.str());
  config.policies = {"oracle"};
  config.T = 25;
  config.runs = 2;
  const ExperimentResult result = run_experiment(config);
  REQUIRE(result.status == kExitOk);
  REQUIRE(result.traces.size() == 1);
  for (const Vector& trace : result.traces[0]) CHECK(trace.cwiseAbs().maxCoeff() == 0.0);

  const std::string regret = slurp(dir.path() / "regret.csv");
  CHECK(regret.rfind("policy,run,t,cum_regret\n", 0) == 0);
  CHECK(regret.find("oracle,1,1,0") != std::string::npos);
  const std::string summary = slurp(dir.path() / "summary.csv");
  CHECK(summary.find("policy,t,mean,std,ci_lo,ci_hi") != std::string::npos);
  CHECK(summary.find("# T=25") != std::string::npos);
}

TEST_CASE("experiment runner: identical configs write identical bytes") {
  TempDir a("mtb_cli_repeat_a");
  TempDir b("mtb_cli_repeat_b");
  for (const TempDir* dir : {&a, &b}) {
    ExperimentConfig config = base_config(dir->str());
    config.policies = {"kmtl-ucb", "random"};
    config.T = 60;
    config.runs = 2;
    config.seed = 31;
    REQUIRE(run_experiment(config).status == kExitOk);
  }
  CHECK(slurp(a.path() / "regret.csv") == slurp(b.path() / "regret.csv"));
  CHECK(slurp(a.path() / "summary.csv") == slurp(b.path() / "summary.csv"));
}

TEST_CASE("experiment runner: a dataset path runs end to end") {
  TempDir dir("mtb_cli_fixture");
  ExperimentConfig config = base_config(dir.str());
  config.env = std::string(TEST_DATA_DIR) + "/minidigits.csv";
  config.policies = {"kmtl-ucb-est", "kernel-ucb-ind"};
  config.T = 40;
  config.runs = 1;
  const ExperimentResult result = run_experiment(config);
  REQUIRE(result.status == kExitOk);
  CHECK(result.traces.size() == 2);
  CHECK(result.settings.context_bandwidth > 0.0);
  CHECK(result.settings.sigma_z > 0.0);
  // Dataset regret counts misclassifications, so it is integral.
  const double final_regret = result.traces[0][0](39);
  CHECK(final_regret == doctest::Approx(std::round(final_regret)));
}

TEST_CASE("diagnostics suite: green by default, red under the fault hook") {
  TempDir dir("mtb_cli_diag");
  ExperimentConfig config = base_config(dir.str());
  const DiagnosticsResult ok = run_diagnostics(config);
  CHECK(ok.status == kExitOk);
  CHECK(ok.failed.empty());
  CHECK(!ok.records.empty());
  for (const DiagnosticRecord& rec : ok.records) CHECK(rec.pass);
  CHECK(fs::exists(dir.path() / "diagnostics.csv"));
  const std::string csv = slurp(dir.path() / "diagnostics.csv");
  CHECK(csv.rfind("name,lhs,rhs,pass\n", 0) == 0);

  ExperimentConfig faulty = base_config(dir.str());
  faulty.inject_width_fault = true;
  const DiagnosticsResult bad = run_diagnostics(faulty);
  CHECK(bad.status == kExitDiagnosticFailure);
  REQUIRE(!bad.failed.empty());
  bool named = false;
  for (const std::string& name : bad.failed)
    if (name.find("ck/lambda") != std::string::npos) named = true;
  CHECK(named);
}

TEST_CASE("fetch helper: no-URL entries fail only when explicitly requested") {
  TempDir dir("mtb_cli_fetch");
  write_file(dir.path() / "manifest.json",
             R"({"datasets":[{"name":"offline","path":"offline.csv","url":"","format":"csv-dense","num_classes":2,"dim":2,"sha256":""}]})");
  // Blanket fetch: nothing to download, nothing fails.
  CHECK(fetch_datasets((dir.path() / "manifest.json").string(), dir.str()) == 0);
  // Asking for the absent no-URL entry by name is an error.
  CHECK(fetch_datasets((dir.path() / "manifest.json").string(), dir.str(), {"offline"}) ==
        kExitDatasetError);
  // Unknown names are an error too.
  CHECK(fetch_datasets((dir.path() / "manifest.json").string(), dir.str(), {"bogus"}) ==
        kExitDatasetError);
}

TEST_CASE("info text lists policies and bundled environments") {
  ExperimentConfig config = base_config("");
  const std::string text = info_text(config);
  for (const char* needle : {"kmtl-ucb", "kmtl-ucb-est", "kernel-ucb-ind", "kernel-ucb-pool",
                             "sup-kmtl-ucb", "oracle", "random", "synthetic", "minidigits"})
    CHECK(text.find(needle) != std::string::npos);
}

TEST_CASE("command-line tool: exit codes across the subcommands") {
  TempDir dir("mtb_cli_tool");
  const std::string data = std::string(" --data-dir ") + TEST_DATA_DIR;

  CHECK(run_tool("info" + data) == 0);
  CHECK(run_tool("run --env synthetic --policy oracle --T 15 --runs 2 --out " + dir.str() +
                 data) == 0);
  CHECK(fs::exists(dir.path() / "regret.csv"));

  CHECK(run_tool("run --env synthetic --policy thompson --T 5 --runs 1 --out '' " + data) ==
        2);
  CHECK(run_tool("run --env nowhere --policy oracle --T 5 --runs 1 --out '' " + data) == 2);
  CHECK(run_tool("run --env synthetic --policy oracle --T 0 --runs 1 --out '' " + data) == 1);
  CHECK(run_tool("fetch-data bogus" + data) == 3);
  CHECK(run_tool("diagnose --inject-width-fault --out " + dir.str() + data) == 4);
  CHECK(run_tool("diagnose --out " + dir.str() + data) == 0);
  CHECK(run_tool("") != 0);  // a subcommand is required

  // Config file plus flag override.
  write_file(dir.path() / "run.ini",
             "[experiment]\npolicies = oracle\nT = 10\nruns = 1\n[environment]\nnum_arms = 3\n");
  CHECK(run_tool("run -c " + (dir.path() / "run.ini").string() + " --T 12 --out " +
                 dir.str() + data) == 0);
  const std::string summary = slurp(dir.path() / "summary.csv");
  CHECK(summary.find("# T=12") != std::string::npos);
}
