// mtbench: command-line front end for the multi-task kernel bandit library.
//
// Subcommands:
//   run         run a benchmark (regret.csv + summary.csv under --out)
//   diagnose    run the numerical self-check suite (diagnostics.csv)
//   fetch-data  download manifest datasets into the data directory
//   info        describe policies, environments, and defaults
//
// Exit codes: 0 ok, 1 generic failure, 2 unknown policy/environment,
// 3 dataset failure, 4 diagnostic check failure.

#include "kmtl/experiment.hpp"

#include "CLI11.hpp"

#include <iostream>
#include <optional>

namespace {

struct Overrides {
  std::optional<std::string> env;
  std::vector<std::string> policies;
  std::optional<int> T;
  std::optional<int> runs;
  std::optional<std::uint64_t> seed;
  std::optional<double> lambda;
  std::optional<std::string> beta;
  std::optional<std::string> out_dir;
  std::optional<std::string> data_dir;
  std::optional<std::string> manifest;
  std::optional<int> threads;
  std::optional<int> num_arms;
  std::optional<double> noise_sd;
  std::optional<bool> diagnostics;
  std::optional<bool> incremental;
  std::optional<bool> inject_width_fault;
};

void add_common_options(CLI::App& cmd, std::string& config_path, Overrides& ov) {
  cmd.add_option("-c,--config", config_path, "INI config file to start from");
  cmd.add_option("--seed", ov.seed, "Base seed for every derived random stream");
  cmd.add_option("--lambda", ov.lambda, "Ridge regularization");
  cmd.add_option("--out", ov.out_dir, "Output directory ('' disables file output)");
  cmd.add_option("--data-dir", ov.data_dir, "Dataset directory");
  cmd.add_option("--manifest", ov.manifest, "Dataset manifest path");
}

kmtl::ExperimentConfig build_config(const std::string& config_path, const Overrides& ov) {
  kmtl::ExperimentConfig config;
  if (!config_path.empty()) config = kmtl::parse_config_file(config_path);
  if (ov.env) config.env = *ov.env;
  if (!ov.policies.empty()) config.policies = ov.policies;
  if (ov.T) config.T = *ov.T;
  if (ov.runs) config.runs = *ov.runs;
  if (ov.seed) config.seed = *ov.seed;
  if (ov.lambda) config.lambda = *ov.lambda;
  if (ov.beta) config.beta = *ov.beta;
  if (ov.out_dir) config.out_dir = *ov.out_dir;
  if (ov.data_dir) config.data_dir = *ov.data_dir;
  if (ov.manifest) config.manifest_path = *ov.manifest;
  if (ov.threads) config.threads = *ov.threads;
  if (ov.num_arms) config.num_arms = *ov.num_arms;
  if (ov.noise_sd) config.noise_sd = *ov.noise_sd;
  if (ov.diagnostics) config.diagnostics = *ov.diagnostics;
  if (ov.incremental) config.incremental = *ov.incremental;
  if (ov.inject_width_fault) config.inject_width_fault = *ov.inject_width_fault;
  return config;
}

int cmd_run(const kmtl::ExperimentConfig& config) {
  const kmtl::ExperimentResult result = kmtl::run_experiment(config);
  if (result.status != kmtl::kExitOk && !result.error.empty()) {
    std::cerr << "error: " << result.error << "\n";
    return result.status;
  }
  for (std::size_t p = 0; p < result.policies.size(); ++p) {
    const kmtl::AggregateSummary agg = kmtl::aggregate_runs(result.traces[p]);
    const int last = static_cast<int>(agg.mean.size()) - 1;
    std::cout << result.policies[p] << ": final regret " << agg.mean(last) << " +- "
              << agg.stddev(last) << " over " << config.runs << " runs\n";
  }
  if (result.width_violations > 0)
    std::cout << "width cap violations: " << result.width_violations << "\n";
  if (!config.out_dir.empty())
    std::cout << "wrote " << config.out_dir << "/regret.csv and summary.csv\n";
  std::cerr << "elapsed: " << result.elapsed_seconds << " s\n";
  return result.status;
}

int cmd_diagnose(const kmtl::ExperimentConfig& config) {
  const kmtl::DiagnosticsResult result = kmtl::run_diagnostics(config);
  for (const kmtl::DiagnosticRecord& rec : result.records)
    std::cout << (rec.pass ? "PASS  " : "FAIL  ") << rec.name << "  (lhs=" << rec.lhs
              << ", rhs=" << rec.rhs << ")\n";
  std::cout << result.records.size() - result.failed.size() << "/" << result.records.size()
            << " checks passed\n";
  if (!result.failed.empty()) std::cerr << "error: " << result.failed.size() << " checks failed\n";
  return result.status;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mtbench — multi-task kernel contextual bandit benchmark"};
  app.require_subcommand(1);

  std::string config_path;
  Overrides ov;

  CLI::App* run = app.add_subcommand("run", "Run a benchmark experiment");
  add_common_options(*run, config_path, ov);
  run->add_option("--env", ov.env, "Environment: 'synthetic', a manifest name, or a file");
  run->add_option("--policy", ov.policies,
                  "Policy to run (repeatable; replaces the configured list)");
  run->add_option("--T", ov.T, "Rounds per episode");
  run->add_option("--runs", ov.runs, "Independent runs per policy");
  run->add_option("--beta", ov.beta, "Exploration coefficient ('auto' or a number)");
  run->add_option("--threads", ov.threads, "Worker threads (0 = hardware)");
  run->add_option("--num-arms", ov.num_arms, "Arms in the synthetic environment");
  run->add_option("--noise-sd", ov.noise_sd, "Reward noise in the synthetic environment");
  run->add_flag("--diagnostics,!--no-diagnostics", ov.diagnostics,
                "Record per-run spectral diagnostics (exit 4 on failure)");
  run->add_flag("--incremental,!--no-incremental", ov.incremental,
                "Incremental per-level solver updates in the level-scheme policy");

  CLI::App* diagnose = app.add_subcommand("diagnose", "Run the numerical self-checks");
  add_common_options(*diagnose, config_path, ov);
  diagnose->add_flag("--inject-width-fault", ov.inject_width_fault,
                     "Perturb the width checks to prove the suite can fail");

  CLI::App* fetch = app.add_subcommand("fetch-data", "Download datasets from the manifest");
  add_common_options(*fetch, config_path, ov);
  std::vector<std::string> only;
  fetch->add_option("names", only, "Fetch only these manifest entries");

  CLI::App* info = app.add_subcommand("info", "Describe policies, environments, defaults");
  add_common_options(*info, config_path, ov);

  CLI11_PARSE(app, argc, argv);

  try {
    const kmtl::ExperimentConfig config = build_config(config_path, ov);
    if (run->parsed()) return cmd_run(config);
    if (diagnose->parsed()) return cmd_diagnose(config);
    if (fetch->parsed()) {
      std::string manifest = config.manifest_path;
      std::string data_dir = config.data_dir;
      if (const char* env = std::getenv("MTBENCH_DATA_DIR"); env && *env) data_dir = env;
      if (manifest.empty()) manifest = data_dir + "/manifest.json";
      return kmtl::fetch_datasets(manifest, data_dir, only);
    }
    if (info->parsed()) {
      std::cout << kmtl::info_text(config);
      return kmtl::kExitOk;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
