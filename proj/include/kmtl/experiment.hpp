#pragma once

#include "kmtl/analysis.hpp"
#include "kmtl/environments.hpp"
#include "kmtl/policies.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace kmtl {

/// Exit codes shared by the library entry points and the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUnknownTarget = 2;  // unknown policy or environment
inline constexpr int kExitDatasetError = 3;   // dataset load/validation failure
inline constexpr int kExitDiagnosticFailure = 4;

/// Full experiment description: a config file plus command-line overrides
/// resolve into one of these.  String-typed numeric knobs accept "auto".
struct ExperimentConfig {
  std::string env = "synthetic";  // "synthetic" or a dataset name/path
  std::vector<std::string> policies = {"kmtl-ucb"};
  int T = 1000;
  int runs = 10;
  std::uint64_t seed = 42;

  double lambda = 1.0;
  std::string beta = "auto";  // "auto" => alpha + c sqrt(lambda)
  double delta = 0.05;
  double c = 1.0;

  std::string context_bandwidth = "auto";
  std::string embedding_bandwidth = "auto";
  std::string sigma_z = "auto";
  double task_bandwidth = 0.3;         // synthetic known-similarity kernel
  std::string bandwidth_strategy = "grid-cv";  // "median" | "grid-cv"

  int num_arms = 5;       // synthetic
  double noise_sd = 0.0;  // synthetic
  double validation_fraction = 0.15;
  int estimation_period = 1;
  bool incremental = false;

  int threads = 0;  // 0 => hardware concurrency
  bool diagnostics = false;
  bool inject_width_fault = false;  // diagnostics mutation hook

  std::string out_dir = "out";
  std::string data_dir = "data";  // MTBENCH_DATA_DIR overrides
  std::string manifest_path;      // default: <data_dir>/manifest.json
};

/// Parse an INI-style config file ([section] blocks of key=value lines) into
/// overrides applied on top of the defaults.  Unknown keys are errors.
ExperimentConfig parse_config_file(const std::string& path);
void apply_config_entry(ExperimentConfig& config, const std::string& section,
                        const std::string& key, const std::string& value);

/// Resolved per-experiment knobs derived from the config (bandwidths, beta),
/// recorded into summary metadata.
struct ResolvedSettings {
  double context_bandwidth = 1.0;
  double embedding_bandwidth = 1.0;
  double sigma_z = 1.0;
  double beta = 1.0;
  std::vector<std::string> warnings;
};

struct ExperimentResult {
  int status = kExitOk;
  std::string error;

  std::vector<std::string> policies;
  std::vector<std::vector<Vector>> traces;      // [policy][run], cumulative regret
  std::vector<std::vector<History>> histories;  // kept when requested
  std::vector<std::vector<Matrix>> final_similarities;  // kernel policies only
  long long width_violations = 0;
  std::vector<DiagnosticRecord> diagnostics;  // when config.diagnostics
  ResolvedSettings settings;
  double elapsed_seconds = 0.0;
};

/// Run every (policy, run) episode in a worker pool with per-run seeded
/// streams, gather results in run-index order, and write regret.csv plus
/// summary.csv (and diagnostics.csv when enabled) under config.out_dir.
/// An empty out_dir skips file output.  Never throws for the contracted
/// error classes: unknown policy/environment and dataset failures surface in
/// `status`/`error`.
ExperimentResult run_experiment(const ExperimentConfig& config,
                                bool keep_histories = false);

struct DiagnosticsResult {
  int status = kExitOk;
  std::vector<DiagnosticRecord> records;
  std::vector<std::string> failed;
};

/// The seeded self-check suite behind the `diagnose` subcommand: width cap
/// and lower-bound checks (including a constructed instance where the lower
/// bound is positive), similarity-sweep monotonicity, spectrum majorization,
/// closed-form eigenvalue checks, determinant cross-checks, and the per-run
/// spectral assertions on a small seeded episode.  Writes
/// <out_dir>/diagnostics.csv when out_dir is set.
DiagnosticsResult run_diagnostics(const ExperimentConfig& config);

/// Median-pairwise-distance / sqrt(2) bandwidth, or the 5-fold ridge
/// cross-validation pick over a log-spaced grid of 7 values around the
/// median.  Targets are per-point target vectors (one-hot class indicators
/// for classification data; squared error sums over components).  Degenerate
/// data (fewer than two distinct points) falls back to 1.0 and appends a
/// warning.
double select_bandwidth(const std::vector<Vector>& points,
                        const std::vector<Vector>& targets,
                        const std::string& strategy, std::uint64_t seed,
                        std::vector<std::string>* warnings);
double median_pairwise_bandwidth(const std::vector<Vector>& points,
                                 std::vector<std::string>* warnings);

/// Download every manifest entry that has a URL into the data directory,
/// verifying checksums when present.  Returns 0 on success; failures list
/// the entries that could not be fetched.
int fetch_datasets(const std::string& manifest_path, const std::string& data_dir,
                   const std::vector<std::string>& only = {});

/// Plain-text description of the build: policies, environments, defaults,
/// manifest status.
std::string info_text(const ExperimentConfig& config);

}  // namespace kmtl
