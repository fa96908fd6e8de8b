#pragma once

#include "kmtl/kernels.hpp"
#include "kmtl/types.hpp"

#include <cstdint>
#include <memory>
#include <random>
#include <string>

namespace kmtl {

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A bandit environment: produces one RoundObservation per round, in order.
class Environment {
 public:
  virtual ~Environment() = default;

  virtual std::string name() const = 0;
  virtual int num_arms() const = 0;
  /// Largest T this environment can serve (datasets are finite).
  virtual int max_rounds() const { return 1 << 30; }
  /// t is the 1-based round index; callers advance t sequentially.
  virtual RoundObservation next_round(int t) = 0;
};

/// Rotated-ellipse recommendation environment.  Each round draws a user
/// context uniformly in parameter angle on the ellipse boundary
/// (minor-axis coordinate first: x = minor * sin phi, y = major * cos phi);
/// arm a observes that context rotated by its article angle theta_a, the
/// angles being evenly spaced over [0, pi/2].  The expected reward depends
/// on the minor-axis coordinate: r_a = 1 - (x_minor - a/N + 0.5)^2, and
/// realized rewards equal expected ones unless the optional Gaussian noise
/// knob is switched on.
struct SyntheticNewsConfig {
  int num_arms = 5;
  double major_axis = 1.0;
  double minor_axis = 0.5;
  double noise_sd = 0.0;  // optional robustness knob; default noiseless
};

class SyntheticNewsEnv : public Environment {
 public:
  SyntheticNewsEnv(SyntheticNewsConfig config, std::uint64_t seed);

  std::string name() const override { return "synthetic"; }
  int num_arms() const override { return config_.num_arms; }
  RoundObservation next_round(int t) override;

  const std::vector<double>& arm_angles() const { return angles_; }

  static double expected_reward(double minor_coord, int arm, int num_arms);

  /// Similarity of arms under a Gaussian kernel on their article angles.
  TaskSimilarity known_task_similarity(double bandwidth) const;

  /// Deterministic sample of user contexts (for bandwidth heuristics).
  static std::vector<Vector> sample_user_contexts(const SyntheticNewsConfig& config,
                                                  std::uint64_t seed, int count);

 private:
  SyntheticNewsConfig config_;
  std::vector<double> angles_;
  std::mt19937_64 rng_;
};

/// A multiclass dataset interpreted as a bandit problem: one arm per class,
/// shared context per round, reward 1 iff the chosen arm is the true label.
struct MulticlassDataset {
  std::string name;
  Matrix features;          // n x d
  std::vector<int> labels;  // 1..num_classes (remapped from the file's labels)
  int num_classes = 0;

  std::vector<int> validation_idx;
  std::vector<int> test_idx;

  int size() const { return static_cast<int>(labels.size()); }
  int dim() const { return static_cast<int>(features.cols()); }
};

enum class DatasetFormat { LibsvmSparse, CsvDense };

/// Expected shape of a dataset (from the manifest); empty checksum skips
/// verification.
struct DatasetExpectation {
  int num_classes = 0;  // 0 = unchecked
  int dim = 0;          // 0 = unchecked
  std::string sha256;   // empty = unchecked
};

/// Parse a dataset file.  LibsvmSparse is the 1-based "label i:v ..." text
/// format; CsvDense expects a "label,f1,...,fd" header.  Malformed lines
/// report their line number; shape mismatches against `expect` throw
/// DatasetError.
MulticlassDataset load_dataset(const std::string& path, DatasetFormat format,
                               const DatasetExpectation& expect = {});

/// Seeded stratified split into validation/test index sets; every class keeps
/// at least one example on each side whenever it has at least two.
void split_dataset(MulticlassDataset& dataset, double validation_fraction,
                   std::uint64_t seed);

class MulticlassEnv : public Environment {
 public:
  /// Streams the test split in a seeded random order.
  MulticlassEnv(std::shared_ptr<const MulticlassDataset> dataset, std::uint64_t seed);

  std::string name() const override { return dataset_->name; }
  int num_arms() const override { return dataset_->num_classes; }
  int max_rounds() const override { return static_cast<int>(order_.size()); }
  RoundObservation next_round(int t) override;

  const std::vector<int>& streaming_order() const { return order_; }

 private:
  std::shared_ptr<const MulticlassDataset> dataset_;
  std::vector<int> order_;  // permuted test indices
};

/// One manifest row describing where a dataset lives and what shape it must
/// have.
struct ManifestEntry {
  std::string name;
  std::string path;    // relative to the data directory
  std::string url;     // empty for bundled files
  std::string format;  // "libsvm-sparse" | "csv-dense"
  int num_classes = 0;
  int dim = 0;
  std::string sha256;  // empty until recorded
};

std::vector<ManifestEntry> load_manifest(const std::string& path);

DatasetFormat parse_dataset_format(const std::string& s);

/// Hex-encoded SHA-256 of a file's bytes (requires the crypto build flavor;
/// throws when unavailable).
std::string sha256_file(const std::string& path);

}  // namespace kmtl
