#pragma once

#include "kmtl/kernels.hpp"
#include "kmtl/regressor.hpp"
#include "kmtl/types.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>

namespace kmtl {

/// Everything a decision policy can be configured with.  Not every field is
/// meaningful for every policy; factories validate what they consume.
struct PolicyConfig {
  TaskSimilarity::Mode similarity = TaskSimilarity::Mode::Independent;
  std::optional<Matrix> known_similarity;  // Known mode
  double mu = 0.0;                         // Parametric mode

  KernelSpec context_kernel = KernelSpec::gaussian(1.0);
  KernelSpec embedding_kernel = KernelSpec::gaussian(1.0, KernelSpec::Role::Embedding);
  double sigma_z = 1.0;        // estimated-similarity scale
  int estimation_period = 1;   // rounds between similarity refreshes

  double lambda = 1.0;
  double beta = 1.0;           // exploration weight for the index policies
  double delta = 0.05;         // confidence level behind the level-scheme width multiplier
  double c = 1.0;              // norm-bound constant in the width multiplier
  int T = 0;                   // horizon; required by the level-scheme policy
  bool incremental = false;    // append-only Cholesky in the level scheme
};

/// Exploration weight alpha + c sqrt(lambda) with alpha = sqrt(ln(2TN/delta)/2).
double default_beta(int T, int num_arms, double delta, double c, double lambda);

/// Base interface: choose sees only the candidate points; observe reveals the
/// chosen arm's reward.  choose_informed additionally carries the harness
/// truth and exists solely for the oracle baseline — every honest policy
/// routes it to choose.
class Policy {
 public:
  virtual ~Policy() = default;

  virtual std::string name() const = 0;
  virtual int choose(int round, const std::vector<AugmentedContext>& candidates) = 0;
  virtual int choose_informed(int round, const RoundObservation& obs) {
    return choose(round, obs.candidates);
  }
  virtual void observe(int round, int arm, const AugmentedContext& point, double reward) = 0;

  /// Number of per-candidate width evaluations that exceeded the theoretical
  /// cap c_ktilde / lambda (should stay zero).
  virtual long long width_violations() const { return 0; }

  /// Current arm-similarity matrix for kernel policies; null otherwise.
  virtual const TaskSimilarity* task_similarity() const { return nullptr; }
};

/// The weighted UCB policy over the product kernel, generic in the similarity
/// mode.  Independent mode runs on per-arm block solvers (algebraically the
/// same system); all other modes factorize the full weighted Gram each round.
/// Estimated mode refreshes the similarity matrix from incremental embedding
/// sums on the configured period.
class KmtlUcbPolicy : public Policy {
 public:
  KmtlUcbPolicy(std::string name, int num_arms, PolicyConfig config);

  std::string name() const override { return name_; }
  int choose(int round, const std::vector<AugmentedContext>& candidates) override;
  void observe(int round, int arm, const AugmentedContext& point, double reward) override;
  long long width_violations() const override { return width_violations_; }
  const TaskSimilarity* task_similarity() const override { return &ts_; }

  /// Indices computed at the most recent choose (diagnostics/tests).
  const std::vector<UcbIndex>& last_indices() const { return last_indices_; }

 private:
  void refresh_similarity();

  std::string name_;
  int num_arms_;
  PolicyConfig config_;
  TaskSimilarity ts_;

  Matrix kx_gram_;                 // context-kernel cache, top-left block valid
  std::vector<Vector> contexts_;   // training contexts in round order
  std::vector<int> arms_;          // training arms in round order
  std::vector<int> pull_counts_;   // per arm
  Vector rewards_;                 // length size
  int size_ = 0;

  std::unique_ptr<PerArmWeightedRidge> per_arm_;          // Independent mode
  std::unique_ptr<EmbeddingSimilarityTracker> tracker_;   // Estimated mode

  double max_self_kernel_ = 0.0;   // observed sup k_X(x,x) for linear kernels
  long long width_violations_ = 0;
  std::vector<UcbIndex> last_indices_;
};

/// Reference implementation of the pooled specialization: weighted kernel
/// ridge on the contexts alone (the task factor is identically one).
class KernelUcbPoolPolicy : public Policy {
 public:
  KernelUcbPoolPolicy(int num_arms, PolicyConfig config);

  std::string name() const override { return "kernel-ucb-pool"; }
  int choose(int round, const std::vector<AugmentedContext>& candidates) override;
  void observe(int round, int arm, const AugmentedContext& point, double reward) override;
  long long width_violations() const override { return width_violations_; }
  const TaskSimilarity* task_similarity() const override { return &ts_; }

 private:
  int num_arms_;
  PolicyConfig config_;
  TaskSimilarity ts_;  // all-ones; exposed for diagnostics

  Matrix kx_gram_;
  std::vector<Vector> contexts_;
  std::vector<int> arms_;          // training arms in round order
  std::vector<int> pull_counts_;   // per arm
  Vector rewards_;
  int size_ = 0;

  double max_self_kernel_ = 0.0;
  long long width_violations_ = 0;
};

/// Reference implementation of the independent specialization: one weighted
/// ridge per arm over that arm's own observations.
class KernelUcbIndPolicy : public Policy {
 public:
  KernelUcbIndPolicy(int num_arms, PolicyConfig config);

  std::string name() const override { return "kernel-ucb-ind"; }
  int choose(int round, const std::vector<AugmentedContext>& candidates) override;
  void observe(int round, int arm, const AugmentedContext& point, double reward) override;
  long long width_violations() const override { return width_violations_; }
  const TaskSimilarity* task_similarity() const override { return &ts_; }

 private:
  int num_arms_;
  PolicyConfig config_;
  TaskSimilarity ts_;  // identity
  PerArmWeightedRidge ridge_;

  double max_self_kernel_ = 0.0;
  long long width_violations_ = 0;
};

/// Per-arm output of one level evaluation in the elimination scheme.
struct BaseLevelEval {
  std::vector<double> estimate;  // per arm
  std::vector<double> raw_width; // s, before the multiplier
  std::vector<double> width;     // w = (alpha + c sqrt(lambda)) s
  std::vector<double> ucb;       // estimate + width
};

/// Unweighted ridge restricted to the rounds in `level_set` (0-based
/// positions into `history`), evaluated at one candidate per arm.
BaseLevelEval base_level_eval(const History& history, const std::vector<int>& level_set,
                              const std::vector<AugmentedContext>& candidates,
                              const TaskSimilarity& ts, const KernelSpec& kx,
                              double lambda, double alpha, double c);

/// One round's record of what the elimination scheme did.
struct SupRoundLog {
  int round = 0;
  int branch = 0;       // 1 = narrow-widths argmax, 2 = filter/descend, 3 = widen level
  int level = 0;        // q at the final action (branch 1/3) — last level touched
  int arm = 0;
  std::vector<int> surviving;           // branch-2 survivors of the last filter
  double filter_threshold = 0.0;        // max ucb - 2^{1-q} at the last filter
  std::vector<double> surviving_ucbs;   // ucbs of survivors at that filter
};

/// The level-scheme policy: widths are driven through geometrically shrinking
/// caps per level so that the samples inside one level stay independent of
/// each other.  Uses unweighted regression and a fixed similarity matrix.
class SupKmtlUcbPolicy : public Policy {
 public:
  SupKmtlUcbPolicy(int num_arms, PolicyConfig config);

  std::string name() const override { return "sup-kmtl-ucb"; }
  int choose(int round, const std::vector<AugmentedContext>& candidates) override;
  void observe(int round, int arm, const AugmentedContext& point, double reward) override;
  long long width_violations() const override { return width_violations_; }
  const TaskSimilarity* task_similarity() const override { return &ts_; }

  int level_count() const { return levels_; }
  double alpha() const { return alpha_; }
  const std::vector<std::vector<int>>& level_sets() const { return level_sets_; }
  const std::vector<SupRoundLog>& round_log() const { return log_; }

 private:
  BaseLevelEval eval_level(int q, const std::vector<AugmentedContext>& candidates) const;

  int num_arms_;
  PolicyConfig config_;
  TaskSimilarity ts_;
  History history_;

  int levels_ = 1;      // Q = ceil(ln T)
  double alpha_ = 0.0;  // deflated confidence width multiplier
  std::vector<std::vector<int>> level_sets_;  // per level, 0-based history positions
  int pending_level_ = -1;  // level to extend at the next observe, -1 for none

  // Populated only with config.incremental: one growing factorization per
  // level instead of a refactorization per round.
  std::vector<std::unique_ptr<IncrementalUnweightedSolver>> level_solvers_;

  std::vector<SupRoundLog> log_;
  long long width_violations_ = 0;
};

/// Plays the arm with the highest expected reward (harness truth); zero regret
/// by construction.
class OraclePolicy : public Policy {
 public:
  std::string name() const override { return "oracle"; }
  int choose(int, const std::vector<AugmentedContext>&) override { return 1; }
  int choose_informed(int round, const RoundObservation& obs) override;
  void observe(int, int, const AugmentedContext&, double) override {}
};

class RandomPolicy : public Policy {
 public:
  explicit RandomPolicy(std::uint64_t seed) : rng_(seed) {}

  std::string name() const override { return "random"; }
  int choose(int round, const std::vector<AugmentedContext>& candidates) override;
  void observe(int, int, const AugmentedContext&, double) override {}

 private:
  std::mt19937_64 rng_;
};

class FixedArmPolicy : public Policy {
 public:
  explicit FixedArmPolicy(int arm) : arm_(arm) {}

  std::string name() const override { return "fixed:" + std::to_string(arm_); }
  int choose(int, const std::vector<AugmentedContext>& candidates) override;
  void observe(int, int, const AugmentedContext&, double) override {}

 private:
  int arm_;
};

/// Create a policy from its interface name: kmtl-ucb, kmtl-ucb-est,
/// kernel-ucb-ind, kernel-ucb-pool, sup-kmtl-ucb, oracle, random, fixed:<a>.
/// kmtl-ucb uses config.similarity (Known/Parametric fall back to Independent
/// when no matrix/mu is provided); kmtl-ucb-est forces Estimated mode.
/// Returns null for an unknown name.
std::unique_ptr<Policy> make_policy(const std::string& name, int num_arms,
                                    const PolicyConfig& config, std::uint64_t rng_seed);

/// True if `name` names a kernel policy (one that exposes similarity
/// diagnostics).
bool is_kernel_policy(const std::string& name);

}  // namespace kmtl
