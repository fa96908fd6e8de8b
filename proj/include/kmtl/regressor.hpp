#pragma once

#include "kmtl/kernels.hpp"
#include "kmtl/types.hpp"

#include <memory>

namespace kmtl {

enum class RegressorMode { Weighted, Unweighted };

/// Thrown when a linear solve produces non-finite values or a width radicand
/// is negative beyond tolerance.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Factorization of the regularized weighted Gram system.
///
/// The estimator k^T (H K + lam I)^{-1} H y with diagonal weight matrix H is
/// computed through the symmetrized identity
///   (H K + lam I)^{-1} H = H^{1/2} (H^{1/2} K H^{1/2} + lam I)^{-1} H^{1/2},
/// which turns the non-symmetric system into an SPD one solved by Cholesky.
/// Squared widths use one triangular solve per query:
///   s^2 = (kself - || L^{-1} H^{1/2} k ||^2) / lam.
/// The unweighted variant is the same object with unit weights.
class WeightedGramSolver {
 public:
  /// `gram` is the (t x t) kernel matrix over the training points, `weights`
  /// the diagonal of H (inverse pull counts, or ones for unweighted),
  /// `rewards` the observed values.  An empty system (t = 0) is valid.
  WeightedGramSolver(const Matrix& gram, const Vector& weights, const Vector& rewards,
                     double lambda);

  int size() const { return static_cast<int>(sqrt_weights_.size()); }
  double lambda() const { return lambda_; }

  /// k^T (H K + lam I)^{-1} H y for the query's kernel column `kvec`.
  double predict(const Vector& kvec) const;

  /// Squared width at a query with kernel column `kvec` and self-kernel
  /// `kself`; clamps radicands in [-1e-10, 0) to zero and throws
  /// NumericalError below that.
  double width2(const Vector& kvec, double kself) const;
  double width(const Vector& kvec, double kself) const;

  /// Coefficient vector a with predict(k) = k . a; solves the original
  /// non-symmetric system through the symmetrized factorization.
  Vector alpha() const;

 private:
  double lambda_ = 1.0;
  Vector sqrt_weights_;       // H^{1/2} diagonal
  Vector solved_rewards_;     // A^{-1} H^{1/2} y with A = H^{1/2} K H^{1/2} + lam I
  Eigen::LLT<Matrix> llt_;    // factor of A
};

/// Exact growing Cholesky factorization of K + lam I for append-only
/// unweighted systems: adding a point updates the factor with one bordered
/// row instead of a full refactorization.  Produces the same predictions and
/// widths as WeightedGramSolver with unit weights (to rounding).
class IncrementalUnweightedSolver {
 public:
  explicit IncrementalUnweightedSolver(double lambda);

  int size() const { return static_cast<int>(y_.size()); }

  /// `kcol` holds the kernel of the new point against the existing points
  /// (length = current size), `kself` its self-kernel.
  void append(const Vector& kcol, double kself, double reward);

  double predict(const Vector& kvec) const;
  double width2(const Vector& kvec, double kself) const;

 private:
  double lambda_;
  Matrix lfactor_;     // lower-triangular factor, top-left block valid
  Vector y_;
  Vector solved_y_;    // (K + lam I)^{-1} y, refreshed on append
};

/// Fitted kernel ridge regressor over augmented contexts: owns copies of the
/// training points, evaluates kernel columns on demand, and answers reward
/// estimates, widths, and UCB indices.  Weighted mode weighs each row by the
/// inverse pull count of its arm; Unweighted mode drops the weights.
class RegressorState {
 public:
  /// Empty state: predict 0, width = sqrt(kself / lambda).
  RegressorState(TaskSimilarity ts, KernelSpec kx, double lambda, RegressorMode mode);

  static RegressorState fit(const History& history, const TaskSimilarity& ts,
                            const KernelSpec& kx, double lambda, RegressorMode mode);

  int size() const { return static_cast<int>(points_.size()); }
  RegressorMode mode() const { return mode_; }
  double lambda() const { return lambda_; }
  const TaskSimilarity& task_similarity() const { return ts_; }

  double predict(const AugmentedContext& q) const;
  double width(const AugmentedContext& q) const;
  double width2(const AugmentedContext& q) const;

  /// One UcbIndex per candidate (arm = 1-based candidate position):
  /// index = estimate + beta * width.
  std::vector<UcbIndex> ucb_indices(const std::vector<AugmentedContext>& candidates,
                                    double beta) const;

  /// Coefficients of the fitted estimator (empty for an empty state).
  Vector alpha() const;

 private:
  Vector kernel_column(const AugmentedContext& q) const;

  TaskSimilarity ts_;
  KernelSpec kx_;
  double lambda_;
  RegressorMode mode_;
  std::vector<AugmentedContext> points_;
  std::shared_ptr<const WeightedGramSolver> solver_;  // null for empty state
};

/// Per-arm weighted ridge used when arm similarity is the indicator: the full
/// weighted system is block-diagonal up to permutation, each arm's block
/// carrying the uniform weight 1/n_a, so per-arm solvers are algebraically
/// exact and much cheaper.  Solvers are cached and rebuilt only for arms whose
/// block changed.
class PerArmWeightedRidge {
 public:
  PerArmWeightedRidge(int num_arms, KernelSpec kx, double lambda);

  void add(int arm, const Vector& x, double reward);
  int count(int arm) const;

  struct Eval {
    double estimate = 0.0;
    double width2 = 0.0;
  };
  /// Estimate and squared width for `arm` at context `x` with self-kernel
  /// `kself`, using only that arm's observations.
  Eval eval(int arm, const Vector& x, double kself) const;

 private:
  struct ArmBlock {
    Matrix gram;                 // n x n, top-left valid
    std::vector<Vector> xs;
    Vector rewards;              // length n
    std::shared_ptr<const WeightedGramSolver> solver;  // null when stale
    int n = 0;
  };

  void refresh(ArmBlock& block) const;

  KernelSpec kx_;
  double lambda_;
  mutable std::vector<ArmBlock> blocks_;
};

}  // namespace kmtl
