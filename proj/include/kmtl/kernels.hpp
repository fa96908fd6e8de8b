#pragma once

#include "kmtl/types.hpp"

#include <optional>

namespace kmtl {

/// A scalar kernel on context vectors.  Gaussian uses the convention
/// exp(-||x-x'||^2 / (2 sigma^2)); Linear is the plain dot product.
/// The role tag records what the kernel is used for (context similarity,
/// the embedding kernel behind estimated task similarity, or a kernel on
/// task descriptors); evaluation itself does not depend on it.
struct KernelSpec {
  enum class Family { Gaussian, Linear };
  enum class Role { Context, Embedding, Task };

  Family family = Family::Gaussian;
  Role role = Role::Context;
  double bandwidth = 1.0;  // Gaussian only; strictly positive

  static KernelSpec gaussian(double sigma, Role role = Role::Context);
  static KernelSpec linear(Role role = Role::Context);

  double operator()(const Vector& a, const Vector& b) const;

  /// sup_x k(x, x): 1 for Gaussian; unbounded for Linear (callers must track
  /// observed self-kernels instead).
  std::optional<double> sup_self() const {
    return family == Family::Gaussian ? std::optional<double>(1.0) : std::nullopt;
  }
};

/// Evaluate a context kernel; throws on dimension mismatch.
double eval_context_kernel(const KernelSpec& spec, const Vector& x, const Vector& xp);

/// The N x N positive-semidefinite arm-similarity matrix with its provenance
/// mode.  Independent is the identity, Pooled the all-ones matrix; Known,
/// Parametric and Estimated carry an explicit matrix with unit diagonal
/// (Known may have a general PSD diagonal).
class TaskSimilarity {
 public:
  enum class Mode { Independent, Pooled, Known, Parametric, Estimated };

  static TaskSimilarity independent(int num_arms);
  static TaskSimilarity pooled(int num_arms);
  /// Validates symmetry and PSD-within-tolerance; throws on violation.
  static TaskSimilarity known(Matrix m);
  static TaskSimilarity parametric(double mu, int num_arms);
  /// Used by the estimation routine below; clips negative eigenvalues to zero
  /// if the matrix fails the PSD tolerance, then re-symmetrizes.
  static TaskSimilarity estimated(Matrix m);

  Mode mode() const { return mode_; }
  int num_arms() const { return static_cast<int>(matrix_.rows()); }
  const Matrix& matrix() const { return matrix_; }

  /// Largest eigenvalue (used by width lower bounds); computed lazily-never —
  /// the matrices are tiny, so compute on demand.
  double max_eigenvalue() const;
  double max_diagonal() const { return matrix_.diagonal().maxCoeff(); }

 private:
  TaskSimilarity(Mode mode, Matrix m) : mode_(mode), matrix_(std::move(m)) {}

  Mode mode_;
  Matrix matrix_;
};

/// Similarity between two arm descriptors under `ts`.  Independent mode is the
/// exact indicator, Pooled is identically 1, matrix modes are lookups.
double eval_task_kernel(const TaskSimilarity& ts, const ArmDescriptor& a,
                        const ArmDescriptor& b);

/// The product kernel on augmented contexts: task factor times context factor.
double eval_product_kernel(const TaskSimilarity& ts, const KernelSpec& kx,
                           const AugmentedContext& u, const AugmentedContext& v);

/// The parametric one-parameter similarity family (1-mu) I + mu 11^T.
/// Eigenvalues are 1 + mu (N-1) once and 1 - mu with multiplicity N-1.
Matrix parametric_task_matrix(double mu, int num_arms);

/// Dense Gram matrix of the product kernel over a point list.
Matrix gram_matrix(const TaskSimilarity& ts, const KernelSpec& kx,
                   const std::vector<AugmentedContext>& points);

/// Dense Gram matrix of a plain context kernel over a vector list.
Matrix context_gram_matrix(const KernelSpec& kx, const std::vector<Vector>& points);

/// Estimate arm similarity from data via empirical kernel mean embeddings:
/// entry(a,a') = exp(-D^2/(2 sigma_z^2)) where D^2 is the squared embedding
/// distance computed with the V-statistic pairwise means
///   mean_{i,j in a} k'(x_i,x_j) + mean_{i,j in a'} k'(x_i,x_j)
///     - 2 mean_{i in a, j in a'} k'(x_i,x_j).
/// Arms never pulled stay independent (0 off-diagonal, 1 diagonal).
TaskSimilarity estimate_task_similarity(const History& history, const KernelSpec& kp,
                                        double sigma_z);

/// Incremental bookkeeping behind per-round similarity refreshes: maintains
/// the pairwise block sums S(a,b) = sum_{i in a, j in b} k'(x_i, x_j) so that
/// adding one observation costs one kernel evaluation per past point.
/// Produces the same matrix as estimate_task_similarity on the same history.
class EmbeddingSimilarityTracker {
 public:
  EmbeddingSimilarityTracker(int num_arms, KernelSpec kp, double sigma_z);

  void add(int arm, const Vector& x);
  TaskSimilarity current() const;
  int count(int arm) const { return counts_.at(static_cast<std::size_t>(arm - 1)); }

 private:
  KernelSpec kp_;
  double sigma_z_;
  Matrix block_sums_;                      // N x N, S(a,b)
  std::vector<int> counts_;                // per-arm sample sizes
  std::vector<std::vector<Vector>> samples_;  // per-arm contexts
};

}  // namespace kmtl
