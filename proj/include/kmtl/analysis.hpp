#pragma once

#include "kmtl/kernels.hpp"
#include "kmtl/types.hpp"

#include <string>
#include <vector>

namespace kmtl {

/// One verified inequality or identity: pass iff lhs <= rhs within the
/// check's own tolerance (checks state lhs/rhs so reports stay readable).
struct DiagnosticRecord {
  std::string name;
  double lhs = 0.0;
  double rhs = 0.0;
  bool pass = false;
};

/// Eigenvalues of a symmetric PSD-within-tolerance matrix, sorted descending,
/// with negatives clamped at zero; throws NumericalError if an eigenvalue is
/// below -rel_tol * max or non-finite.
Vector psd_eigenvalues(const Matrix& sym, double rel_tol = 1e-8);

/// log of det(K + lam I) / lam^n computed in the eigenvalue domain:
/// sum_i log((e_i + lam)/lam).
double log_det_ratio(const Matrix& gram, double lambda);
double log_det_ratio_from_eigs(const Vector& eigs_desc, double lambda);

/// Smallest j such that j * lam * ln(T) >= sum of the eigenvalues after the
/// first j (descending order); j = 0 allowed when the spectrum is all zero.
int effective_rank(const Vector& eigs_desc, double lambda, int T);

/// Count of eigenvalues above rel_tol * max.
int numerical_rank(const Vector& eigs_desc, double rel_tol = 1e-8);

/// Horizon-level regret cap for the elimination-scheme policy:
///   2 sqrt(T) + 10 (sqrt(ln(2 T N (ln T + 1)/delta)/2) + c sqrt(lambda))
///     * sqrt(2 m log_g) * sqrt(T ceil(ln T)).
double theoretical_regret_bound(int T, int num_arms, double delta, double lambda,
                                double c, double m, double log_g);

/// Cap on the log-determinant ratio in terms of the effective rank r over a
/// (T+1)-point matrix: r * log(2T (2(T+1) ck + r lam - r lam ln T) / (r lam)).
double effective_rank_det_bound(int r, int T, double lambda, double ck);

/// Cap on the log-determinant ratio from the factor ranks: rz * rx *
/// log(((T+1) ck + lam)/lam).
double rank_product_det_bound(int rz, int rx, int T, double lambda, double ck);

/// Lower bound on the squared width in the balanced unweighted design with n
/// points per arm:
///   (4 n ck lz + lam) / (n ck lz + 2 lam)^2 * (kself + lam) - 1,
/// where lz is the largest eigenvalue of the arm-similarity matrix.  May be
/// negative (vacuous) in many regimes.
double width_lower_bound_value(int n_per_arm, double ck, double kz_max_eig,
                               double lambda, double kself);

/// Partial-sum dominance of descending spectra: every prefix sum of `upper`
/// is >= the matching prefix sum of `lower`, totals equal within tol.
bool majorizes(const Vector& upper_desc, const Vector& lower_desc, double tol = 1e-9);

/// The arm-major Gram of a balanced design: entry ((a,i),(b,j)) =
/// KZ(a,b) * KXr(ai, bj) where KXr is the (N n x N n) arm-major context Gram.
Matrix balanced_product_gram(const Matrix& kz, const Matrix& kx_r, int n_per_arm);

/// Sweep the one-parameter similarity family over mu_grid on a balanced
/// design and record that the log-determinant ratio never increases when the
/// coupling mu grows (one record per adjacent grid pair).
std::vector<DiagnosticRecord> similarity_sweep_monotonicity_check(
    const Matrix& kx_r, int n_per_arm, int num_arms, double lambda,
    const std::vector<double>& mu_grid, double slack = 1e-9);

/// Unweighted widths at every training point of `ktilde` checked against the
/// theoretical cap ck/lambda, and against the balanced-design lower bound
/// whenever that bound is positive.  `fault_offset` shifts the measured
/// squared widths and exists only to prove the check can fail.
std::vector<DiagnosticRecord> width_bounds_check(const Matrix& ktilde, const Matrix& kz,
                                                 double lambda, double ck, int n_per_arm,
                                                 double fault_offset = 0.0);

/// The lower-bound formula evaluated over the coupling grid; records that it
/// never increases as the coupling grows.
std::vector<DiagnosticRecord> width_lower_bound_mu_sweep(int num_arms, int n_per_arm,
                                                         double ck, double lambda,
                                                         double kself,
                                                         const std::vector<double>& mu_grid);

/// Per-run spectral assertions: the measured log-determinant ratio of the
/// final product-kernel Gram stays under both rank-based caps, and the
/// realized cumulative regret stays under the horizon-level cap.
std::vector<DiagnosticRecord> spectral_run_diagnostics(
    const History& history, const TaskSimilarity& ts, const KernelSpec& kx,
    double lambda, double delta, double c, double final_regret, int horizon);

/// Per-round mean, sample standard deviation, and mean +- 2 std/sqrt(runs).
struct AggregateSummary {
  Vector mean;
  Vector stddev;
  Vector ci_lo;
  Vector ci_hi;
};

AggregateSummary aggregate_runs(const std::vector<Vector>& traces);

}  // namespace kmtl
