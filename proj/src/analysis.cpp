#include "kmtl/analysis.hpp"

#include "kmtl/regressor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace kmtl {

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

}  // namespace

Vector psd_eigenvalues(const Matrix& sym, double rel_tol) {
  if (sym.rows() != sym.cols())
    throw std::invalid_argument("psd_eigenvalues: matrix must be square");
  if (sym.rows() == 0) return Vector();

  Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
  if (es.info() != Eigen::Success)
    throw NumericalError("psd_eigenvalues: eigendecomposition failed");
  Vector eigs = es.eigenvalues().reverse();  // descending
  if (!eigs.allFinite()) throw NumericalError("psd_eigenvalues: non-finite eigenvalue");

  const double max_eig = eigs(0);
  const double floor = -rel_tol * std::max(max_eig, 0.0);
  for (int i = 0; i < eigs.size(); ++i) {
    if (eigs(i) < floor)
      throw NumericalError("psd_eigenvalues: eigenvalue " + fmt(eigs(i)) +
                           " below the PSD tolerance " + fmt(floor));
    if (eigs(i) < 0.0) eigs(i) = 0.0;
  }
  return eigs;
}

double log_det_ratio(const Matrix& gram, double lambda) {
  return log_det_ratio_from_eigs(psd_eigenvalues(gram), lambda);
}

double log_det_ratio_from_eigs(const Vector& eigs_desc, double lambda) {
  if (!(lambda > 0.0))
    throw std::invalid_argument("log_det_ratio: lambda must be positive");
  double sum = 0.0;
  for (int i = 0; i < eigs_desc.size(); ++i) {
    if (eigs_desc(i) < 0.0)
      throw std::invalid_argument("log_det_ratio: negative eigenvalue");
    sum += std::log1p(eigs_desc(i) / lambda);
  }
  return sum;
}

int effective_rank(const Vector& eigs_desc, double lambda, int T) {
  if (!(lambda > 0.0))
    throw std::invalid_argument("effective_rank: lambda must be positive");
  if (T < 2) throw std::invalid_argument("effective_rank: T must be at least 2");
  const int n = static_cast<int>(eigs_desc.size());
  const double log_T = std::log(static_cast<double>(T));

  // suffix(j) = sum of eigenvalues strictly after the first j.
  std::vector<double> suffix(static_cast<std::size_t>(n) + 1, 0.0);
  for (int i = n - 1; i >= 0; --i)
    suffix[static_cast<std::size_t>(i)] = suffix[static_cast<std::size_t>(i) + 1] + eigs_desc(i);

  for (int j = 0; j <= n; ++j)
    if (j * lambda * log_T >= suffix[static_cast<std::size_t>(j)]) return j;
  return n;  // unreachable: j = n always satisfies the inequality
}

int numerical_rank(const Vector& eigs_desc, double rel_tol) {
  if (eigs_desc.size() == 0) return 0;
  const double threshold = rel_tol * std::max(eigs_desc(0), 0.0);
  int rank = 0;
  for (int i = 0; i < eigs_desc.size(); ++i)
    if (eigs_desc(i) > threshold) ++rank;
  return rank;
}

double theoretical_regret_bound(int T, int num_arms, double delta, double lambda,
                                double c, double m, double log_g) {
  if (T < 1 || num_arms < 1)
    throw std::invalid_argument("theoretical_regret_bound: T and arm count must be positive");
  if (!(delta > 0.0 && delta < 1.0))
    throw std::invalid_argument("theoretical_regret_bound: delta must lie in (0,1)");
  if (!(lambda > 0.0) || !(m > 0.0) || log_g < 0.0)
    throw std::invalid_argument("theoretical_regret_bound: invalid parameters");
  const double log_T = std::log(static_cast<double>(T));
  const double alpha =
      std::sqrt(std::log(2.0 * T * num_arms * (log_T + 1.0) / delta) / 2.0);
  const double multiplier = alpha + c * std::sqrt(lambda);
  return 2.0 * std::sqrt(static_cast<double>(T)) +
         10.0 * multiplier * std::sqrt(2.0 * m * log_g) *
             std::sqrt(static_cast<double>(T) * std::ceil(log_T));
}

double effective_rank_det_bound(int r, int T, double lambda, double ck) {
  if (r < 1) throw std::invalid_argument("effective_rank_det_bound: rank must be >= 1");
  if (T < 2 || !(lambda > 0.0) || !(ck > 0.0))
    throw std::invalid_argument("effective_rank_det_bound: invalid parameters");
  const double log_T = std::log(static_cast<double>(T));
  const double inner =
      2.0 * T * (2.0 * (T + 1.0) * ck + r * lambda - r * lambda * log_T) / (r * lambda);
  if (!(inner > 0.0))
    throw NumericalError(
        "effective_rank_det_bound: log argument " + fmt(inner) +
        " is not positive (rank too large for this horizon/regularization)");
  return r * std::log(inner);
}

double rank_product_det_bound(int rz, int rx, int T, double lambda, double ck) {
  if (rz < 1 || rx < 1)
    throw std::invalid_argument("rank_product_det_bound: ranks must be >= 1");
  if (T < 1 || !(lambda > 0.0) || !(ck > 0.0))
    throw std::invalid_argument("rank_product_det_bound: invalid parameters");
  return static_cast<double>(rz) * rx * std::log(((T + 1.0) * ck + lambda) / lambda);
}

double width_lower_bound_value(int n_per_arm, double ck, double kz_max_eig,
                               double lambda, double kself) {
  if (n_per_arm < 1 || !(ck > 0.0) || !(kz_max_eig > 0.0) || !(lambda > 0.0))
    throw std::invalid_argument("width_lower_bound_value: invalid parameters");
  const double z = n_per_arm * ck * kz_max_eig;
  const double denom = z + 2.0 * lambda;
  return (4.0 * z + lambda) / (denom * denom) * (kself + lambda) - 1.0;
}

bool majorizes(const Vector& upper_desc, const Vector& lower_desc, double tol) {
  if (upper_desc.size() != lower_desc.size())
    throw std::invalid_argument("majorizes: spectra must have equal length");
  double up = 0.0;
  double lo = 0.0;
  for (int i = 0; i < upper_desc.size(); ++i) {
    up += upper_desc(i);
    lo += lower_desc(i);
    if (up < lo - tol) return false;
  }
  return std::abs(up - lo) <= tol;
}

Matrix balanced_product_gram(const Matrix& kz, const Matrix& kx_r, int n_per_arm) {
  const int N = static_cast<int>(kz.rows());
  if (kz.cols() != N) throw std::invalid_argument("balanced_product_gram: KZ must be square");
  if (n_per_arm < 1)
    throw std::invalid_argument("balanced_product_gram: per-arm count must be positive");
  const int total = N * n_per_arm;
  if (kx_r.rows() != total || kx_r.cols() != total)
    throw std::invalid_argument(
        "balanced_product_gram: context Gram must be arm-major of size N * n");

  Matrix out(total, total);
  for (int a = 0; a < N; ++a)
    for (int b = 0; b < N; ++b)
      out.block(a * n_per_arm, b * n_per_arm, n_per_arm, n_per_arm) =
          kz(a, b) * kx_r.block(a * n_per_arm, b * n_per_arm, n_per_arm, n_per_arm);
  return out;
}

std::vector<DiagnosticRecord> similarity_sweep_monotonicity_check(
    const Matrix& kx_r, int n_per_arm, int num_arms, double lambda,
    const std::vector<double>& mu_grid, double slack) {
  if (mu_grid.size() < 2)
    throw std::invalid_argument("similarity_sweep_monotonicity_check: need >= 2 grid points");
  if (!std::is_sorted(mu_grid.begin(), mu_grid.end()))
    throw std::invalid_argument("similarity_sweep_monotonicity_check: grid must ascend");

  std::vector<double> log_gs;
  log_gs.reserve(mu_grid.size());
  for (double mu : mu_grid) {
    const Matrix ktilde =
        balanced_product_gram(parametric_task_matrix(mu, num_arms), kx_r, n_per_arm);
    log_gs.push_back(log_det_ratio(ktilde, lambda));
  }

  std::vector<DiagnosticRecord> records;
  for (std::size_t i = 0; i + 1 < mu_grid.size(); ++i) {
    DiagnosticRecord rec;
    rec.name = "log_det_ratio(mu=" + fmt(mu_grid[i + 1]) + ") <= log_det_ratio(mu=" +
               fmt(mu_grid[i]) + ")";
    rec.lhs = log_gs[i + 1];
    rec.rhs = log_gs[i] + slack;
    rec.pass = rec.lhs <= rec.rhs;
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<DiagnosticRecord> width_bounds_check(const Matrix& ktilde, const Matrix& kz,
                                                 double lambda, double ck, int n_per_arm,
                                                 double fault_offset) {
  const int n = static_cast<int>(ktilde.rows());
  if (ktilde.cols() != n) throw std::invalid_argument("width_bounds_check: Gram must be square");
  if (!(lambda > 0.0) || !(ck > 0.0))
    throw std::invalid_argument("width_bounds_check: invalid parameters");

  const WeightedGramSolver solver(ktilde, Vector::Ones(n), Vector::Zero(n), lambda);
  const double kz_max_eig = psd_eigenvalues(kz)(0);
  const double cap = ck / lambda;

  std::vector<DiagnosticRecord> records;
  for (int i = 0; i < n; ++i) {
    const double w2 = solver.width2(ktilde.col(i), ktilde(i, i)) + fault_offset;

    DiagnosticRecord upper;
    upper.name = "width2[" + std::to_string(i) + "] <= ck/lambda";
    upper.lhs = w2;
    upper.rhs = cap + 1e-12;
    upper.pass = upper.lhs <= upper.rhs;
    records.push_back(std::move(upper));

    const double lower =
        width_lower_bound_value(n_per_arm, ck, kz_max_eig, lambda, ktilde(i, i));
    if (lower > 0.0) {
      DiagnosticRecord rec;
      rec.name = "width_floor[" + std::to_string(i) + "] <= width2";
      rec.lhs = lower;
      rec.rhs = w2 + 1e-12;
      rec.pass = rec.lhs <= rec.rhs;
      records.push_back(std::move(rec));
    }
  }
  return records;
}

std::vector<DiagnosticRecord> width_lower_bound_mu_sweep(int num_arms, int n_per_arm,
                                                         double ck, double lambda,
                                                         double kself,
                                                         const std::vector<double>& mu_grid) {
  if (mu_grid.size() < 2)
    throw std::invalid_argument("width_lower_bound_mu_sweep: need >= 2 grid points");
  if (!std::is_sorted(mu_grid.begin(), mu_grid.end()))
    throw std::invalid_argument("width_lower_bound_mu_sweep: grid must ascend");

  std::vector<double> values;
  values.reserve(mu_grid.size());
  for (double mu : mu_grid) {
    const double kz_max_eig = 1.0 + mu * (num_arms - 1);  // top eigenvalue of the family
    values.push_back(width_lower_bound_value(n_per_arm, ck, kz_max_eig, lambda, kself));
  }

  std::vector<DiagnosticRecord> records;
  for (std::size_t i = 0; i + 1 < mu_grid.size(); ++i) {
    DiagnosticRecord rec;
    rec.name = "width_floor(mu=" + fmt(mu_grid[i + 1]) + ") <= width_floor(mu=" +
               fmt(mu_grid[i]) + ")";
    rec.lhs = values[i + 1];
    rec.rhs = values[i] + 1e-12;
    rec.pass = rec.lhs <= rec.rhs;
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<DiagnosticRecord> spectral_run_diagnostics(
    const History& history, const TaskSimilarity& ts, const KernelSpec& kx,
    double lambda, double delta, double c, double final_regret, int horizon) {
  if (history.size() < 3)
    throw std::invalid_argument("spectral_run_diagnostics: need at least three rounds");

  std::vector<AugmentedContext> points;
  points.reserve(static_cast<std::size_t>(history.size()));
  std::vector<Vector> contexts;
  contexts.reserve(static_cast<std::size_t>(history.size()));
  for (const HistoryEntry& e : history.entries()) {
    points.push_back(e.point);
    contexts.push_back(e.point.x);
  }

  const Matrix ktilde = gram_matrix(ts, kx, points);
  const Vector eigs = psd_eigenvalues(ktilde);
  const double log_g = log_det_ratio_from_eigs(eigs, lambda);

  // An n-point Gram plays the role of the (T+1)-point matrix, so the
  // spectral caps are evaluated at T = n - 1.
  const int t_eff = history.size() - 1;
  double ck = ktilde.diagonal().maxCoeff();
  if (kx.family == KernelSpec::Family::Gaussian)
    ck = std::max(ck, ts.max_diagonal());

  std::vector<DiagnosticRecord> records;

  const int r = std::max(1, effective_rank(eigs, lambda, t_eff));
  DiagnosticRecord rank_rec;
  rank_rec.name = "log_det_ratio <= effective_rank_bound(r=" + std::to_string(r) + ")";
  rank_rec.lhs = log_g;
  rank_rec.rhs = effective_rank_det_bound(r, t_eff, lambda, ck);
  rank_rec.pass = rank_rec.lhs <= rank_rec.rhs;
  records.push_back(std::move(rank_rec));

  const int rz = std::max(1, numerical_rank(psd_eigenvalues(ts.matrix())));
  const int rx = std::max(1, numerical_rank(psd_eigenvalues(context_gram_matrix(kx, contexts))));
  DiagnosticRecord prod_rec;
  prod_rec.name = "log_det_ratio <= rank_product_bound(rz=" + std::to_string(rz) +
                  ";rx=" + std::to_string(rx) + ")";
  prod_rec.lhs = log_g;
  prod_rec.rhs = rank_product_det_bound(rz, rx, t_eff, lambda, ck);
  prod_rec.pass = prod_rec.lhs <= prod_rec.rhs;
  records.push_back(std::move(prod_rec));

  const double m = std::max(1.0, ck / lambda);
  DiagnosticRecord regret_rec;
  regret_rec.name = "final_regret <= horizon_bound";
  regret_rec.lhs = final_regret;
  regret_rec.rhs = theoretical_regret_bound(horizon, history.num_arms(), delta, lambda, c,
                                            m, log_g);
  regret_rec.pass = regret_rec.lhs <= regret_rec.rhs;
  records.push_back(std::move(regret_rec));

  return records;
}

AggregateSummary aggregate_runs(const std::vector<Vector>& traces) {
  if (traces.empty()) throw std::invalid_argument("aggregate_runs: no traces");
  const int T = static_cast<int>(traces.front().size());
  for (const Vector& trace : traces)
    if (trace.size() != T)
      throw std::invalid_argument("aggregate_runs: traces differ in length");

  const int R = static_cast<int>(traces.size());
  AggregateSummary out;
  out.mean = Vector::Zero(T);
  out.stddev = Vector::Zero(T);
  for (const Vector& trace : traces) out.mean += trace;
  out.mean /= static_cast<double>(R);

  if (R > 1) {
    for (const Vector& trace : traces)
      out.stddev += (trace - out.mean).cwiseAbs2();
    out.stddev = (out.stddev / static_cast<double>(R - 1)).cwiseSqrt();
  }
  const double scale = 2.0 / std::sqrt(static_cast<double>(R));
  out.ci_lo = out.mean - scale * out.stddev;
  out.ci_hi = out.mean + scale * out.stddev;
  return out;
}

}  // namespace kmtl
