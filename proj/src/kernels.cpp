#include "kmtl/kernels.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>

namespace kmtl {

KernelSpec KernelSpec::gaussian(double sigma, Role role) {
  if (!(sigma > 0.0))
    throw std::invalid_argument("KernelSpec: Gaussian bandwidth must be positive");
  KernelSpec spec;
  spec.family = Family::Gaussian;
  spec.role = role;
  spec.bandwidth = sigma;
  return spec;
}

KernelSpec KernelSpec::linear(Role role) {
  KernelSpec spec;
  spec.family = Family::Linear;
  spec.role = role;
  return spec;
}

double KernelSpec::operator()(const Vector& a, const Vector& b) const {
  if (a.size() != b.size())
    throw std::invalid_argument("KernelSpec: dimension mismatch");
  if (family == Family::Linear) return a.dot(b);
  const double d2 = (a - b).squaredNorm();
  return std::exp(-d2 / (2.0 * bandwidth * bandwidth));
}

double eval_context_kernel(const KernelSpec& spec, const Vector& x, const Vector& xp) {
  return spec(x, xp);
}

namespace {

Matrix ones_matrix(int n) { return Matrix::Ones(n, n); }

void check_similarity_shape(const Matrix& m) {
  if (m.rows() < 1 || m.rows() != m.cols())
    throw std::invalid_argument("TaskSimilarity: matrix must be square and nonempty");
  if (!m.allFinite())
    throw std::invalid_argument("TaskSimilarity: matrix has non-finite entries");
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw std::invalid_argument("TaskSimilarity: matrix is not symmetric");
}

}  // namespace

TaskSimilarity TaskSimilarity::independent(int num_arms) {
  if (num_arms < 1) throw std::invalid_argument("TaskSimilarity: need at least one arm");
  return TaskSimilarity(Mode::Independent, Matrix::Identity(num_arms, num_arms));
}

TaskSimilarity TaskSimilarity::pooled(int num_arms) {
  if (num_arms < 1) throw std::invalid_argument("TaskSimilarity: need at least one arm");
  return TaskSimilarity(Mode::Pooled, ones_matrix(num_arms));
}

TaskSimilarity TaskSimilarity::known(Matrix m) {
  check_similarity_shape(m);
  Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = std::max(0.0, es.eigenvalues().maxCoeff());
  if (lo < -1e-8 * std::max(hi, 1.0))
    throw std::invalid_argument("TaskSimilarity: matrix is not PSD within tolerance");
  return TaskSimilarity(Mode::Known, std::move(m));
}

TaskSimilarity TaskSimilarity::parametric(double mu, int num_arms) {
  return TaskSimilarity(Mode::Parametric, parametric_task_matrix(mu, num_arms));
}

TaskSimilarity TaskSimilarity::estimated(Matrix m) {
  check_similarity_shape(m);
  Eigen::SelfAdjointEigenSolver<Matrix> es(m);
  const double hi = std::max(0.0, es.eigenvalues().maxCoeff());
  if (es.eigenvalues().minCoeff() < -1e-8 * std::max(hi, 1.0)) {
    // Clip negative eigenvalues to zero and re-symmetrize: the estimator is
    // only meaningful as a PSD similarity.
    Vector clipped = es.eigenvalues().cwiseMax(0.0);
    m = es.eigenvectors() * clipped.asDiagonal() * es.eigenvectors().transpose();
    m = ((m + m.transpose()) / 2.0).eval();
  }
  return TaskSimilarity(Mode::Estimated, std::move(m));
}

double TaskSimilarity::max_eigenvalue() const {
  Eigen::SelfAdjointEigenSolver<Matrix> es(matrix_, Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

double eval_task_kernel(const TaskSimilarity& ts, const ArmDescriptor& a,
                        const ArmDescriptor& b) {
  if (ts.mode() == TaskSimilarity::Mode::Pooled) return 1.0;
  if (a.kind == ArmDescriptor::Kind::Singleton || b.kind == ArmDescriptor::Kind::Singleton)
    throw std::out_of_range("eval_task_kernel: singleton descriptor outside pooled mode");
  if (a.id < 1 || a.id > ts.num_arms() || b.id < 1 || b.id > ts.num_arms())
    throw std::out_of_range("eval_task_kernel: arm descriptor out of range");
  if (ts.mode() == TaskSimilarity::Mode::Independent) return a.id == b.id ? 1.0 : 0.0;
  return ts.matrix()(a.id - 1, b.id - 1);
}

double eval_product_kernel(const TaskSimilarity& ts, const KernelSpec& kx,
                           const AugmentedContext& u, const AugmentedContext& v) {
  return eval_task_kernel(ts, u.z, v.z) * eval_context_kernel(kx, u.x, v.x);
}

Matrix parametric_task_matrix(double mu, int num_arms) {
  if (!(mu >= 0.0 && mu <= 1.0))
    throw std::domain_error("parametric_task_matrix: mu must lie in [0, 1]");
  if (num_arms < 1)
    throw std::invalid_argument("parametric_task_matrix: need at least one arm");
  Matrix m = Matrix::Constant(num_arms, num_arms, mu);
  m.diagonal().setOnes();
  return m;
}

Matrix gram_matrix(const TaskSimilarity& ts, const KernelSpec& kx,
                   const std::vector<AugmentedContext>& points) {
  if (points.empty()) throw std::invalid_argument("gram_matrix: empty point list");
  const int n = static_cast<int>(points.size());
  Matrix g(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= i; ++j) {
      const double v = eval_product_kernel(ts, kx, points[static_cast<std::size_t>(j)],
                                           points[static_cast<std::size_t>(i)]);
      g(i, j) = v;
      g(j, i) = v;
    }
  }
  return g;
}

Matrix context_gram_matrix(const KernelSpec& kx, const std::vector<Vector>& points) {
  const int n = static_cast<int>(points.size());
  Matrix g(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= i; ++j) {
      const double v = kx(points[static_cast<std::size_t>(j)], points[static_cast<std::size_t>(i)]);
      g(i, j) = v;
      g(j, i) = v;
    }
  }
  return g;
}

namespace {

/// Similarity matrix from pairwise block sums S(a,b) and per-arm counts:
/// squared embedding distance via the V-statistic pairwise means, identity
/// rows for unpulled arms.
Matrix similarity_from_block_sums(const Matrix& block_sums, const std::vector<int>& counts,
                                  double sigma_z) {
  const int num_arms = static_cast<int>(counts.size());
  Matrix out = Matrix::Identity(num_arms, num_arms);
  for (int a = 0; a < num_arms; ++a) {
    for (int b = 0; b < a; ++b) {
      if (counts[static_cast<std::size_t>(a)] == 0 || counts[static_cast<std::size_t>(b)] == 0)
        continue;  // unpulled arms stay independent
      const double na = counts[static_cast<std::size_t>(a)];
      const double nb = counts[static_cast<std::size_t>(b)];
      double d2 = block_sums(a, a) / (na * na) + block_sums(b, b) / (nb * nb) -
                  2.0 * block_sums(a, b) / (na * nb);
      d2 = std::max(0.0, d2);  // rounding can push the distance a hair below 0
      const double v = std::exp(-d2 / (2.0 * sigma_z * sigma_z));
      out(a, b) = v;
      out(b, a) = v;
    }
  }
  return out;
}

}  // namespace

TaskSimilarity estimate_task_similarity(const History& history, const KernelSpec& kp,
                                        double sigma_z) {
  if (!(sigma_z > 0.0))
    throw std::invalid_argument("estimate_task_similarity: sigma_z must be positive");
  const int num_arms = history.num_arms();
  Matrix sums = Matrix::Zero(num_arms, num_arms);
  std::vector<std::vector<Vector>> samples(static_cast<std::size_t>(num_arms));
  for (const HistoryEntry& e : history.entries())
    samples[static_cast<std::size_t>(e.arm - 1)].push_back(e.point.x);
  for (int a = 0; a < num_arms; ++a) {
    for (int b = 0; b <= a; ++b) {
      double s = 0.0;
      for (const Vector& xi : samples[static_cast<std::size_t>(a)])
        for (const Vector& xj : samples[static_cast<std::size_t>(b)]) s += kp(xi, xj);
      sums(a, b) = s;
      sums(b, a) = s;
    }
  }
  return TaskSimilarity::estimated(
      similarity_from_block_sums(sums, history.pull_counts(), sigma_z));
}

EmbeddingSimilarityTracker::EmbeddingSimilarityTracker(int num_arms, KernelSpec kp,
                                                       double sigma_z)
    : kp_(kp),
      sigma_z_(sigma_z),
      block_sums_(Matrix::Zero(num_arms, num_arms)),
      counts_(static_cast<std::size_t>(num_arms), 0),
      samples_(static_cast<std::size_t>(num_arms)) {
  if (num_arms < 1)
    throw std::invalid_argument("EmbeddingSimilarityTracker: need at least one arm");
  if (!(sigma_z > 0.0))
    throw std::invalid_argument("EmbeddingSimilarityTracker: sigma_z must be positive");
}

void EmbeddingSimilarityTracker::add(int arm, const Vector& x) {
  if (arm < 1 || arm > static_cast<int>(counts_.size()))
    throw std::out_of_range("EmbeddingSimilarityTracker::add: arm out of range");
  const int a = arm - 1;
  // One new point against every stored point updates all block sums touching
  // this arm; the diagonal also gains the self term.
  for (int b = 0; b < static_cast<int>(counts_.size()); ++b) {
    double s = 0.0;
    for (const Vector& xb : samples_[static_cast<std::size_t>(b)]) s += kp_(xb, x);
    if (b == a) {
      block_sums_(a, a) += 2.0 * s + kp_(x, x);
    } else {
      block_sums_(a, b) += s;
      block_sums_(b, a) += s;
    }
  }
  samples_[static_cast<std::size_t>(a)].push_back(x);
  ++counts_[static_cast<std::size_t>(a)];
}

TaskSimilarity EmbeddingSimilarityTracker::current() const {
  return TaskSimilarity::estimated(
      similarity_from_block_sums(block_sums_, counts_, sigma_z_));
}

}  // namespace kmtl
