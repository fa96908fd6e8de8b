#include "kmtl/regressor.hpp"

#include <cmath>
#include <sstream>

namespace kmtl {

namespace {

constexpr double kRadicandClamp = 1e-10;

double clamp_radicand(double rad, int size, double lambda) {
  if (rad >= 0.0) return rad;
  if (rad >= -kRadicandClamp) return 0.0;
  std::ostringstream msg;
  msg << "width radicand " << rad << " below tolerance (system size " << size
      << ", lambda " << lambda << ")";
  throw NumericalError(msg.str());
}

}  // namespace

WeightedGramSolver::WeightedGramSolver(const Matrix& gram, const Vector& weights,
                                       const Vector& rewards, double lambda)
    : lambda_(lambda) {
  if (!(lambda > 0.0))
    throw std::invalid_argument("WeightedGramSolver: lambda must be positive");
  const int n = static_cast<int>(gram.rows());
  if (gram.cols() != n || weights.size() != n || rewards.size() != n)
    throw std::invalid_argument("WeightedGramSolver: inconsistent system sizes");
  sqrt_weights_ = weights.cwiseSqrt();
  if (n == 0) return;

  Matrix sys = sqrt_weights_.asDiagonal() * gram * sqrt_weights_.asDiagonal();
  sys.diagonal().array() += lambda;
  llt_.compute(sys);
  if (llt_.info() != Eigen::Success) {
    std::ostringstream msg;
    msg << "Cholesky factorization failed: size " << n << ", lambda " << lambda
        << ", system diagonal in [" << sys.diagonal().minCoeff() << ", "
        << sys.diagonal().maxCoeff() << "]";
    throw NumericalError(msg.str());
  }
  solved_rewards_ = llt_.solve((sqrt_weights_.array() * rewards.array()).matrix());
  if (!solved_rewards_.allFinite()) {
    std::ostringstream msg;
    msg << "weighted ridge solve produced non-finite coefficients: size " << n
        << ", lambda " << lambda;
    throw NumericalError(msg.str());
  }
}

double WeightedGramSolver::predict(const Vector& kvec) const {
  if (size() == 0) return 0.0;
  if (kvec.size() != size())
    throw std::invalid_argument("WeightedGramSolver::predict: wrong query length");
  return (sqrt_weights_.array() * kvec.array()).matrix().dot(solved_rewards_);
}

double WeightedGramSolver::width2(const Vector& kvec, double kself) const {
  if (size() == 0) return kself / lambda_;
  if (kvec.size() != size())
    throw std::invalid_argument("WeightedGramSolver::width2: wrong query length");
  Vector u = (sqrt_weights_.array() * kvec.array()).matrix();
  llt_.matrixL().solveInPlace(u);
  const double rad = clamp_radicand(kself - u.squaredNorm(), size(), lambda_);
  return rad / lambda_;
}

double WeightedGramSolver::width(const Vector& kvec, double kself) const {
  return std::sqrt(width2(kvec, kself));
}

Vector WeightedGramSolver::alpha() const {
  if (size() == 0) return Vector();
  return (sqrt_weights_.array() * solved_rewards_.array()).matrix();
}

IncrementalUnweightedSolver::IncrementalUnweightedSolver(double lambda)
    : lambda_(lambda) {
  if (!(lambda > 0.0))
    throw std::invalid_argument("IncrementalUnweightedSolver: lambda must be positive");
}

void IncrementalUnweightedSolver::append(const Vector& kcol, double kself, double reward) {
  const int n = size();
  if (kcol.size() != n)
    throw std::invalid_argument("IncrementalUnweightedSolver::append: wrong column length");
  if (lfactor_.rows() <= n) {
    const int cap = std::max(2 * static_cast<int>(lfactor_.rows()), n + 8);
    Matrix grown = Matrix::Zero(cap, cap);
    if (n > 0) grown.topLeftCorner(n, n) = lfactor_.topLeftCorner(n, n);
    lfactor_ = std::move(grown);
  }
  // Bordered step: with A_new = [[A, k], [k^T, kself + lambda]] and A = L L^T,
  // the new factor row is c = L^{-1} k and gamma = sqrt(kself + lambda - c.c).
  Vector c = kcol;
  if (n > 0)
    lfactor_.topLeftCorner(n, n).triangularView<Eigen::Lower>().solveInPlace(c);
  const double gamma2 = kself + lambda_ - c.squaredNorm();
  if (!(gamma2 > 0.0) || !std::isfinite(gamma2)) {
    std::ostringstream msg;
    msg << "bordered Cholesky step lost positive definiteness at size " << (n + 1)
        << " (pivot " << gamma2 << ", lambda " << lambda_ << ")";
    throw NumericalError(msg.str());
  }
  lfactor_.row(n).head(n) = c.transpose();
  lfactor_(n, n) = std::sqrt(gamma2);

  Vector y2(n + 1);
  if (n > 0) y2.head(n) = y_;
  y2(n) = reward;
  y_ = std::move(y2);

  solved_y_ = y_;
  auto lview = lfactor_.topLeftCorner(n + 1, n + 1).triangularView<Eigen::Lower>();
  lview.solveInPlace(solved_y_);
  lview.transpose().solveInPlace(solved_y_);
}

double IncrementalUnweightedSolver::predict(const Vector& kvec) const {
  if (size() == 0) return 0.0;
  if (kvec.size() != size())
    throw std::invalid_argument("IncrementalUnweightedSolver::predict: wrong query length");
  return kvec.dot(solved_y_);
}

double IncrementalUnweightedSolver::width2(const Vector& kvec, double kself) const {
  const int n = size();
  if (n == 0) return kself / lambda_;
  if (kvec.size() != n)
    throw std::invalid_argument("IncrementalUnweightedSolver::width2: wrong query length");
  Vector u = kvec;
  lfactor_.topLeftCorner(n, n).triangularView<Eigen::Lower>().solveInPlace(u);
  const double rad = clamp_radicand(kself - u.squaredNorm(), n, lambda_);
  return rad / lambda_;
}

RegressorState::RegressorState(TaskSimilarity ts, KernelSpec kx, double lambda,
                               RegressorMode mode)
    : ts_(std::move(ts)), kx_(kx), lambda_(lambda), mode_(mode) {
  if (!(lambda > 0.0))
    throw std::invalid_argument("RegressorState: lambda must be positive");
}

RegressorState RegressorState::fit(const History& history, const TaskSimilarity& ts,
                                   const KernelSpec& kx, double lambda,
                                   RegressorMode mode) {
  RegressorState state(ts, kx, lambda, mode);
  if (history.empty()) return state;

  const int n = history.size();
  state.points_.reserve(static_cast<std::size_t>(n));
  Vector rewards(n);
  Vector weights(n);
  for (int i = 0; i < n; ++i) {
    const HistoryEntry& e = history.entry(i);
    state.points_.push_back(e.point);
    rewards(i) = e.reward;
    weights(i) = mode == RegressorMode::Weighted
                     ? 1.0 / static_cast<double>(history.pull_count(e.arm))
                     : 1.0;
  }
  const Matrix gram = gram_matrix(ts, kx, state.points_);
  state.solver_ =
      std::make_shared<const WeightedGramSolver>(gram, weights, rewards, lambda);
  return state;
}

Vector RegressorState::kernel_column(const AugmentedContext& q) const {
  Vector kvec(size());
  for (int i = 0; i < size(); ++i)
    kvec(i) = eval_product_kernel(ts_, kx_, points_[static_cast<std::size_t>(i)], q);
  return kvec;
}

double RegressorState::predict(const AugmentedContext& q) const {
  if (!solver_) return 0.0;
  return solver_->predict(kernel_column(q));
}

double RegressorState::width2(const AugmentedContext& q) const {
  const double kself = eval_product_kernel(ts_, kx_, q, q);
  if (!solver_) return kself / lambda_;
  return solver_->width2(kernel_column(q), kself);
}

double RegressorState::width(const AugmentedContext& q) const {
  return std::sqrt(width2(q));
}

std::vector<UcbIndex> RegressorState::ucb_indices(
    const std::vector<AugmentedContext>& candidates, double beta) const {
  if (!(beta >= 0.0))
    throw std::invalid_argument("RegressorState::ucb_indices: beta must be nonnegative");
  std::vector<UcbIndex> out;
  out.reserve(candidates.size());
  int arm = 1;
  for (const AugmentedContext& q : candidates) {
    UcbIndex idx;
    idx.arm = arm++;
    idx.estimate = predict(q);
    idx.width = width(q);
    idx.index = idx.estimate + beta * idx.width;
    out.push_back(idx);
  }
  return out;
}

Vector RegressorState::alpha() const {
  if (!solver_) return Vector();
  return solver_->alpha();
}

PerArmWeightedRidge::PerArmWeightedRidge(int num_arms, KernelSpec kx, double lambda)
    : kx_(kx), lambda_(lambda), blocks_(static_cast<std::size_t>(num_arms)) {
  if (num_arms < 1)
    throw std::invalid_argument("PerArmWeightedRidge: need at least one arm");
  if (!(lambda > 0.0))
    throw std::invalid_argument("PerArmWeightedRidge: lambda must be positive");
}

int PerArmWeightedRidge::count(int arm) const {
  return blocks_.at(static_cast<std::size_t>(arm - 1)).n;
}

void PerArmWeightedRidge::add(int arm, const Vector& x, double reward) {
  ArmBlock& block = blocks_.at(static_cast<std::size_t>(arm - 1));
  const int n = block.n;
  if (block.gram.rows() <= n) {
    const int cap = std::max(2 * static_cast<int>(block.gram.rows()), n + 8);
    Matrix grown = Matrix::Zero(cap, cap);
    if (n > 0) grown.topLeftCorner(n, n) = block.gram.topLeftCorner(n, n);
    block.gram = std::move(grown);
    Vector r2 = Vector::Zero(cap);
    if (n > 0) r2.head(n) = block.rewards.head(n);
    block.rewards = std::move(r2);
  }
  for (int i = 0; i < n; ++i) {
    const double v = kx_(block.xs[static_cast<std::size_t>(i)], x);
    block.gram(n, i) = v;
    block.gram(i, n) = v;
  }
  block.gram(n, n) = kx_(x, x);
  block.rewards(n) = reward;
  block.xs.push_back(x);
  block.n = n + 1;
  block.solver.reset();  // stale; rebuilt lazily
}

void PerArmWeightedRidge::refresh(ArmBlock& block) const {
  const Vector weights = Vector::Constant(block.n, 1.0 / static_cast<double>(block.n));
  block.solver = std::make_shared<const WeightedGramSolver>(
      block.gram.topLeftCorner(block.n, block.n), weights, block.rewards.head(block.n),
      lambda_);
}

PerArmWeightedRidge::Eval PerArmWeightedRidge::eval(int arm, const Vector& x,
                                                    double kself) const {
  ArmBlock& block = blocks_.at(static_cast<std::size_t>(arm - 1));
  if (block.n == 0) return {0.0, kself / lambda_};
  if (!block.solver) refresh(block);
  Vector kvec(block.n);
  for (int i = 0; i < block.n; ++i) kvec(i) = kx_(block.xs[static_cast<std::size_t>(i)], x);
  return {block.solver->predict(kvec), block.solver->width2(kvec, kself)};
}

}  // namespace kmtl
