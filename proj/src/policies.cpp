#include "kmtl/policies.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace kmtl {

namespace {

constexpr double kWidthCapSlack = 1e-12;

int argmax_lowest_index(const std::vector<double>& values) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(values.size()); ++i)
    if (values[static_cast<std::size_t>(i)] > values[static_cast<std::size_t>(best)])
      best = i;
  return best;
}

}  // namespace

double default_beta(int T, int num_arms, double delta, double c, double lambda) {
  if (T < 1 || num_arms < 1)
    throw std::invalid_argument("default_beta: T and arm count must be positive");
  if (!(delta > 0.0 && delta < 1.0))
    throw std::invalid_argument("default_beta: delta must lie in (0,1)");
  const double alpha =
      std::sqrt(std::log(2.0 * T * num_arms / delta) / 2.0);
  return alpha + c * std::sqrt(lambda);
}

// ---------------------------------------------------------------------------
// KmtlUcbPolicy

namespace {

TaskSimilarity initial_similarity(int num_arms, const PolicyConfig& config) {
  switch (config.similarity) {
    case TaskSimilarity::Mode::Independent:
      return TaskSimilarity::independent(num_arms);
    case TaskSimilarity::Mode::Pooled:
      return TaskSimilarity::pooled(num_arms);
    case TaskSimilarity::Mode::Known:
      if (!config.known_similarity)
        throw std::invalid_argument("policy config: Known similarity needs a matrix");
      if (config.known_similarity->rows() != num_arms)
        throw std::invalid_argument("policy config: similarity matrix size != arm count");
      return TaskSimilarity::known(*config.known_similarity);
    case TaskSimilarity::Mode::Parametric:
      return TaskSimilarity::parametric(config.mu, num_arms);
    case TaskSimilarity::Mode::Estimated:
      // No data yet: every arm starts out independent.
      return TaskSimilarity::estimated(Matrix::Identity(num_arms, num_arms));
  }
  throw std::logic_error("initial_similarity: unreachable");
}

}  // namespace

KmtlUcbPolicy::KmtlUcbPolicy(std::string name, int num_arms, PolicyConfig config)
    : name_(std::move(name)),
      num_arms_(num_arms),
      config_(std::move(config)),
      ts_(initial_similarity(num_arms, config_)),
      pull_counts_(static_cast<std::size_t>(num_arms), 0) {
  if (num_arms < 1) throw std::invalid_argument("KmtlUcbPolicy: need at least one arm");
  if (!(config_.lambda > 0.0))
    throw std::invalid_argument("KmtlUcbPolicy: lambda must be positive");
  if (!(config_.beta >= 0.0))
    throw std::invalid_argument("KmtlUcbPolicy: beta must be nonnegative");
  if (config_.similarity == TaskSimilarity::Mode::Independent) {
    per_arm_ = std::make_unique<PerArmWeightedRidge>(num_arms, config_.context_kernel,
                                                     config_.lambda);
  }
  if (config_.similarity == TaskSimilarity::Mode::Estimated) {
    if (config_.estimation_period < 1)
      throw std::invalid_argument("KmtlUcbPolicy: estimation period must be >= 1");
    tracker_ = std::make_unique<EmbeddingSimilarityTracker>(
        num_arms, config_.embedding_kernel, config_.sigma_z);
  }
}

void KmtlUcbPolicy::refresh_similarity() { ts_ = tracker_->current(); }

int KmtlUcbPolicy::choose(int round, const std::vector<AugmentedContext>& candidates) {
  if (static_cast<int>(candidates.size()) != num_arms_)
    throw std::invalid_argument("KmtlUcbPolicy::choose: need one candidate per arm");
  if (tracker_ && (round - 1) % config_.estimation_period == 0) refresh_similarity();

  const bool gaussian = config_.context_kernel.family == KernelSpec::Family::Gaussian;
  last_indices_.assign(static_cast<std::size_t>(num_arms_), UcbIndex{});
  std::vector<double> scores(static_cast<std::size_t>(num_arms_));

  std::shared_ptr<const WeightedGramSolver> solver;
  const Matrix& tsm = ts_.matrix();
  if (!per_arm_ && size_ > 0) {
    // Full weighted system over the product kernel; the task factor is a
    // lookup against the cached context Gram.
    Matrix ktilde(size_, size_);
    Vector weights(size_);
    for (int i = 0; i < size_; ++i) {
      for (int j = 0; j <= i; ++j) {
        const double v = tsm(arms_[static_cast<std::size_t>(i)] - 1,
                             arms_[static_cast<std::size_t>(j)] - 1) *
                         kx_gram_(i, j);
        ktilde(i, j) = v;
        ktilde(j, i) = v;
      }
      weights(i) =
          1.0 / static_cast<double>(pull_counts_[static_cast<std::size_t>(arms_[static_cast<std::size_t>(i)] - 1)]);
    }
    solver = std::make_shared<const WeightedGramSolver>(ktilde, weights,
                                                        rewards_.head(size_),
                                                        config_.lambda);
  }

  for (int a = 1; a <= num_arms_; ++a) {
    const AugmentedContext& cand = candidates[static_cast<std::size_t>(a - 1)];
    const double kx_self = config_.context_kernel(cand.x, cand.x);
    if (!gaussian) max_self_kernel_ = std::max(max_self_kernel_, kx_self);

    double estimate = 0.0;
    double w2 = 0.0;
    if (per_arm_) {
      const auto ev = per_arm_->eval(a, cand.x, kx_self);
      estimate = ev.estimate;
      w2 = ev.width2;
    } else {
      const double kself = tsm(a - 1, a - 1) * kx_self;
      if (!solver) {
        w2 = kself / config_.lambda;
      } else {
        Vector kvec(size_);
        for (int j = 0; j < size_; ++j)
          kvec(j) = tsm(a - 1, arms_[static_cast<std::size_t>(j)] - 1) *
                    config_.context_kernel(contexts_[static_cast<std::size_t>(j)], cand.x);
        estimate = solver->predict(kvec);
        w2 = solver->width2(kvec, kself);
      }
    }

    const double sup_kx = gaussian ? 1.0 : std::max(max_self_kernel_, kx_self);
    const double cap = ts_.max_diagonal() * sup_kx / config_.lambda;
    if (w2 > cap + kWidthCapSlack) ++width_violations_;

    UcbIndex& idx = last_indices_[static_cast<std::size_t>(a - 1)];
    idx.arm = a;
    idx.estimate = estimate;
    idx.width = std::sqrt(w2);
    idx.index = estimate + config_.beta * idx.width;
    scores[static_cast<std::size_t>(a - 1)] = idx.index;
  }
  return 1 + argmax_lowest_index(scores);
}

void KmtlUcbPolicy::observe(int, int arm, const AugmentedContext& point, double reward) {
  if (arm < 1 || arm > num_arms_)
    throw std::out_of_range("KmtlUcbPolicy::observe: arm out of range");
  if (per_arm_) {
    per_arm_->add(arm, point.x, reward);
  } else {
    const int n = size_;
    if (kx_gram_.rows() <= n) {
      const int cap = std::max({2 * static_cast<int>(kx_gram_.rows()), n + 8,
                                config_.T > 0 ? config_.T : 0});
      Matrix grown = Matrix::Zero(cap, cap);
      if (n > 0) grown.topLeftCorner(n, n) = kx_gram_.topLeftCorner(n, n);
      kx_gram_ = std::move(grown);
      Vector r2 = Vector::Zero(cap);
      if (n > 0) r2.head(n) = rewards_.head(n);
      rewards_ = std::move(r2);
    }
    for (int i = 0; i < n; ++i) {
      const double v = config_.context_kernel(contexts_[static_cast<std::size_t>(i)], point.x);
      kx_gram_(n, i) = v;
      kx_gram_(i, n) = v;
    }
    kx_gram_(n, n) = config_.context_kernel(point.x, point.x);
    rewards_(n) = reward;
    contexts_.push_back(point.x);
    arms_.push_back(arm);
    size_ = n + 1;
  }
  ++pull_counts_[static_cast<std::size_t>(arm - 1)];
  if (tracker_) tracker_->add(arm, point.x);
}

// ---------------------------------------------------------------------------
// KernelUcbPoolPolicy

KernelUcbPoolPolicy::KernelUcbPoolPolicy(int num_arms, PolicyConfig config)
    : num_arms_(num_arms),
      config_(std::move(config)),
      ts_(TaskSimilarity::pooled(num_arms)),
      pull_counts_(static_cast<std::size_t>(num_arms), 0) {
  if (num_arms < 1)
    throw std::invalid_argument("KernelUcbPoolPolicy: need at least one arm");
  if (!(config_.lambda > 0.0))
    throw std::invalid_argument("KernelUcbPoolPolicy: lambda must be positive");
}

int KernelUcbPoolPolicy::choose(int, const std::vector<AugmentedContext>& candidates) {
  if (static_cast<int>(candidates.size()) != num_arms_)
    throw std::invalid_argument("KernelUcbPoolPolicy::choose: need one candidate per arm");
  const bool gaussian = config_.context_kernel.family == KernelSpec::Family::Gaussian;

  std::shared_ptr<const WeightedGramSolver> solver;
  if (size_ > 0) {
    Vector weights(size_);
    for (int i = 0; i < size_; ++i)
      weights(i) =
          1.0 / static_cast<double>(pull_counts_[static_cast<std::size_t>(arms_[static_cast<std::size_t>(i)] - 1)]);
    solver = std::make_shared<const WeightedGramSolver>(kx_gram_.topLeftCorner(size_, size_),
                                                        weights, rewards_.head(size_),
                                                        config_.lambda);
  }

  std::vector<double> scores(static_cast<std::size_t>(num_arms_));
  for (int a = 1; a <= num_arms_; ++a) {
    const AugmentedContext& cand = candidates[static_cast<std::size_t>(a - 1)];
    const double kself = config_.context_kernel(cand.x, cand.x);
    if (!gaussian) max_self_kernel_ = std::max(max_self_kernel_, kself);

    double estimate = 0.0;
    double w2 = 0.0;
    if (!solver) {
      w2 = kself / config_.lambda;
    } else {
      Vector kvec(size_);
      for (int j = 0; j < size_; ++j)
        kvec(j) = config_.context_kernel(contexts_[static_cast<std::size_t>(j)], cand.x);
      estimate = solver->predict(kvec);
      w2 = solver->width2(kvec, kself);
    }

    const double sup_kx = gaussian ? 1.0 : std::max(max_self_kernel_, kself);
    if (w2 > sup_kx / config_.lambda + kWidthCapSlack) ++width_violations_;
    scores[static_cast<std::size_t>(a - 1)] = estimate + config_.beta * std::sqrt(w2);
  }
  return 1 + argmax_lowest_index(scores);
}

void KernelUcbPoolPolicy::observe(int, int arm, const AugmentedContext& point,
                                  double reward) {
  if (arm < 1 || arm > num_arms_)
    throw std::out_of_range("KernelUcbPoolPolicy::observe: arm out of range");
  const int n = size_;
  if (kx_gram_.rows() <= n) {
    const int cap = std::max({2 * static_cast<int>(kx_gram_.rows()), n + 8,
                              config_.T > 0 ? config_.T : 0});
    Matrix grown = Matrix::Zero(cap, cap);
    if (n > 0) grown.topLeftCorner(n, n) = kx_gram_.topLeftCorner(n, n);
    kx_gram_ = std::move(grown);
    Vector r2 = Vector::Zero(cap);
    if (n > 0) r2.head(n) = rewards_.head(n);
    rewards_ = std::move(r2);
  }
  for (int i = 0; i < n; ++i) {
    const double v = config_.context_kernel(contexts_[static_cast<std::size_t>(i)], point.x);
    kx_gram_(n, i) = v;
    kx_gram_(i, n) = v;
  }
  kx_gram_(n, n) = config_.context_kernel(point.x, point.x);
  rewards_(n) = reward;
  contexts_.push_back(point.x);
  arms_.push_back(arm);
  ++pull_counts_[static_cast<std::size_t>(arm - 1)];
  size_ = n + 1;
}

// ---------------------------------------------------------------------------
// KernelUcbIndPolicy

KernelUcbIndPolicy::KernelUcbIndPolicy(int num_arms, PolicyConfig config)
    : num_arms_(num_arms),
      config_(std::move(config)),
      ts_(TaskSimilarity::independent(num_arms)),
      ridge_(num_arms, config_.context_kernel, config_.lambda) {}

int KernelUcbIndPolicy::choose(int, const std::vector<AugmentedContext>& candidates) {
  if (static_cast<int>(candidates.size()) != num_arms_)
    throw std::invalid_argument("KernelUcbIndPolicy::choose: need one candidate per arm");
  const bool gaussian = config_.context_kernel.family == KernelSpec::Family::Gaussian;

  std::vector<double> scores(static_cast<std::size_t>(num_arms_));
  for (int a = 1; a <= num_arms_; ++a) {
    const AugmentedContext& cand = candidates[static_cast<std::size_t>(a - 1)];
    const double kself = config_.context_kernel(cand.x, cand.x);
    if (!gaussian) max_self_kernel_ = std::max(max_self_kernel_, kself);
    const auto ev = ridge_.eval(a, cand.x, kself);

    const double sup_kx = gaussian ? 1.0 : std::max(max_self_kernel_, kself);
    if (ev.width2 > sup_kx / config_.lambda + kWidthCapSlack) ++width_violations_;
    scores[static_cast<std::size_t>(a - 1)] = ev.estimate + config_.beta * std::sqrt(ev.width2);
  }
  return 1 + argmax_lowest_index(scores);
}

void KernelUcbIndPolicy::observe(int, int arm, const AugmentedContext& point,
                                 double reward) {
  if (arm < 1 || arm > num_arms_)
    throw std::out_of_range("KernelUcbIndPolicy::observe: arm out of range");
  ridge_.add(arm, point.x, reward);
}

// ---------------------------------------------------------------------------
// Level scheme

BaseLevelEval base_level_eval(const History& history, const std::vector<int>& level_set,
                              const std::vector<AugmentedContext>& candidates,
                              const TaskSimilarity& ts, const KernelSpec& kx,
                              double lambda, double alpha, double c) {
  const int n = static_cast<int>(level_set.size());
  const int num_arms = static_cast<int>(candidates.size());
  const double multiplier = alpha + c * std::sqrt(lambda);

  std::vector<AugmentedContext> points;
  points.reserve(static_cast<std::size_t>(n));
  Vector rewards(n);
  for (int i = 0; i < n; ++i) {
    const HistoryEntry& e = history.entry(level_set[static_cast<std::size_t>(i)]);
    points.push_back(e.point);
    rewards(i) = e.reward;
  }

  std::shared_ptr<const WeightedGramSolver> solver;
  if (n > 0) {
    solver = std::make_shared<const WeightedGramSolver>(
        gram_matrix(ts, kx, points), Vector::Ones(n), rewards, lambda);
  }

  BaseLevelEval out;
  out.estimate.resize(static_cast<std::size_t>(num_arms));
  out.raw_width.resize(static_cast<std::size_t>(num_arms));
  out.width.resize(static_cast<std::size_t>(num_arms));
  out.ucb.resize(static_cast<std::size_t>(num_arms));
  for (int a = 0; a < num_arms; ++a) {
    const AugmentedContext& cand = candidates[static_cast<std::size_t>(a)];
    const double kself = eval_product_kernel(ts, kx, cand, cand);
    double estimate = 0.0;
    double w2 = kself / lambda;
    if (solver) {
      Vector kvec(n);
      for (int i = 0; i < n; ++i)
        kvec(i) = eval_product_kernel(ts, kx, points[static_cast<std::size_t>(i)], cand);
      estimate = solver->predict(kvec);
      w2 = solver->width2(kvec, kself);
    }
    const double s = std::sqrt(w2);
    out.estimate[static_cast<std::size_t>(a)] = estimate;
    out.raw_width[static_cast<std::size_t>(a)] = s;
    out.width[static_cast<std::size_t>(a)] = multiplier * s;
    out.ucb[static_cast<std::size_t>(a)] = estimate + multiplier * s;
  }
  return out;
}

SupKmtlUcbPolicy::SupKmtlUcbPolicy(int num_arms, PolicyConfig config)
    : num_arms_(num_arms),
      config_(std::move(config)),
      ts_(initial_similarity(num_arms, config_)),
      history_(num_arms) {
  if (config_.similarity == TaskSimilarity::Mode::Estimated)
    throw std::invalid_argument(
        "SupKmtlUcbPolicy: estimated similarity is not supported by the level scheme");
  if (config_.T < 1)
    throw std::invalid_argument("SupKmtlUcbPolicy: positive horizon T required");
  if (!(config_.delta > 0.0 && config_.delta < 1.0))
    throw std::invalid_argument("SupKmtlUcbPolicy: delta must lie in (0,1)");
  const int log_levels = static_cast<int>(std::ceil(std::log(static_cast<double>(config_.T))));
  levels_ = std::max(1, log_levels);
  // 2^{-Q} <= 1/sqrt(T) so the deepest level's width cap is below the
  // narrow-width branch threshold; verified here once and relied on below.
  if (std::ldexp(1.0, -levels_) > 1.0 / std::sqrt(static_cast<double>(config_.T)) + 1e-15)
    throw std::logic_error("SupKmtlUcbPolicy: level count too shallow for horizon");
  alpha_ = std::sqrt(
      std::log(2.0 * config_.T * num_arms * (log_levels + 1.0) / config_.delta) / 2.0);
  level_sets_.assign(static_cast<std::size_t>(levels_), {});
  if (config_.incremental) {
    level_solvers_.reserve(static_cast<std::size_t>(levels_));
    for (int q = 0; q < levels_; ++q)
      level_solvers_.push_back(
          std::make_unique<IncrementalUnweightedSolver>(config_.lambda));
  }
}

BaseLevelEval SupKmtlUcbPolicy::eval_level(
    int q, const std::vector<AugmentedContext>& candidates) const {
  const std::vector<int>& level_set = level_sets_[static_cast<std::size_t>(q - 1)];
  if (!config_.incremental)
    return base_level_eval(history_, level_set, candidates, ts_,
                           config_.context_kernel, config_.lambda, alpha_, config_.c);

  const IncrementalUnweightedSolver& solver = *level_solvers_[static_cast<std::size_t>(q - 1)];
  const int n = static_cast<int>(level_set.size());
  const double multiplier = alpha_ + config_.c * std::sqrt(config_.lambda);

  BaseLevelEval out;
  const int num_arms = static_cast<int>(candidates.size());
  out.estimate.resize(static_cast<std::size_t>(num_arms));
  out.raw_width.resize(static_cast<std::size_t>(num_arms));
  out.width.resize(static_cast<std::size_t>(num_arms));
  out.ucb.resize(static_cast<std::size_t>(num_arms));
  for (int a = 0; a < num_arms; ++a) {
    const AugmentedContext& cand = candidates[static_cast<std::size_t>(a)];
    const double kself = eval_product_kernel(ts_, config_.context_kernel, cand, cand);
    double estimate = 0.0;
    double w2 = kself / config_.lambda;
    if (n > 0) {
      Vector kvec(n);
      for (int i = 0; i < n; ++i)
        kvec(i) = eval_product_kernel(
            ts_, config_.context_kernel,
            history_.entry(level_set[static_cast<std::size_t>(i)]).point, cand);
      estimate = solver.predict(kvec);
      w2 = solver.width2(kvec, kself);
    }
    const double s = std::sqrt(w2);
    out.estimate[static_cast<std::size_t>(a)] = estimate;
    out.raw_width[static_cast<std::size_t>(a)] = s;
    out.width[static_cast<std::size_t>(a)] = multiplier * s;
    out.ucb[static_cast<std::size_t>(a)] = estimate + multiplier * s;
  }
  return out;
}

int SupKmtlUcbPolicy::choose(int round, const std::vector<AugmentedContext>& candidates) {
  if (static_cast<int>(candidates.size()) != num_arms_)
    throw std::invalid_argument("SupKmtlUcbPolicy::choose: need one candidate per arm");
  const double narrow_cap = 1.0 / std::sqrt(static_cast<double>(config_.T));
  const bool gaussian = config_.context_kernel.family == KernelSpec::Family::Gaussian;

  std::vector<int> active(static_cast<std::size_t>(num_arms_));
  for (int a = 0; a < num_arms_; ++a) active[static_cast<std::size_t>(a)] = a + 1;

  SupRoundLog log;
  log.round = round;

  int q = 1;
  while (true) {
    if (q > levels_)
      throw std::logic_error("SupKmtlUcbPolicy: level overflow (cannot happen)");
    const BaseLevelEval eval = eval_level(q, candidates);

    if (gaussian) {
      const double cap = ts_.max_diagonal() / config_.lambda;
      for (double s : eval.raw_width)
        if (s * s > cap + kWidthCapSlack) ++width_violations_;
    }

    const double level_cap = std::ldexp(1.0, -q);
    bool all_narrow = true;
    bool all_within_level = true;
    for (int a : active) {
      const double w = eval.width[static_cast<std::size_t>(a - 1)];
      if (w > narrow_cap) all_narrow = false;
      if (w > level_cap) all_within_level = false;
    }

    if (all_narrow) {
      int best = active.front();
      for (int a : active)
        if (eval.ucb[static_cast<std::size_t>(a - 1)] > eval.ucb[static_cast<std::size_t>(best - 1)])
          best = a;
      pending_level_ = -1;
      log.branch = 1;
      log.level = q;
      log.arm = best;
      log_.push_back(std::move(log));
      return best;
    }
    if (all_within_level) {
      double max_ucb = -std::numeric_limits<double>::infinity();
      for (int a : active)
        max_ucb = std::max(max_ucb, eval.ucb[static_cast<std::size_t>(a - 1)]);
      const double threshold = max_ucb - std::ldexp(2.0, -q);  // 2^{1-q}
      std::vector<int> survivors;
      std::vector<double> survivor_ucbs;
      for (int a : active) {
        if (eval.ucb[static_cast<std::size_t>(a - 1)] >= threshold) {
          survivors.push_back(a);
          survivor_ucbs.push_back(eval.ucb[static_cast<std::size_t>(a - 1)]);
        }
      }
      log.branch = 2;
      log.level = q;
      log.surviving = survivors;
      log.filter_threshold = threshold;
      log.surviving_ucbs = survivor_ucbs;
      active = std::move(survivors);
      ++q;
      continue;
    }
    // Some width still exceeds this level's cap: sample the first such arm
    // and let this round's observation widen the level's training set.
    int chosen = 0;
    for (int a : active) {
      if (eval.width[static_cast<std::size_t>(a - 1)] > level_cap) {
        chosen = a;
        break;
      }
    }
    pending_level_ = q;
    log.branch = 3;
    log.level = q;
    log.arm = chosen;
    log_.push_back(std::move(log));
    return chosen;
  }
}

void SupKmtlUcbPolicy::observe(int round, int arm, const AugmentedContext& point,
                               double reward) {
  history_.append(round, arm, point, reward);
  if (pending_level_ >= 1) {
    std::vector<int>& level_set = level_sets_[static_cast<std::size_t>(pending_level_ - 1)];
    if (config_.incremental) {
      const int n = static_cast<int>(level_set.size());
      Vector kcol(n);
      for (int i = 0; i < n; ++i)
        kcol(i) = eval_product_kernel(
            ts_, config_.context_kernel,
            history_.entry(level_set[static_cast<std::size_t>(i)]).point, point);
      const double kself =
          eval_product_kernel(ts_, config_.context_kernel, point, point);
      level_solvers_[static_cast<std::size_t>(pending_level_ - 1)]->append(kcol, kself,
                                                                           reward);
    }
    level_set.push_back(history_.size() - 1);
    pending_level_ = -1;
  }
}

// ---------------------------------------------------------------------------
// Baselines

int OraclePolicy::choose_informed(int, const RoundObservation& obs) {
  int best = 0;
  for (int a = 1; a < obs.num_arms(); ++a)
    if (obs.expected(a) > obs.expected(best)) best = a;
  return best + 1;
}

int RandomPolicy::choose(int, const std::vector<AugmentedContext>& candidates) {
  std::uniform_int_distribution<int> dist(1, static_cast<int>(candidates.size()));
  return dist(rng_);
}

int FixedArmPolicy::choose(int, const std::vector<AugmentedContext>& candidates) {
  if (arm_ < 1 || arm_ > static_cast<int>(candidates.size()))
    throw std::out_of_range("FixedArmPolicy: arm outside the candidate range");
  return arm_;
}

// ---------------------------------------------------------------------------
// Factory

std::unique_ptr<Policy> make_policy(const std::string& name, int num_arms,
                                    const PolicyConfig& config, std::uint64_t rng_seed) {
  if (name == "kmtl-ucb") {
    PolicyConfig pc = config;
    if (pc.similarity == TaskSimilarity::Mode::Known && !pc.known_similarity)
      pc.similarity = TaskSimilarity::Mode::Independent;
    if (pc.similarity == TaskSimilarity::Mode::Estimated)
      pc.similarity = TaskSimilarity::Mode::Independent;
    return std::make_unique<KmtlUcbPolicy>(name, num_arms, std::move(pc));
  }
  if (name == "kmtl-ucb-est") {
    PolicyConfig pc = config;
    pc.similarity = TaskSimilarity::Mode::Estimated;
    return std::make_unique<KmtlUcbPolicy>(name, num_arms, std::move(pc));
  }
  if (name == "kernel-ucb-ind")
    return std::make_unique<KernelUcbIndPolicy>(num_arms, config);
  if (name == "kernel-ucb-pool")
    return std::make_unique<KernelUcbPoolPolicy>(num_arms, config);
  if (name == "sup-kmtl-ucb") {
    PolicyConfig pc = config;
    if (pc.similarity == TaskSimilarity::Mode::Estimated)
      pc.similarity = TaskSimilarity::Mode::Independent;
    if (pc.similarity == TaskSimilarity::Mode::Known && !pc.known_similarity)
      pc.similarity = TaskSimilarity::Mode::Independent;
    return std::make_unique<SupKmtlUcbPolicy>(num_arms, std::move(pc));
  }
  if (name == "oracle") return std::make_unique<OraclePolicy>();
  if (name == "random") return std::make_unique<RandomPolicy>(rng_seed);
  if (name.rfind("fixed:", 0) == 0) {
    try {
      const int arm = std::stoi(name.substr(6));
      if (arm < 1 || arm > num_arms) return nullptr;
      return std::make_unique<FixedArmPolicy>(arm);
    } catch (const std::exception&) {
      return nullptr;
    }
  }
  return nullptr;
}

bool is_kernel_policy(const std::string& name) {
  return name == "kmtl-ucb" || name == "kmtl-ucb-est" || name == "kernel-ucb-ind" ||
         name == "kernel-ucb-pool" || name == "sup-kmtl-ucb";
}

}  // namespace kmtl
