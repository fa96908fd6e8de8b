#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace kmtl {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Identifies the task/arm side of an augmented context.  Most code uses the
/// ArmId variant (a 1-based arm index into the similarity matrix).  Singleton
/// is the degenerate descriptor of the pooled setting where all arms share a
/// single task; Distribution marks a descriptor whose identity is the arm's
/// empirical context sample (used when similarity is estimated from data) —
/// it still carries the arm index as the key into that sample.
struct ArmDescriptor {
  enum class Kind { ArmId, Singleton, Distribution };

  Kind kind = Kind::ArmId;
  int id = 1;  // 1-based arm index; meaningful for ArmId and Distribution

  static ArmDescriptor arm(int id) { return {Kind::ArmId, id}; }
  static ArmDescriptor singleton() { return {Kind::Singleton, 0}; }
  static ArmDescriptor distribution(int id) { return {Kind::Distribution, id}; }
};

/// An (arm descriptor, context vector) pair — the input point of the product
/// kernel.
struct AugmentedContext {
  ArmDescriptor z;
  Vector x;
};

/// One logged interaction.
struct HistoryEntry {
  int round = 0;        // 1-based round index
  int arm = 0;          // 1-based arm actually pulled
  AugmentedContext point;
  double reward = 0.0;
};

/// Ordered interaction log plus per-arm pull counts.  The count invariant
/// (counts sum to the number of entries) holds by construction.
class History {
 public:
  History() = default;
  explicit History(int num_arms) : pull_counts_(static_cast<std::size_t>(num_arms), 0) {
    if (num_arms < 1) throw std::invalid_argument("History: need at least one arm");
  }

  void append(int round, int arm, AugmentedContext point, double reward) {
    if (arm < 1 || arm > num_arms())
      throw std::out_of_range("History::append: arm index out of range");
    if (!point.x.allFinite() || !std::isfinite(reward))
      throw std::invalid_argument("History::append: non-finite observation");
    entries_.push_back({round, arm, std::move(point), reward});
    ++pull_counts_[static_cast<std::size_t>(arm - 1)];
  }

  int size() const { return static_cast<int>(entries_.size()); }
  bool empty() const { return entries_.empty(); }
  int num_arms() const { return static_cast<int>(pull_counts_.size()); }
  const HistoryEntry& entry(int i) const { return entries_.at(static_cast<std::size_t>(i)); }
  const std::vector<HistoryEntry>& entries() const { return entries_; }

  int pull_count(int arm) const {
    if (arm < 1 || arm > num_arms())
      throw std::out_of_range("History::pull_count: arm index out of range");
    return pull_counts_[static_cast<std::size_t>(arm - 1)];
  }
  const std::vector<int>& pull_counts() const { return pull_counts_; }

  /// Positions (0-based into the entry list) of the rounds where `arm` was
  /// pulled, in chronological order.
  std::vector<int> positions_for_arm(int arm) const {
    std::vector<int> out;
    for (int i = 0; i < size(); ++i)
      if (entries_[static_cast<std::size_t>(i)].arm == arm) out.push_back(i);
    return out;
  }

 private:
  std::vector<HistoryEntry> entries_;
  std::vector<int> pull_counts_;
};

/// What an environment exposes for one round: the per-arm candidate points,
/// the per-arm expected rewards (harness-only, used for regret), and the
/// per-arm realized rewards (the policy sees only its chosen arm's entry).
struct RoundObservation {
  std::vector<AugmentedContext> candidates;  // exactly one per arm
  Vector expected;                           // harness-only truth
  Vector realized;                           // revealed for the chosen arm

  int num_arms() const { return static_cast<int>(candidates.size()); }
};

/// Per-arm decision summary at one round.
struct UcbIndex {
  int arm = 0;         // 1-based
  double estimate = 0.0;
  double width = 0.0;  // >= 0
  double index = 0.0;  // estimate + beta * width
};

}  // namespace kmtl
