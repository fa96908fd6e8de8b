#pragma once

#include "kmtl/environments.hpp"
#include "kmtl/policies.hpp"

namespace kmtl {

/// Outcome of one seeded episode: cumulative regret per round against the
/// environment's best expected arm, the action sequence, and the full
/// interaction log (kept by the harness, independent of policy internals).
struct EpisodeResult {
  Vector cum_regret;
  std::vector<int> actions;   // 1-based arms, one per round
  History history;
  long long width_violations = 0;
};

/// Play `policy` against `env` for T rounds.  The policy sees its chosen
/// arm's realized reward; regret accumulates the gap between the best and the
/// chosen expected reward.  Throws std::runtime_error if the environment
/// cannot serve T rounds.
EpisodeResult run_episode(Environment& env, Policy& policy, int T);

}  // namespace kmtl
