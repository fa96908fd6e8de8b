#include "kmtl/episode.hpp"

#include <stdexcept>

namespace kmtl {

EpisodeResult run_episode(Environment& env, Policy& policy, int T) {
  if (T < 1) throw std::invalid_argument("run_episode: T must be positive");
  if (env.max_rounds() >= 0 && env.max_rounds() < T)
    throw std::runtime_error("run_episode: environment cannot serve " +
                             std::to_string(T) + " rounds (has " +
                             std::to_string(env.max_rounds()) + ")");

  EpisodeResult out;
  out.cum_regret = Vector::Zero(T);
  out.actions.reserve(static_cast<std::size_t>(T));
  out.history = History(env.num_arms());

  double regret = 0.0;
  for (int t = 1; t <= T; ++t) {
    RoundObservation obs = env.next_round(t);
    if (obs.num_arms() != env.num_arms())
      throw std::runtime_error("run_episode: environment emitted wrong arm count");

    const int arm = policy.choose_informed(t, obs);
    if (arm < 1 || arm > obs.num_arms())
      throw std::runtime_error("run_episode: policy chose arm outside the range");

    const double best = obs.expected.maxCoeff();
    regret += best - obs.expected(arm - 1);
    out.cum_regret(t - 1) = regret;

    const AugmentedContext& point = obs.candidates[static_cast<std::size_t>(arm - 1)];
    const double reward = obs.realized(arm - 1);
    policy.observe(t, arm, point, reward);
    out.history.append(t, arm, point, reward);
    out.actions.push_back(arm);
  }
  out.width_violations = policy.width_violations();
  return out;
}

}  // namespace kmtl
