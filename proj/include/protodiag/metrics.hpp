#pragma once

#include <map>
#include <vector>

#include "protodiag/simulator.hpp"

namespace protodiag {

struct EpisodeResult {
  Outcome outcome = Outcome::Ongoing;
  double reward = 0.0;
  int turns = 0;
};

struct Metrics {
  double success_rate = 0.0;  // percent
  double mean_reward = 0.0;
  double mean_turns = 0.0;
  std::map<Outcome, int> outcome_counts;
  int episodes = 0;
};

// Order-independent aggregation: counts and sums only.
inline Metrics aggregate_metrics(const std::vector<EpisodeResult>& results) {
  Metrics m;
  m.episodes = static_cast<int>(results.size());
  double reward_sum = 0.0;
  long long turn_sum = 0;
  for (const auto& r : results) {
    ++m.outcome_counts[r.outcome];
    reward_sum += r.reward;
    turn_sum += r.turns;
  }
  if (m.episodes > 0) {
    const auto it = m.outcome_counts.find(Outcome::Success);
    const int successes = it == m.outcome_counts.end() ? 0 : it->second;
    m.success_rate = 100.0 * successes / m.episodes;
    m.mean_reward = reward_sum / m.episodes;
    m.mean_turns = static_cast<double>(turn_sum) / m.episodes;
  }
  return m;
}

}  // namespace protodiag
