#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <string>
#include <vector>

#include <json.hpp>

#include "protodiag/errors.hpp"
#include "protodiag/nncore.hpp"
#include "protodiag/rng.hpp"
#include "protodiag/simulator.hpp"
#include "protodiag/state.hpp"

namespace protodiag {

// Sizes of the two action families; enough to reconstruct legality masks
// from encoded states.
struct ActionSpace {
  int n_symptoms = 0;
  int n_diseases = 0;

  int n_actions() const { return n_symptoms + n_diseases; }
};

// One replay record. s_next is empty for terminal transitions.
struct Transition {
  StateVector s;
  int a = 0;
  double r = 0.0;
  StateVector s_next;
  bool done = false;
};

// FIFO ring of transitions.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 10000) : capacity_(capacity) {
    if (capacity_ == 0) throw RuntimeError("replay: capacity must be >= 1");
  }

  void push(Transition t) {
    if (ring_.size() == capacity_) ring_.pop_front();
    ring_.push_back(std::move(t));
  }

  std::size_t size() const { return ring_.size(); }
  std::size_t capacity() const { return capacity_; }
  const std::deque<Transition>& data() const { return ring_; }

  // Uniform sample with replacement.
  std::vector<Transition> sample(Rng& rng, std::size_t n) const {
    if (ring_.empty()) throw RuntimeError("replay: sample from empty buffer");
    std::vector<Transition> batch;
    batch.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
      batch.push_back(ring_[uniform_index(rng, ring_.size())]);
    return batch;
  }

 private:
  std::size_t capacity_;
  std::deque<Transition> ring_;
};

// Linear decay from eps_start to eps_end over decay_steps environment steps,
// constant afterwards.
struct EpsSchedule {
  double eps_start = 1.0;
  double eps_end = 0.1;
  int decay_steps = 2000;

  double at(int step) const {
    if (step >= decay_steps) return eps_end;
    return eps_start +
           (eps_end - eps_start) * (static_cast<double>(step) / decay_steps);
  }
};

struct TrainConfig {
  double gamma = 0.9;
  int batch_size = 32;
  int target_sync_every = 100;
  int updates_per_episode = 1;
  int episodes = 0;
  std::size_t replay_capacity = 10000;
  OptConfig opt;
  EpsSchedule eps;
  std::uint64_t seed = 0;
};

// Epsilon-greedy choice over the unmasked actions. Greedy ties break toward
// the lowest index; masked actions are never returned.
inline int select_action(const std::vector<double>& q,
                         const std::vector<char>& mask, double eps, Rng& rng) {
  if (q.size() != mask.size())
    throw RuntimeError("select_action: q/mask size mismatch");
  std::vector<int> legal;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) legal.push_back(static_cast<int>(i));
  if (legal.empty()) throw RuntimeError("select_action: all actions masked");
  const double u = uniform_unit(rng);
  if (u < eps) return legal[uniform_index(rng, legal.size())];
  int best = legal[0];
  for (int i : legal)
    if (q[static_cast<std::size_t>(i)] > q[static_cast<std::size_t>(best)])
      best = i;
  return best;
}

// Pure argmax over unmasked actions; equals select_action with eps = 0.
inline int greedy_action(const std::vector<double>& q,
                         const std::vector<char>& mask) {
  int best = -1;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    if (best < 0 || q[i] > q[static_cast<std::size_t>(best)])
      best = static_cast<int>(i);
  }
  if (best < 0) throw RuntimeError("greedy_action: all actions masked");
  return best;
}

// Per-episode training log record; serialized as one JSON line.
struct EpisodeLog {
  int episode = 0;
  double epsilon = 0.0;
  double reward = 0.0;
  int turns = 0;
  Outcome outcome = Outcome::Ongoing;
  double loss_mean = 0.0;
};

inline std::string serialize_log(const std::vector<EpisodeLog>& log) {
  std::string out;
  for (const auto& e : log) {
    nlohmann::ordered_json j;
    j["episode"] = e.episode;
    j["epsilon"] = e.epsilon;
    j["reward"] = e.reward;
    j["turns"] = e.turns;
    j["outcome"] = outcome_name(e.outcome);
    j["loss_mean"] = e.loss_mean;
    out += j.dump();
    out += "\n";
  }
  return out;
}

}  // namespace protodiag
