#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "protodiag/corpus.hpp"
#include "protodiag/rng.hpp"
#include "protodiag/state.hpp"

namespace protodiag {

struct SimConfig {
  double noise = 0.0;        // probability a reply is resampled uniformly
  int max_turns = 44;
  double success_reward = 20.0;
  double failure_reward = 0.0;
};

enum class Outcome { Ongoing, Success, WrongDiagnosis, TurnLimit };

inline const char* outcome_name(Outcome o) {
  switch (o) {
    case Outcome::Ongoing: return "ongoing";
    case Outcome::Success: return "success";
    case Outcome::WrongDiagnosis: return "wrong_diagnosis";
    case Outcome::TurnLimit: return "turn_limit";
  }
  return "?";
}

// One running dialog against a single patient goal. Owns its rng stream, so
// disjoint episodes can run concurrently.
struct Episode {
  UserGoal goal;
  DialogState state;
  Rng rng;
  bool finished = false;
  Outcome outcome = Outcome::Ongoing;
};

struct StepResult {
  std::optional<DialogState> next_state;       // empty once terminal
  std::optional<UserActionKind> user_action;   // reply to a symptom inquiry
  double reward = 0.0;
  bool done = false;
  Outcome outcome = Outcome::Ongoing;
};

inline Episode reset(const UserGoal& goal, int n_symptoms, std::uint64_t seed) {
  Episode e;
  e.goal = goal;
  e.state = initial_state(goal.explicit_findings, n_symptoms);
  e.rng = make_rng(seed);
  return e;
}

// Patient reply to one symptom inquiry. With probability `noise` the reply is
// resampled uniformly from the three kinds and may coincide with the truth.
inline UserActionKind respond(const UserGoal& goal, int symptom, Rng& rng,
                              double noise) {
  const double u = uniform_unit(rng);
  if (u < noise) {
    switch (uniform_index(rng, 3)) {
      case 0: return UserActionKind::Confirm;
      case 1: return UserActionKind::Deny;
      default: return UserActionKind::NotSure;
    }
  }
  auto truth = goal.find(symptom);
  if (!truth) return UserActionKind::NotSure;
  return *truth == Finding::Present ? UserActionKind::Confirm
                                    : UserActionKind::Deny;
}

// Advances the episode by one agent action. Informs terminate immediately;
// a symptom inquiry that lands on the turn cap terminates as TurnLimit.
inline StepResult step(Episode& episode, const AgentAction& action,
                       const SimConfig& cfg) {
  if (episode.finished) throw RuntimeError("step: episode already finished");
  StepResult res;
  switch (action.kind) {
    case AgentActionKind::Initiate:
      throw RuntimeError("step: Initiate is not a steppable action");
    case AgentActionKind::InformDisease: {
      episode.finished = true;
      const bool correct = action.index == episode.goal.disease;
      episode.outcome = correct ? Outcome::Success : Outcome::WrongDiagnosis;
      res.reward = correct ? cfg.success_reward : cfg.failure_reward;
      res.done = true;
      res.outcome = episode.outcome;
      return res;
    }
    case AgentActionKind::RequestSymptom: {
      const UserActionKind user =
          respond(episode.goal, action.index, episode.rng, cfg.noise);
      episode.state = apply_turn(episode.state, action, user);
      res.user_action = user;
      res.next_state = episode.state;
      if (episode.state.turn >= cfg.max_turns) {
        episode.finished = true;
        episode.outcome = Outcome::TurnLimit;
        res.reward = cfg.failure_reward;
        res.done = true;
      }
      res.outcome = episode.outcome;
      return res;
    }
  }
  throw RuntimeError("step: unreachable");
}

}  // namespace protodiag
