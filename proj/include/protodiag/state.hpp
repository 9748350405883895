#pragma once

#include <string>
#include <vector>

#include "protodiag/corpus.hpp"
#include "protodiag/errors.hpp"

namespace protodiag {

// The four user dialog acts. Enum order fixes the one-hot layout.
enum class UserActionKind { Request = 0, Confirm = 1, Deny = 2, NotSure = 3 };

enum class AgentActionKind { Initiate = 0, RequestSymptom = 1, InformDisease = 2 };

// An agent dialog act; `index` is a symptom index for RequestSymptom and a
// disease index for InformDisease, unused for Initiate.
struct AgentAction {
  AgentActionKind kind = AgentActionKind::Initiate;
  int index = -1;

  static AgentAction initiate() { return {AgentActionKind::Initiate, -1}; }
  static AgentAction request(int symptom) {
    return {AgentActionKind::RequestSymptom, symptom};
  }
  static AgentAction inform(int disease) {
    return {AgentActionKind::InformDisease, disease};
  }

  bool operator==(const AgentAction&) const = default;
};

// Per-symptom status with the fixed numeric codes 0 / 1 / -1 / -2.
enum class SlotStatus { NotInquired, Confirmed, Denied, Unrelated };

inline double slot_code(SlotStatus s) {
  switch (s) {
    case SlotStatus::NotInquired: return 0.0;
    case SlotStatus::Confirmed: return 1.0;
    case SlotStatus::Denied: return -1.0;
    case SlotStatus::Unrelated: return -2.0;
  }
  return 0.0;
}

// Structured dialog state. Immutable value; apply_turn returns a new state.
struct DialogState {
  int turn = 0;
  UserActionKind last_user = UserActionKind::Request;
  AgentAction last_agent = AgentAction::initiate();
  std::vector<SlotStatus> slots;

  bool operator==(const DialogState&) const = default;
};

using StateVector = std::vector<double>;

// State at turn 0: the user has just delivered the self-report.
inline DialogState initial_state(const std::vector<SymptomFinding>& explicit_findings,
                                 int n_symptoms) {
  bool any_present = false;
  for (const auto& f : explicit_findings)
    any_present = any_present || f.status == Finding::Present;
  if (explicit_findings.empty() || !any_present)
    throw RuntimeError("initial_state: empty self-report");
  DialogState s;
  s.slots.assign(static_cast<std::size_t>(n_symptoms), SlotStatus::NotInquired);
  for (const auto& f : explicit_findings) {
    if (f.symptom < 0 || f.symptom >= n_symptoms)
      throw RuntimeError("initial_state: symptom index out of range");
    s.slots[static_cast<std::size_t>(f.symptom)] =
        f.status == Finding::Present ? SlotStatus::Confirmed : SlotStatus::Denied;
  }
  return s;
}

// Advances the dialog by one inquiry/reply exchange.
inline DialogState apply_turn(const DialogState& state, const AgentAction& agent,
                              UserActionKind user) {
  if (agent.kind != AgentActionKind::RequestSymptom)
    throw RuntimeError("apply_turn: only symptom inquiries advance the state");
  if (user == UserActionKind::Request)
    throw RuntimeError("apply_turn: user cannot re-send the self-report");
  if (agent.index < 0 ||
      agent.index >= static_cast<int>(state.slots.size()))
    throw RuntimeError("apply_turn: symptom index out of range");
  if (state.slots[static_cast<std::size_t>(agent.index)] != SlotStatus::NotInquired)
    throw RuntimeError("apply_turn: re-inquiry of symptom " +
                       std::to_string(agent.index));
  DialogState next = state;
  next.turn = state.turn + 1;
  next.last_agent = agent;
  next.last_user = user;
  SlotStatus status = SlotStatus::Unrelated;
  if (user == UserActionKind::Confirm) status = SlotStatus::Confirmed;
  if (user == UserActionKind::Deny) status = SlotStatus::Denied;
  next.slots[static_cast<std::size_t>(agent.index)] = status;
  return next;
}

inline int state_vector_length(int n_symptoms, int max_turns) {
  return 4 + 3 + (max_turns + 1) + n_symptoms;
}

// Numeric state: [user one-hot (4) | agent-kind one-hot (3) |
//                 turn one-hot (max_turns+1) | slot codes (n_symptoms)].
inline StateVector encode_state(const DialogState& state, int max_turns) {
  if (state.turn < 0 || state.turn > max_turns)
    throw RuntimeError("encode_state: turn " + std::to_string(state.turn) +
                       " outside [0, " + std::to_string(max_turns) + "]");
  const int n_symptoms = static_cast<int>(state.slots.size());
  StateVector v(static_cast<std::size_t>(state_vector_length(n_symptoms, max_turns)),
                0.0);
  v[static_cast<std::size_t>(state.last_user)] = 1.0;
  v[4 + static_cast<std::size_t>(state.last_agent.kind)] = 1.0;
  v[static_cast<std::size_t>(7 + state.turn)] = 1.0;
  const std::size_t slot_base = static_cast<std::size_t>(8 + max_turns);
  for (int k = 0; k < n_symptoms; ++k)
    v[slot_base + static_cast<std::size_t>(k)] =
        slot_code(state.slots[static_cast<std::size_t>(k)]);
  return v;
}

// ---------------------------------------------------------------------------
// Policy action space: symptoms first, diseases after.
// ---------------------------------------------------------------------------

inline int action_count(const Vocabulary& vocab) {
  return vocab.n_symptoms() + vocab.n_diseases();
}

inline int action_index(const AgentAction& action, const Vocabulary& vocab) {
  switch (action.kind) {
    case AgentActionKind::RequestSymptom:
      if (action.index < 0 || action.index >= vocab.n_symptoms())
        throw RuntimeError("action_index: symptom index out of range");
      return action.index;
    case AgentActionKind::InformDisease:
      if (action.index < 0 || action.index >= vocab.n_diseases())
        throw RuntimeError("action_index: disease index out of range");
      return vocab.n_symptoms() + action.index;
    case AgentActionKind::Initiate:
      break;
  }
  throw RuntimeError("action_index: Initiate is not a policy action");
}

inline AgentAction index_action(int i, const Vocabulary& vocab) {
  if (i < 0 || i >= action_count(vocab))
    throw RuntimeError("index_action: index " + std::to_string(i) +
                       " out of range");
  if (i < vocab.n_symptoms()) return AgentAction::request(i);
  return AgentAction::inform(i - vocab.n_symptoms());
}

inline bool is_inform_index(int i, const Vocabulary& vocab) {
  return i >= vocab.n_symptoms();
}

// Legality mask over the policy action space: a symptom may be asked only
// while its slot is NotInquired; informs are always available.
inline std::vector<char> legal_actions(const DialogState& state, int n_diseases) {
  std::vector<char> mask(state.slots.size() + static_cast<std::size_t>(n_diseases),
                         1);
  for (std::size_t k = 0; k < state.slots.size(); ++k)
    mask[k] = state.slots[k] == SlotStatus::NotInquired ? 1 : 0;
  return mask;
}

// Same mask, recovered from an encoded vector's slot block. Used when only
// the replayed StateVector of a successor state is available.
inline std::vector<char> legal_actions_from_encoded(const StateVector& v,
                                                    int n_symptoms,
                                                    int n_diseases) {
  std::vector<char> mask(static_cast<std::size_t>(n_symptoms + n_diseases), 1);
  const std::size_t slot_base = v.size() - static_cast<std::size_t>(n_symptoms);
  for (int k = 0; k < n_symptoms; ++k)
    mask[static_cast<std::size_t>(k)] =
        v[slot_base + static_cast<std::size_t>(k)] == 0.0 ? 1 : 0;
  return mask;
}

}  // namespace protodiag
