#pragma once

#include <istream>
#include <string>

#include <json.hpp>

#include "protodiag/corpus.hpp"
#include "protodiag/dqn.hpp"
#include "protodiag/experiments.hpp"
#include "protodiag/proto.hpp"

namespace protodiag {

// On-disk agent snapshot. DQN checkpoints are self-contained; ProtoQN
// checkpoints carry a corpus fingerprint instead of prototypes, so that
// evaluation rebuilds the identical support index from the training corpus.
struct Checkpoint {
  AgentKind kind = AgentKind::Dqn;
  Vocabulary vocab;
  int max_turns = 44;
  DqnParams dqn;      // kind == Dqn
  ProtoAgent proto;   // kind == Proto
  std::string support_corpus_hash;
  SupportOrder support_order = SupportOrder::Annotation;
  std::uint64_t support_shuffle_seed = 0;
  int support_k = 10;
};

inline std::string save_checkpoint(const Checkpoint& cp) {
  nlohmann::json j;
  j["format"] = "protodiag_checkpoint";
  j["version"] = 1;
  j["agent"] = agent_name(cp.kind);
  j["max_turns"] = cp.max_turns;
  j["vocab"] = {{"symptoms", cp.vocab.symptoms}, {"diseases", cp.vocab.diseases}};
  if (cp.kind == AgentKind::Dqn) {
    j["encoder"] = encoder_to_json(cp.dqn.encoder);
    j["head"] = {{"actions", cp.dqn.head.actions},
                 {"dim", cp.dqn.head.dim},
                 {"w", cp.dqn.head.w},
                 {"b", cp.dqn.head.b}};
  } else {
    j["encoder"] = encoder_to_json(cp.proto.encoder);
    j["fallback"] = cp.proto.fallback.e;
    j["support"] = {{"corpus_hash", cp.support_corpus_hash},
                    {"order", support_order_name(cp.support_order)},
                    {"shuffle_seed", cp.support_shuffle_seed},
                    {"support_k", cp.support_k}};
  }
  return j.dump(2) + "\n";
}

inline Checkpoint load_checkpoint(std::istream& in) {
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint: malformed JSON: ") + e.what());
  }
  if (j.value("format", std::string()) != "protodiag_checkpoint")
    throw DataError("checkpoint: not a protodiag checkpoint");
  if (j.value("version", 0) != 1)
    throw DataError("checkpoint: unsupported version");
  Checkpoint cp;
  try {
    const std::string agent = j.at("agent").get<std::string>();
    if (agent == "dqn")
      cp.kind = AgentKind::Dqn;
    else if (agent == "proto")
      cp.kind = AgentKind::Proto;
    else
      throw DataError("checkpoint: unknown agent kind '" + agent + "'");
    cp.max_turns = j.at("max_turns").get<int>();
    cp.vocab.symptoms = j.at("vocab").at("symptoms").get<std::vector<std::string>>();
    cp.vocab.diseases = j.at("vocab").at("diseases").get<std::vector<std::string>>();

    if (cp.kind == AgentKind::Dqn) {
      cp.dqn.encoder = encoder_from_json(j.at("encoder"));
      cp.dqn.head.actions = j.at("head").at("actions").get<int>();
      cp.dqn.head.dim = j.at("head").at("dim").get<int>();
      cp.dqn.head.w = j.at("head").at("w").get<std::vector<double>>();
      cp.dqn.head.b = j.at("head").at("b").get<std::vector<double>>();
      if (cp.dqn.head.actions != action_count(cp.vocab) ||
          cp.dqn.head.dim != cp.dqn.encoder.config.output_dim ||
          cp.dqn.head.w.size() != static_cast<std::size_t>(cp.dqn.head.actions) *
                                      static_cast<std::size_t>(cp.dqn.head.dim) ||
          cp.dqn.head.b.size() != static_cast<std::size_t>(cp.dqn.head.actions))
        throw DataError("checkpoint: head shape mismatch");
    } else {
      cp.proto.encoder = encoder_from_json(j.at("encoder"));
      cp.proto.fallback.e =
          j.at("fallback").get<std::vector<std::vector<double>>>();
      cp.proto.fallback.dim = cp.proto.encoder.config.output_dim;
      if (cp.proto.fallback.e.size() !=
          static_cast<std::size_t>(action_count(cp.vocab)))
        throw DataError("checkpoint: fallback count mismatch");
      for (const auto& e : cp.proto.fallback.e)
        if (e.size() != static_cast<std::size_t>(cp.proto.fallback.dim))
          throw DataError("checkpoint: fallback dim mismatch");
      const auto& support = j.at("support");
      cp.support_corpus_hash = support.at("corpus_hash").get<std::string>();
      const std::string order = support.at("order").get<std::string>();
      if (order == "annotation")
        cp.support_order = SupportOrder::Annotation;
      else if (order == "shuffled")
        cp.support_order = SupportOrder::Shuffled;
      else
        throw DataError("checkpoint: unknown support order '" + order + "'");
      cp.support_shuffle_seed = support.at("shuffle_seed").get<std::uint64_t>();
      cp.support_k = support.at("support_k").get<int>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint: ") + e.what());
  }
  return cp;
}

}  // namespace protodiag
