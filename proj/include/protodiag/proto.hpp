#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "protodiag/corpus.hpp"
#include "protodiag/metrics.hpp"
#include "protodiag/nncore.hpp"
#include "protodiag/rng.hpp"
#include "protodiag/simulator.hpp"
#include "protodiag/state.hpp"
#include "protodiag/training.hpp"

namespace protodiag {

// Iteration order for a goal's implicit findings when reconstructing its
// dialog trajectory.
enum class SupportOrder { Annotation, Shuffled };

inline const char* support_order_name(SupportOrder o) {
  return o == SupportOrder::Annotation ? "annotation" : "shuffled";
}

struct ProtoConfig {
  int support_k = 10;                 // training-time sample size per action
  SupportOrder order = SupportOrder::Annotation;
  std::uint64_t shuffle_seed = 0;     // only used with Shuffled order
  bool stop_support_gradient = false; // ablation: no gradient into supports
};

// Encoded corpus states grouped by the action that followed them. Lists may
// be empty for actions the corpus never exhibits.
struct SupportIndex {
  ActionSpace space;
  int max_turns = 0;
  std::vector<std::vector<StateVector>> states;  // per action index
  int truncated_goals = 0;
  std::string corpus_fingerprint;

  std::size_t total_pairs() const {
    std::size_t n = 0;
    for (const auto& list : states) n += list.size();
    return n;
  }
  std::size_t max_support_size() const {
    std::size_t n = 0;
    for (const auto& list : states) n = std::max(n, list.size());
    return n;
  }
};

enum class ProtoSource { Pooled, Fallback };

// One embedding per policy action: the mean of its pooled support states, or
// the learnable fallback when no support exists.
struct PrototypeTable {
  int dim = 0;
  std::vector<std::vector<double>> embeddings;
  std::vector<ProtoSource> source;
};

// Learnable stand-ins for zero-support actions; they keep the action space
// fixed across few-shot folds and receive SGD updates only when used.
struct FallbackEmbeddings {
  int dim = 0;
  std::vector<std::vector<double>> e;  // per action

  bool operator==(const FallbackEmbeddings&) const = default;
};

inline FallbackEmbeddings init_fallback(int actions, int dim,
                                        std::uint64_t seed) {
  FallbackEmbeddings f;
  f.dim = dim;
  f.e.assign(static_cast<std::size_t>(actions),
             std::vector<double>(static_cast<std::size_t>(dim)));
  Rng rng = make_rng(seed);
  const double limit = 1.0 / std::sqrt(static_cast<double>(dim));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (auto& v : f.e)
    for (auto& x : v) x = dist(rng);
  return f;
}

// Replays each train goal as the trajectory it annotates: self-report, one
// inquiry per implicit finding (answered from the annotation), then the
// inform action. Every (encoded state, following action) pair is collected.
// Goals whose implicit list cannot fit under the turn cap are truncated so
// the inform remains reachable, and counted.
inline SupportIndex build_support_index(const Corpus& corpus, int max_turns,
                                        SupportOrder order = SupportOrder::Annotation,
                                        std::uint64_t shuffle_seed = 0) {
  const auto train_idx = corpus.split_indices(Split::Train);
  if (train_idx.empty())
    throw DataError("support index: corpus has no train goals");
  SupportIndex index;
  index.space = {corpus.vocab.n_symptoms(), corpus.vocab.n_diseases()};
  index.max_turns = max_turns;
  index.states.assign(static_cast<std::size_t>(index.space.n_actions()), {});
  index.corpus_fingerprint = corpus_hash(corpus);

  for (std::size_t gi : train_idx) {
    const UserGoal& goal = corpus.goals[gi];
    std::vector<SymptomFinding> sequence = goal.implicit_findings;
    if (order == SupportOrder::Shuffled) {
      Rng rng = make_rng(derive_seed(shuffle_seed, fnv1a64(goal.id)));
      std::shuffle(sequence.begin(), sequence.end(), rng);
    }
    // The inform must land on a turn an episode can still act at.
    const std::size_t cap = static_cast<std::size_t>(max_turns - 1);
    if (sequence.size() > cap) {
      sequence.resize(cap);
      ++index.truncated_goals;
    }
    DialogState state =
        initial_state(goal.explicit_findings, corpus.vocab.n_symptoms());
    for (const auto& f : sequence) {
      const AgentAction ask = AgentAction::request(f.symptom);
      index.states[static_cast<std::size_t>(action_index(ask, corpus.vocab))]
          .push_back(encode_state(state, max_turns));
      state = apply_turn(state, ask,
                         f.status == Finding::Present ? UserActionKind::Confirm
                                                      : UserActionKind::Deny);
    }
    const AgentAction inform = AgentAction::inform(goal.disease);
    index.states[static_cast<std::size_t>(action_index(inform, corpus.vocab))]
        .push_back(encode_state(state, max_turns));
  }
  return index;
}

// Which support states feed each prototype: indices into index.states[a].
using SupportSelection = std::vector<std::vector<int>>;

inline SupportSelection full_selection(const SupportIndex& index) {
  SupportSelection sel(index.states.size());
  for (std::size_t a = 0; a < index.states.size(); ++a) {
    sel[a].resize(index.states[a].size());
    for (std::size_t i = 0; i < sel[a].size(); ++i)
      sel[a][i] = static_cast<int>(i);
  }
  return sel;
}

// Uniform sample without replacement of min(support_k, |list|) per action.
// When the whole list fits, it is taken in order, so sampling with
// support_k >= max list size reproduces full_selection exactly.
inline SupportSelection sample_selection(const SupportIndex& index,
                                         int support_k, Rng& rng) {
  if (support_k < 1) throw RuntimeError("proto: support_k must be >= 1");
  SupportSelection sel(index.states.size());
  for (std::size_t a = 0; a < index.states.size(); ++a) {
    const std::size_t n = index.states[a].size();
    if (n <= static_cast<std::size_t>(support_k)) {
      sel[a].resize(n);
      for (std::size_t i = 0; i < n; ++i) sel[a][i] = static_cast<int>(i);
      continue;
    }
    std::vector<int> pool(n);
    for (std::size_t i = 0; i < n; ++i) pool[i] = static_cast<int>(i);
    sel[a] = detail::sample_without_replacement(rng, std::move(pool), support_k);
  }
  return sel;
}

// Prototype of one action: the mean embedding over its selected supports.
inline PrototypeTable pool_prototypes(const EncoderParams& encoder,
                                      const SupportIndex& index,
                                      const SupportSelection& selection,
                                      const FallbackEmbeddings& fallback) {
  PrototypeTable table;
  table.dim = encoder.config.output_dim;
  table.embeddings.resize(index.states.size());
  table.source.resize(index.states.size());
  for (std::size_t a = 0; a < index.states.size(); ++a) {
    if (selection[a].empty()) {
      table.embeddings[a] = fallback.e[a];
      table.source[a] = ProtoSource::Fallback;
      continue;
    }
    std::vector<double> mean(static_cast<std::size_t>(table.dim), 0.0);
    for (int i : selection[a]) {
      const auto emb =
          forward(encoder, index.states[a][static_cast<std::size_t>(i)]);
      for (std::size_t d = 0; d < mean.size(); ++d) mean[d] += emb[d];
    }
    const double inv = 1.0 / static_cast<double>(selection[a].size());
    for (auto& v : mean) v *= inv;
    table.embeddings[a] = std::move(mean);
    table.source[a] = ProtoSource::Pooled;
  }
  return table;
}

// Evaluation mode: the full support set. Deterministic.
inline PrototypeTable proto_embed_eval(const EncoderParams& encoder,
                                       const SupportIndex& index,
                                       const FallbackEmbeddings& fallback) {
  return pool_prototypes(encoder, index, full_selection(index), fallback);
}

// Training mode: a fresh support sample of size support_k per action.
inline PrototypeTable proto_embed_train(const EncoderParams& encoder,
                                        const SupportIndex& index,
                                        const FallbackEmbeddings& fallback,
                                        int support_k, Rng& rng) {
  return pool_prototypes(encoder, index,
                         sample_selection(index, support_k, rng), fallback);
}

// Q values as dot products of the state embedding with each prototype.
inline std::vector<double> proto_q(const std::vector<double>& e,
                                   const PrototypeTable& table) {
  if (static_cast<int>(e.size()) != table.dim)
    throw RuntimeError("proto_q: embedding dim mismatch");
  std::vector<double> q(table.embeddings.size());
  for (std::size_t a = 0; a < table.embeddings.size(); ++a) {
    double acc = 0.0;
    for (std::size_t d = 0; d < e.size(); ++d)
      acc += e[d] * table.embeddings[a][d];
    q[a] = acc;
  }
  return q;
}

// Runs one dialog with a fixed prototype table, epsilon-greedy over
// proto_q. Returns the collected transitions and the episode outcome.
inline std::pair<std::vector<Transition>, Outcome> run_proto_dialog(
    const EncoderParams& encoder, const PrototypeTable& table,
    Episode& episode, double eps, Rng& rng, const SimConfig& sim_cfg,
    const Vocabulary& vocab) {
  std::vector<Transition> transitions;
  while (!episode.finished) {
    const StateVector sv = encode_state(episode.state, sim_cfg.max_turns);
    const auto q = proto_q(forward(encoder, sv), table);
    const auto mask = legal_actions(episode.state, vocab.n_diseases());
    const int a = select_action(q, mask, eps, rng);
    StepResult res = step(episode, index_action(a, vocab), sim_cfg);
    Transition t;
    t.s = sv;
    t.a = a;
    t.r = res.reward;
    t.done = res.done;
    if (!res.done) t.s_next = encode_state(*res.next_state, sim_cfg.max_turns);
    transitions.push_back(std::move(t));
  }
  return {std::move(transitions), episode.outcome};
}

struct ProtoLoss {
  double loss = 0.0;
  GradBundle encoder;
  // Per action: gradient into its fallback embedding (empty when unused).
  std::vector<std::vector<double>> fallback_grads;
};

// Mean squared TD error with prototype-sided gradients: the chain runs
// through the query embedding and, unless stopped, through every support
// embedding inside the sampled mean. TD targets use the frozen target
// encoder and target table only.
inline ProtoLoss proto_td_loss(const EncoderParams& encoder,
                               const FallbackEmbeddings& fallback,
                               const SupportIndex& index,
                               const SupportSelection& selection,
                               const std::vector<Transition>& batch,
                               const EncoderParams& target_encoder,
                               const PrototypeTable& target_table, double gamma,
                               bool stop_support_gradient = false) {
  if (batch.empty()) throw RuntimeError("proto_td_loss: empty batch");
  ProtoLoss out;
  out.encoder = zero_grads(encoder);
  out.fallback_grads.assign(index.states.size(), {});
  const int dim = encoder.config.output_dim;
  const ActionSpace& space = index.space;

  // Prototypes are only needed for actions present in the batch; build them
  // lazily with cached forward passes for the support-side backward.
  std::vector<std::vector<double>> proto(index.states.size());
  std::vector<std::vector<ForwardCache>> support_caches(index.states.size());
  std::vector<std::vector<double>> proto_grad(index.states.size());
  auto ensure_proto = [&](std::size_t a) {
    if (!proto[a].empty()) return;
    if (selection[a].empty()) {
      proto[a] = fallback.e[a];
      return;
    }
    std::vector<double> mean(static_cast<std::size_t>(dim), 0.0);
    for (int i : selection[a]) {
      ForwardCache cache;
      const auto emb =
          forward(encoder, index.states[a][static_cast<std::size_t>(i)], &cache);
      for (std::size_t d = 0; d < mean.size(); ++d) mean[d] += emb[d];
      support_caches[a].push_back(std::move(cache));
    }
    const double inv = 1.0 / static_cast<double>(selection[a].size());
    for (auto& v : mean) v *= inv;
    proto[a] = std::move(mean);
  };

  const double inv_n = 1.0 / static_cast<double>(batch.size());
  for (const auto& t : batch) {
    const std::size_t a = static_cast<std::size_t>(t.a);
    ensure_proto(a);
    ForwardCache cache;
    const std::vector<double> e = forward(encoder, t.s, &cache);
    double q = 0.0;
    for (std::size_t d = 0; d < e.size(); ++d) q += e[d] * proto[a][d];
    double target = t.r;
    if (!t.done) {
      const auto en = forward(target_encoder, t.s_next);
      const auto qn = proto_q(en, target_table);
      const auto mask =
          legal_actions_from_encoded(t.s_next, space.n_symptoms, space.n_diseases);
      target += gamma * qn[static_cast<std::size_t>(greedy_action(qn, mask))];
    }
    const double diff = q - target;
    out.loss += diff * diff * inv_n;
    const double dq = 2.0 * diff * inv_n;
    std::vector<double> grad_e(static_cast<std::size_t>(dim));
    for (std::size_t d = 0; d < grad_e.size(); ++d) grad_e[d] = dq * proto[a][d];
    accumulate(out.encoder, backward(encoder, cache, grad_e).first);
    if (proto_grad[a].empty())
      proto_grad[a].assign(static_cast<std::size_t>(dim), 0.0);
    for (std::size_t d = 0; d < e.size(); ++d) proto_grad[a][d] += dq * e[d];
  }

  // Push accumulated prototype gradients down into supports or fallbacks.
  for (std::size_t a = 0; a < proto_grad.size(); ++a) {
    if (proto_grad[a].empty()) continue;
    if (selection[a].empty()) {
      out.fallback_grads[a] = proto_grad[a];
      continue;
    }
    if (stop_support_gradient) continue;
    const double inv = 1.0 / static_cast<double>(selection[a].size());
    std::vector<double> g(proto_grad[a].size());
    for (std::size_t d = 0; d < g.size(); ++d) g[d] = proto_grad[a][d] * inv;
    for (const auto& cache : support_caches[a])
      accumulate(out.encoder, backward(encoder, cache, g).first);
  }
  return out;
}

// One SGD update on encoder and any used fallback embeddings, with a fresh
// per-update support sample.
inline double proto_update(EncoderParams& encoder, FallbackEmbeddings& fallback,
                           SgdOptimizer& opt, const SupportIndex& index,
                           const std::vector<Transition>& batch,
                           const EncoderParams& target_encoder,
                           const PrototypeTable& target_table, double gamma,
                           const ProtoConfig& cfg, Rng& rng) {
  const SupportSelection selection =
      sample_selection(index, cfg.support_k, rng);
  ProtoLoss l =
      proto_td_loss(encoder, fallback, index, selection, batch, target_encoder,
                    target_table, gamma, cfg.stop_support_gradient);
  if (!std::isfinite(l.loss)) throw RuntimeError("proto_update: non-finite loss");
  opt.step(encoder, l.encoder);
  for (std::size_t a = 0; a < l.fallback_grads.size(); ++a)
    if (!l.fallback_grads[a].empty())
      opt.step_block(2 + a, fallback.e[a], l.fallback_grads[a]);
  return l.loss;
}

struct ProtoAgent {
  EncoderParams encoder;
  FallbackEmbeddings fallback;
};

struct ProtoTrainResult {
  ProtoAgent agent;
  std::vector<EpisodeLog> log;
  int updates = 0;
};

// DQN-style training loop: per episode one fresh acting table, epsilon-greedy
// rollout into the replay buffer, then per-update prototype samples. Target
// encoder and its Eval-mode table are frozen between syncs.
inline ProtoTrainResult train_proto_from(ProtoAgent agent, const Corpus& corpus,
                                         const SupportIndex& index,
                                         const SimConfig& sim_cfg,
                                         const TrainConfig& cfg,
                                         const ProtoConfig& proto_cfg) {
  const auto train_idx = corpus.split_indices(Split::Train);
  if (train_idx.empty()) throw DataError("train: no train goals in corpus");

  Rng rng = make_rng(derive_seed(cfg.seed, 3));
  SgdOptimizer opt(cfg.opt);
  ReplayBuffer buffer(cfg.replay_capacity);
  EncoderParams target_encoder = snapshot(agent.encoder);
  PrototypeTable target_table =
      proto_embed_eval(target_encoder, index, agent.fallback);

  ProtoTrainResult result;
  int env_steps = 0;
  for (int ep = 0; ep < cfg.episodes; ++ep) {
    const UserGoal& goal =
        corpus.goals[train_idx[uniform_index(rng, train_idx.size())]];
    Episode episode = reset(goal, corpus.vocab.n_symptoms(), rng());
    const double ep_epsilon = cfg.eps.at(env_steps);
    const PrototypeTable acting_table = proto_embed_train(
        agent.encoder, index, agent.fallback, proto_cfg.support_k, rng);
    double ep_reward = 0.0;
    while (!episode.finished) {
      const StateVector sv = encode_state(episode.state, sim_cfg.max_turns);
      const auto q = proto_q(forward(agent.encoder, sv), acting_table);
      const auto mask = legal_actions(episode.state, corpus.vocab.n_diseases());
      const int a = select_action(q, mask, cfg.eps.at(env_steps), rng);
      StepResult res = step(episode, index_action(a, corpus.vocab), sim_cfg);
      Transition t;
      t.s = sv;
      t.a = a;
      t.r = res.reward;
      t.done = res.done;
      if (!res.done)
        t.s_next = encode_state(*res.next_state, sim_cfg.max_turns);
      buffer.push(std::move(t));
      ep_reward += res.reward;
      ++env_steps;
    }
    double loss_sum = 0.0;
    int loss_count = 0;
    for (int u = 0; u < cfg.updates_per_episode; ++u) {
      if (buffer.size() < static_cast<std::size_t>(cfg.batch_size)) break;
      const auto batch =
          buffer.sample(rng, static_cast<std::size_t>(cfg.batch_size));
      loss_sum += proto_update(agent.encoder, agent.fallback, opt, index, batch,
                               target_encoder, target_table, cfg.gamma,
                               proto_cfg, rng);
      ++loss_count;
      ++result.updates;
      if (result.updates % cfg.target_sync_every == 0) {
        target_encoder = snapshot(agent.encoder);
        target_table = proto_embed_eval(target_encoder, index, agent.fallback);
      }
    }
    result.log.push_back({ep, ep_epsilon, ep_reward, episode.state.turn,
                          episode.outcome,
                          loss_count ? loss_sum / loss_count : 0.0});
  }
  result.agent = std::move(agent);
  return result;
}

inline ProtoTrainResult train_proto(const Corpus& corpus,
                                    const SimConfig& sim_cfg,
                                    const TrainConfig& cfg,
                                    const ProtoConfig& proto_cfg,
                                    EncoderConfig enc_cfg,
                                    const SupportIndex* prebuilt_index = nullptr) {
  enc_cfg.input_dim =
      state_vector_length(corpus.vocab.n_symptoms(), sim_cfg.max_turns);
  ProtoAgent agent;
  agent.encoder = init_params(enc_cfg, derive_seed(cfg.seed, 1));
  agent.fallback = init_fallback(action_count(corpus.vocab),
                                 enc_cfg.output_dim, derive_seed(cfg.seed, 2));
  const SupportIndex index =
      prebuilt_index
          ? *prebuilt_index
          : build_support_index(corpus, sim_cfg.max_turns, proto_cfg.order,
                                proto_cfg.shuffle_seed);
  return train_proto_from(std::move(agent), corpus, index, sim_cfg, cfg,
                          proto_cfg);
}

// Instrumentation hook for the "prototypes built once per evaluation"
// contract.
struct EvalStats {
  int prototype_builds = 0;
};

// Greedy evaluation over a list of goals. The Eval-mode table is computed
// exactly once up front; per-goal rng streams are derived from the goal id,
// so results do not depend on goal order.
inline Metrics eval_proto(const EncoderParams& encoder,
                          const FallbackEmbeddings& fallback,
                          const SupportIndex& index,
                          const std::vector<UserGoal>& goals,
                          const SimConfig& sim_cfg, std::uint64_t seed,
                          const Vocabulary& vocab,
                          EvalStats* stats = nullptr) {
  if (goals.empty()) throw RuntimeError("eval: no goals");
  const PrototypeTable table = proto_embed_eval(encoder, index, fallback);
  if (stats) ++stats->prototype_builds;
  std::vector<EpisodeResult> results;
  results.reserve(goals.size());
  for (const auto& goal : goals) {
    Episode episode =
        reset(goal, vocab.n_symptoms(), derive_seed(seed, fnv1a64(goal.id)));
    double reward = 0.0;
    while (!episode.finished) {
      const StateVector sv = encode_state(episode.state, sim_cfg.max_turns);
      const auto q = proto_q(forward(encoder, sv), table);
      const auto mask = legal_actions(episode.state, vocab.n_diseases());
      StepResult res =
          step(episode, index_action(greedy_action(q, mask), vocab), sim_cfg);
      reward += res.reward;
    }
    results.push_back({episode.outcome, reward, episode.state.turn});
  }
  return aggregate_metrics(results);
}

}  // namespace protodiag
