#pragma once

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "protodiag/corpus.hpp"
#include "protodiag/nncore.hpp"
#include "protodiag/rng.hpp"
#include "protodiag/simulator.hpp"
#include "protodiag/state.hpp"
#include "protodiag/training.hpp"

namespace protodiag {

// Linear Q-head over the embedding: q = W e + b, one row per action.
struct LinearHead {
  int actions = 0;
  int dim = 0;
  std::vector<double> w;  // actions x dim, row-major
  std::vector<double> b;

  bool operator==(const LinearHead&) const = default;
};

struct DqnParams {
  EncoderParams encoder;
  LinearHead head;

  bool operator==(const DqnParams&) const = default;
};

inline LinearHead init_head(int actions, int dim, std::uint64_t seed) {
  LinearHead h;
  h.actions = actions;
  h.dim = dim;
  h.w.resize(static_cast<std::size_t>(actions) * static_cast<std::size_t>(dim));
  h.b.assign(static_cast<std::size_t>(actions), 0.0);
  Rng rng = make_rng(seed);
  const double limit = std::sqrt(6.0 / (actions + dim));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (auto& v : h.w) v = dist(rng);
  return h;
}

inline DqnParams init_dqn(const EncoderConfig& cfg, int actions,
                          std::uint64_t seed) {
  DqnParams p;
  p.encoder = init_params(cfg, derive_seed(seed, 1));
  p.head = init_head(actions, cfg.output_dim, derive_seed(seed, 2));
  return p;
}

inline std::vector<double> head_apply(const LinearHead& head,
                                      const std::vector<double>& e) {
  if (static_cast<int>(e.size()) != head.dim)
    throw RuntimeError("q_values: embedding dim mismatch");
  std::vector<double> q(static_cast<std::size_t>(head.actions));
  for (int a = 0; a < head.actions; ++a) {
    double acc = head.b[static_cast<std::size_t>(a)];
    const double* row =
        head.w.data() + static_cast<std::size_t>(a) * static_cast<std::size_t>(head.dim);
    for (int i = 0; i < head.dim; ++i)
      acc += row[static_cast<std::size_t>(i)] * e[static_cast<std::size_t>(i)];
    q[static_cast<std::size_t>(a)] = acc;
  }
  return q;
}

inline std::vector<double> q_values(const DqnParams& params,
                                    const StateVector& s) {
  return head_apply(params.head, forward(params.encoder, s));
}

// Greedy evaluation-time policy (epsilon = 0).
inline AgentAction act_greedy(const DqnParams& params, const DialogState& state,
                              const Vocabulary& vocab, int max_turns) {
  const auto q = q_values(params, encode_state(state, max_turns));
  const auto mask = legal_actions(state, vocab.n_diseases());
  return index_action(greedy_action(q, mask), vocab);
}

struct DqnLoss {
  double loss = 0.0;
  GradBundle encoder;
  std::vector<double> head_w;
  std::vector<double> head_b;
};

// Mean squared TD error over a batch. Targets come from the frozen
// target_params; the max bootstraps only over actions legal in the successor
// state. Gradients flow through q_theta(S, A) alone.
inline DqnLoss td_loss(const std::vector<Transition>& batch,
                       const DqnParams& params, const DqnParams& target_params,
                       double gamma, const ActionSpace& space) {
  if (batch.empty()) throw RuntimeError("td_loss: empty batch");
  DqnLoss out;
  out.encoder = zero_grads(params.encoder);
  out.head_w.assign(params.head.w.size(), 0.0);
  out.head_b.assign(params.head.b.size(), 0.0);
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  for (const auto& t : batch) {
    ForwardCache cache;
    const std::vector<double> e = forward(params.encoder, t.s, &cache);
    const std::vector<double> q = head_apply(params.head, e);
    double target = t.r;
    if (!t.done) {
      const auto qn = q_values(target_params, t.s_next);
      const auto mask =
          legal_actions_from_encoded(t.s_next, space.n_symptoms, space.n_diseases);
      target += gamma * qn[static_cast<std::size_t>(greedy_action(qn, mask))];
    }
    const double diff = q[static_cast<std::size_t>(t.a)] - target;
    out.loss += diff * diff * inv_n;
    const double dq = 2.0 * diff * inv_n;
    const std::size_t row =
        static_cast<std::size_t>(t.a) * static_cast<std::size_t>(params.head.dim);
    std::vector<double> grad_e(e.size());
    for (int i = 0; i < params.head.dim; ++i) {
      out.head_w[row + static_cast<std::size_t>(i)] += dq * e[static_cast<std::size_t>(i)];
      grad_e[static_cast<std::size_t>(i)] = dq * params.head.w[row + static_cast<std::size_t>(i)];
    }
    out.head_b[static_cast<std::size_t>(t.a)] += dq;
    accumulate(out.encoder, backward(params.encoder, cache, grad_e).first);
  }
  return out;
}

struct DqnTrainResult {
  DqnParams params;
  std::vector<EpisodeLog> log;
  int updates = 0;
};

// Continues training from existing parameters; used directly by the few-shot
// adaptation phase.
inline DqnTrainResult train_dqn_from(DqnParams params, const Corpus& corpus,
                                     const SimConfig& sim_cfg,
                                     const TrainConfig& cfg) {
  const auto train_idx = corpus.split_indices(Split::Train);
  if (train_idx.empty()) throw DataError("train: no train goals in corpus");
  const ActionSpace space{corpus.vocab.n_symptoms(), corpus.vocab.n_diseases()};

  Rng rng = make_rng(derive_seed(cfg.seed, 3));
  SgdOptimizer opt(cfg.opt);
  ReplayBuffer buffer(cfg.replay_capacity);
  DqnParams target = params;

  DqnTrainResult result;
  int env_steps = 0;
  for (int ep = 0; ep < cfg.episodes; ++ep) {
    const UserGoal& goal =
        corpus.goals[train_idx[uniform_index(rng, train_idx.size())]];
    Episode episode = reset(goal, corpus.vocab.n_symptoms(), rng());
    const double ep_epsilon = cfg.eps.at(env_steps);
    double ep_reward = 0.0;
    while (!episode.finished) {
      const StateVector sv = encode_state(episode.state, sim_cfg.max_turns);
      const auto q = q_values(params, sv);
      const auto mask = legal_actions(episode.state, space.n_diseases);
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
      DqnLoss l = td_loss(batch, params, target, cfg.gamma, space);
      opt.step(params.encoder, l.encoder);
      opt.step_block(0, params.head.w, l.head_w);
      opt.step_block(1, params.head.b, l.head_b);
      loss_sum += l.loss;
      ++loss_count;
      ++result.updates;
      if (result.updates % cfg.target_sync_every == 0) target = params;
    }
    result.log.push_back({ep, ep_epsilon, ep_reward, episode.state.turn,
                          episode.outcome,
                          loss_count ? loss_sum / loss_count : 0.0});
  }
  result.params = std::move(params);
  return result;
}

inline DqnTrainResult train_dqn(const Corpus& corpus, const SimConfig& sim_cfg,
                                const TrainConfig& cfg,
                                EncoderConfig enc_cfg) {
  enc_cfg.input_dim =
      state_vector_length(corpus.vocab.n_symptoms(), sim_cfg.max_turns);
  DqnParams params = init_dqn(enc_cfg, action_count(corpus.vocab), cfg.seed);
  return train_dqn_from(std::move(params), corpus, sim_cfg, cfg);
}

}  // namespace protodiag
