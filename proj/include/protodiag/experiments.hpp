#pragma once

#include <cstdio>
#include <functional>
#include <istream>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "protodiag/corpus.hpp"
#include "protodiag/dqn.hpp"
#include "protodiag/metrics.hpp"
#include "protodiag/proto.hpp"
#include "protodiag/simulator.hpp"

namespace protodiag {

inline constexpr const char* kVersion = "protodiag 0.1.0";

enum class AgentKind { Dqn, Proto };

inline const char* agent_name(AgentKind k) {
  return k == AgentKind::Dqn ? "dqn" : "proto";
}

// Everything one experiment cell needs besides the corpus. Episode counts
// and the noise level are taken from the protocol spec, not from here.
struct ExperimentConfig {
  SimConfig sim;
  TrainConfig train;
  TrainConfig adapt;  // fine-tuning phase of the few-shot protocol
  ProtoConfig proto;
  EncoderConfig encoder;
};

using PolicyFn = std::function<AgentAction(const DialogState&)>;

// Greedy rollout of `policy` over every goal, one episode each. Per-goal rng
// streams derive from the goal id, so metrics are independent of goal order.
inline Metrics evaluate_policy(const PolicyFn& policy,
                               const std::vector<UserGoal>& goals,
                               const SimConfig& sim_cfg, std::uint64_t seed,
                               const Vocabulary& vocab) {
  if (goals.empty()) throw RuntimeError("eval: no goals");
  std::vector<EpisodeResult> results;
  results.reserve(goals.size());
  for (const auto& goal : goals) {
    Episode episode =
        reset(goal, vocab.n_symptoms(), derive_seed(seed, fnv1a64(goal.id)));
    double reward = 0.0;
    while (!episode.finished) {
      StepResult res = step(episode, policy(episode.state), sim_cfg);
      reward += res.reward;
    }
    results.push_back({episode.outcome, reward, episode.state.turn});
  }
  return aggregate_metrics(results);
}

inline std::vector<UserGoal> goals_of_split(const Corpus& corpus, Split split) {
  std::vector<UserGoal> out;
  for (std::size_t i : corpus.split_indices(split))
    out.push_back(corpus.goals[i]);
  return out;
}

// A trained agent of either kind, with everything needed to evaluate it.
struct TrainedAgent {
  AgentKind kind = AgentKind::Dqn;
  DqnParams dqn;
  ProtoAgent proto;
  SupportIndex index;  // proto only
  std::vector<EpisodeLog> log;
};

inline Metrics evaluate_agent(const TrainedAgent& agent,
                              const std::vector<UserGoal>& goals,
                              const SimConfig& sim_cfg, std::uint64_t seed,
                              const Vocabulary& vocab) {
  if (agent.kind == AgentKind::Proto)
    return eval_proto(agent.proto.encoder, agent.proto.fallback, agent.index,
                      goals, sim_cfg, seed, vocab);
  const int max_turns = sim_cfg.max_turns;
  return evaluate_policy(
      [&](const DialogState& s) {
        return act_greedy(agent.dqn, s, vocab, max_turns);
      },
      goals, sim_cfg, seed, vocab);
}

struct RunResult {
  Metrics metrics;
  TrainedAgent agent;
  std::vector<std::string> trained_goal_ids;  // goals episodes sampled from
  std::vector<std::string> eval_goal_ids;
};

// Fully supervised protocol: train on the whole train split, evaluate
// greedily on the whole test split.
inline RunResult run_supervised(AgentKind kind, const Corpus& corpus,
                                const ExperimentConfig& cfg) {
  RunResult out;
  out.agent.kind = kind;
  if (kind == AgentKind::Dqn) {
    auto trained = train_dqn(corpus, cfg.sim, cfg.train, cfg.encoder);
    out.agent.dqn = std::move(trained.params);
    out.agent.log = std::move(trained.log);
  } else {
    auto trained =
        train_proto(corpus, cfg.sim, cfg.train, cfg.proto, cfg.encoder);
    out.agent.proto = std::move(trained.agent);
    out.agent.index = build_support_index(corpus, cfg.sim.max_turns,
                                          cfg.proto.order,
                                          cfg.proto.shuffle_seed);
    out.agent.log = std::move(trained.log);
  }
  for (std::size_t i : corpus.split_indices(Split::Train))
    out.trained_goal_ids.push_back(corpus.goals[i].id);
  const auto test_goals = goals_of_split(corpus, Split::Test);
  for (const auto& g : test_goals) out.eval_goal_ids.push_back(g.id);
  out.metrics = evaluate_agent(out.agent, test_goals, cfg.sim,
                               derive_seed(cfg.train.seed, 99), corpus.vocab);
  return out;
}

struct FewShotSpec {
  int held_out = 0;
  int shots_n = 5;
  int pretrain_episodes = 0;
  int adapt_episodes = 0;
  double noise = 0.0;
};

// shots_n train goals per disease, held-out disease included, drawn with a
// seeded sample. This is the anti-forgetting adaptation pool.
inline std::vector<UserGoal> sample_adaptation_pool(const Corpus& corpus,
                                                    const FewShotSpec& spec,
                                                    std::uint64_t seed) {
  if (spec.shots_n < 1) throw UsageError("fewshot: shots must be >= 1");
  Rng rng = make_rng(derive_seed(seed, 11));
  std::vector<UserGoal> pool;
  for (int d = 0; d < corpus.vocab.n_diseases(); ++d) {
    std::vector<int> candidates;
    for (std::size_t i = 0; i < corpus.goals.size(); ++i)
      if (corpus.goals[i].split == Split::Train && corpus.goals[i].disease == d)
        candidates.push_back(static_cast<int>(i));
    if (static_cast<int>(candidates.size()) < spec.shots_n)
      throw UsageError(
          "fewshot: disease '" +
          corpus.vocab.diseases[static_cast<std::size_t>(d)] + "' has " +
          std::to_string(candidates.size()) + " train goals, need " +
          std::to_string(spec.shots_n));
    for (int i :
         detail::sample_without_replacement(rng, candidates, spec.shots_n))
      pool.push_back(corpus.goals[static_cast<std::size_t>(i)]);
  }
  return pool;
}

// Few-shot new-disease protocol: pretrain with the held-out disease removed,
// fine-tune on the adaptation pool, evaluate on the full test split.
inline RunResult run_fewshot(AgentKind kind, const Corpus& corpus,
                             const FewShotSpec& spec,
                             const ExperimentConfig& cfg) {
  if (corpus.vocab.n_diseases() < 2)
    throw UsageError("fewshot: need at least 2 diseases");
  if (spec.held_out < 0 || spec.held_out >= corpus.vocab.n_diseases())
    throw UsageError("fewshot: held-out disease index out of range");

  SimConfig sim = cfg.sim;
  sim.noise = spec.noise;
  TrainConfig pretrain_cfg = cfg.train;
  pretrain_cfg.episodes = spec.pretrain_episodes;
  TrainConfig adapt_cfg = cfg.adapt;
  adapt_cfg.episodes = spec.adapt_episodes;
  adapt_cfg.seed = derive_seed(cfg.adapt.seed, 13);

  std::set<int> keep;
  for (int d = 0; d < corpus.vocab.n_diseases(); ++d)
    if (d != spec.held_out) keep.insert(d);
  const Corpus pretrain_corpus = filter_by_diseases(corpus, keep);
  const std::vector<UserGoal> pool =
      sample_adaptation_pool(corpus, spec, cfg.train.seed);
  Corpus adapt_corpus;
  adapt_corpus.vocab = corpus.vocab;
  adapt_corpus.goals = pool;

  RunResult out;
  out.agent.kind = kind;
  for (const auto& g : pool) out.trained_goal_ids.push_back(g.id);

  if (kind == AgentKind::Dqn) {
    auto pre = train_dqn(pretrain_corpus, sim, pretrain_cfg, cfg.encoder);
    auto adapted =
        train_dqn_from(std::move(pre.params), adapt_corpus, sim, adapt_cfg);
    out.agent.dqn = std::move(adapted.params);
    out.agent.log = std::move(pre.log);
    out.agent.log.insert(out.agent.log.end(), adapted.log.begin(),
                         adapted.log.end());
  } else {
    auto pre = train_proto(pretrain_corpus, sim, pretrain_cfg, cfg.proto,
                           cfg.encoder);
    // Adaptation support: pretraining pairs plus the pool's pairs. The new
    // disease's prototype can only come from its few shots.
    Corpus support_corpus;
    support_corpus.vocab = corpus.vocab;
    std::set<std::string> seen;
    for (const auto& g : goals_of_split(pretrain_corpus, Split::Train)) {
      support_corpus.goals.push_back(g);
      seen.insert(g.id);
    }
    for (const auto& g : pool)
      if (!seen.count(g.id)) support_corpus.goals.push_back(g);
    const SupportIndex adapt_index =
        build_support_index(support_corpus, sim.max_turns, cfg.proto.order,
                            cfg.proto.shuffle_seed);
    auto adapted = train_proto_from(std::move(pre.agent), adapt_corpus,
                                    adapt_index, sim, adapt_cfg, cfg.proto);
    out.agent.proto = std::move(adapted.agent);
    out.agent.index = adapt_index;
    out.agent.log = std::move(pre.log);
    out.agent.log.insert(out.agent.log.end(), adapted.log.begin(),
                         adapted.log.end());
  }

  const auto test_goals = goals_of_split(corpus, Split::Test);
  for (const auto& g : test_goals) out.eval_goal_ids.push_back(g.id);
  out.metrics = evaluate_agent(out.agent, test_goals, sim,
                               derive_seed(cfg.train.seed, 99), corpus.vocab);
  return out;
}

struct ResultRow {
  std::string agent;
  std::string protocol;
  double noise = 0.0;
  std::string fold;  // disease index, or "avg" for aggregates
  Metrics metrics;
};

struct ResultsTable {
  std::vector<ResultRow> rows;
};

// Every disease held out once per noise level; one fold-averaged aggregate
// row per noise level. Per-cell seeds derive from (fold, noise index), so
// cells are independent of execution order.
inline ResultsTable run_fewshot_all_folds(AgentKind kind, const Corpus& corpus,
                                          const FewShotSpec& base_spec,
                                          const std::vector<double>& noise_levels,
                                          const ExperimentConfig& cfg) {
  ResultsTable table;
  for (std::size_t ni = 0; ni < noise_levels.size(); ++ni) {
    double rate_sum = 0.0, reward_sum = 0.0, turns_sum = 0.0;
    int episodes_sum = 0;
    const int folds = corpus.vocab.n_diseases();
    for (int fold = 0; fold < folds; ++fold) {
      FewShotSpec spec = base_spec;
      spec.held_out = fold;
      spec.noise = noise_levels[ni];
      ExperimentConfig cell_cfg = cfg;
      const std::uint64_t cell_tag =
          static_cast<std::uint64_t>(fold) * 101 + ni;
      cell_cfg.train.seed = derive_seed(cfg.train.seed, cell_tag);
      cell_cfg.adapt.seed = derive_seed(cfg.adapt.seed, cell_tag);
      const RunResult run = run_fewshot(kind, corpus, spec, cell_cfg);
      table.rows.push_back({agent_name(kind), "fewshot", spec.noise,
                            std::to_string(fold), run.metrics});
      rate_sum += run.metrics.success_rate;
      reward_sum += run.metrics.mean_reward;
      turns_sum += run.metrics.mean_turns;
      episodes_sum += run.metrics.episodes;
    }
    Metrics avg;
    avg.success_rate = rate_sum / folds;
    avg.mean_reward = reward_sum / folds;
    avg.mean_turns = turns_sum / folds;
    avg.episodes = episodes_sum;
    table.rows.push_back(
        {agent_name(kind), "fewshot", noise_levels[ni], "avg", avg});
  }
  return table;
}

// ---------------------------------------------------------------------------
// results.csv
// ---------------------------------------------------------------------------

inline constexpr const char* kCsvHeader =
    "agent,protocol,noise,fold,episodes,success_rate,mean_reward,mean_turns";

inline std::string write_results(const ResultsTable& table) {
  std::string out = kCsvHeader;
  out += "\n";
  char buf[256];
  for (const auto& r : table.rows) {
    std::snprintf(buf, sizeof(buf), "%s,%s,%g,%s,%d,%.6f,%.6f,%.6f",
                  r.agent.c_str(), r.protocol.c_str(), r.noise, r.fold.c_str(),
                  r.metrics.episodes, r.metrics.success_rate,
                  r.metrics.mean_reward, r.metrics.mean_turns);
    out += buf;
    out += "\n";
  }
  return out;
}

inline ResultsTable read_results(std::istream& in) {
  ResultsTable table;
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader)
    throw DataError("results.csv: missing or unexpected header");
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 8)
      throw DataError("results.csv line " + std::to_string(line_no) +
                      ": expected 8 fields");
    ResultRow row;
    row.agent = fields[0];
    row.protocol = fields[1];
    try {
      row.noise = std::stod(fields[2]);
      row.fold = fields[3];
      row.metrics.episodes = std::stoi(fields[4]);
      row.metrics.success_rate = std::stod(fields[5]);
      row.metrics.mean_reward = std::stod(fields[6]);
      row.metrics.mean_turns = std::stod(fields[7]);
    } catch (const std::exception&) {
      throw DataError("results.csv line " + std::to_string(line_no) +
                      ": malformed numeric field");
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace protodiag
