#include <gtest/gtest.h>

#include <algorithm>
#include <set>
#include <sstream>

#include "protodiag/experiments.hpp"

using namespace protodiag;

namespace {

SynthSpec small_spec() {
  SynthSpec spec;
  spec.n_diseases = 4;
  spec.n_symptoms = 12;
  spec.signature_size = 3;
  spec.goals_per_disease_train = 8;
  spec.goals_per_disease_test = 3;
  spec.implicit_present_per_goal = 1;
  spec.seed = 9;
  return spec;
}

ExperimentConfig tiny_config(int episodes) {
  ExperimentConfig cfg;
  cfg.sim.max_turns = 6;
  cfg.train.episodes = episodes;
  cfg.train.batch_size = 8;
  cfg.train.seed = 21;
  cfg.train.eps.decay_steps = 200;
  cfg.adapt = cfg.train;
  cfg.encoder.hidden_dims = {8};
  cfg.encoder.output_dim = 4;
  return cfg;
}

void expect_metrics_eq(const Metrics& a, const Metrics& b) {
  EXPECT_EQ(a.episodes, b.episodes);
  EXPECT_EQ(a.success_rate, b.success_rate);
  EXPECT_EQ(a.mean_reward, b.mean_reward);
  EXPECT_EQ(a.mean_turns, b.mean_turns);
  EXPECT_EQ(a.outcome_counts, b.outcome_counts);
}

}  // namespace

TEST(EvaluatePolicy, AllSuccessPolicy) {
  SynthSpec spec = small_spec();
  spec.n_diseases = 1;
  spec.n_symptoms = 4;
  const Corpus c = generate_synthetic(spec);
  const SimConfig sim{.noise = 0.0, .max_turns = 6};
  const Metrics m = evaluate_policy(
      [](const DialogState&) { return AgentAction::inform(0); },
      goals_of_split(c, Split::Test), sim, 1, c.vocab);
  EXPECT_EQ(m.success_rate, 100.0);
  EXPECT_EQ(m.mean_reward, 20.0);
  EXPECT_EQ(m.mean_turns, 0.0);
  EXPECT_EQ(m.outcome_counts.at(Outcome::Success), m.episodes);
}

TEST(EvaluatePolicy, OutcomeCountsSumToEpisodes) {
  const Corpus c = generate_synthetic(small_spec());
  const SimConfig sim{.noise = 0.2, .max_turns = 6};
  Rng policy_rng = make_rng(2);
  // arbitrary deterministic-by-state policy: inform based on first open slot
  const Metrics m = evaluate_policy(
      [&](const DialogState& s) {
        for (std::size_t k = 0; k < s.slots.size(); ++k)
          if (s.slots[k] == SlotStatus::NotInquired && s.turn < 2)
            return AgentAction::request(static_cast<int>(k));
        return AgentAction::inform(s.turn % 4);
      },
      goals_of_split(c, Split::Test), sim, 3, c.vocab);
  int total = 0;
  for (const auto& [o, n] : m.outcome_counts) total += n;
  EXPECT_EQ(total, m.episodes);
  EXPECT_EQ(m.episodes, 12);
}

TEST(EvaluatePolicy, GoalOrderIrrelevant) {
  const Corpus c = generate_synthetic(small_spec());
  const SimConfig sim{.noise = 0.3, .max_turns = 6};
  auto policy = [](const DialogState& s) {
    for (std::size_t k = 0; k < s.slots.size(); ++k)
      if (s.slots[k] == SlotStatus::NotInquired && s.turn < 3)
        return AgentAction::request(static_cast<int>(k));
    return AgentAction::inform(0);
  };
  std::vector<UserGoal> goals = goals_of_split(c, Split::Test);
  const Metrics a = evaluate_policy(policy, goals, sim, 7, c.vocab);
  std::reverse(goals.begin(), goals.end());
  const Metrics b = evaluate_policy(policy, goals, sim, 7, c.vocab);
  expect_metrics_eq(a, b);
}

TEST(RunSupervised, UntrainedSmokeRun) {
  const Corpus c = generate_synthetic(small_spec());
  const ExperimentConfig cfg = tiny_config(0);
  for (AgentKind kind : {AgentKind::Dqn, AgentKind::Proto}) {
    const RunResult r = run_supervised(kind, c, cfg);
    EXPECT_EQ(r.metrics.episodes, 12);
    EXPECT_GE(r.metrics.success_rate, 0.0);
    EXPECT_LE(r.metrics.success_rate, 100.0);
    EXPECT_TRUE(r.agent.log.empty());
  }
}

TEST(RunSupervised, TrainAndEvalSplitsDisjoint) {
  const Corpus c = generate_synthetic(small_spec());
  const RunResult r = run_supervised(AgentKind::Dqn, c, tiny_config(10));
  EXPECT_EQ(r.trained_goal_ids.size(), 32u);
  EXPECT_EQ(r.eval_goal_ids.size(), 12u);
  std::set<std::string> trained(r.trained_goal_ids.begin(),
                                r.trained_goal_ids.end());
  for (const auto& id : r.eval_goal_ids) EXPECT_FALSE(trained.count(id));
}

TEST(SampleAdaptationPool, ExactlyShotsPerDiseaseFromTrainSplit) {
  const Corpus c = generate_synthetic(small_spec());
  FewShotSpec spec;
  spec.shots_n = 5;
  const auto pool = sample_adaptation_pool(c, spec, 77);
  EXPECT_EQ(pool.size(), 20u);  // 5 + 3*5
  std::map<int, int> per_disease;
  std::set<std::string> ids;
  for (const auto& g : pool) {
    ++per_disease[g.disease];
    EXPECT_EQ(g.split, Split::Train);
    EXPECT_TRUE(ids.insert(g.id).second);
  }
  for (int d = 0; d < 4; ++d) EXPECT_EQ(per_disease[d], 5);
}

TEST(RunFewshot, InsufficientShotsRejected) {
  Corpus c = generate_synthetic(small_spec());
  // strip disease 2's train goals
  std::erase_if(c.goals, [](const UserGoal& g) {
    return g.disease == 2 && g.split == Split::Train;
  });
  FewShotSpec spec;
  spec.held_out = 2;
  spec.shots_n = 5;
  spec.pretrain_episodes = 5;
  spec.adapt_episodes = 5;
  try {
    run_fewshot(AgentKind::Dqn, c, spec, tiny_config(5));
    FAIL() << "expected UsageError";
  } catch (const UsageError& e) {
    EXPECT_NE(std::string(e.what()).find(c.vocab.diseases[2]),
              std::string::npos);
  }
}

TEST(RunFewshot, EvaluatesFullTestSplitOnly) {
  const Corpus c = generate_synthetic(small_spec());
  FewShotSpec spec;
  spec.held_out = 1;
  spec.shots_n = 3;
  spec.pretrain_episodes = 15;
  spec.adapt_episodes = 5;
  for (AgentKind kind : {AgentKind::Dqn, AgentKind::Proto}) {
    const RunResult r = run_fewshot(kind, c, spec, tiny_config(5));
    EXPECT_EQ(r.metrics.episodes, 12);  // all diseases' test goals
    EXPECT_EQ(r.trained_goal_ids.size(), 12u);  // 4 diseases x 3 shots
    std::set<std::string> trained(r.trained_goal_ids.begin(),
                                  r.trained_goal_ids.end());
    for (const auto& id : r.eval_goal_ids) EXPECT_FALSE(trained.count(id));
  }
}

TEST(RunFewshotAllFolds, CellAndAggregateLayout) {
  const Corpus c = generate_synthetic(small_spec());
  FewShotSpec spec;
  spec.shots_n = 2;
  spec.pretrain_episodes = 8;
  spec.adapt_episodes = 4;
  const std::vector<double> noise_levels{0.0, 0.1, 0.2, 0.3};
  const ResultsTable table = run_fewshot_all_folds(
      AgentKind::Dqn, c, spec, noise_levels, tiny_config(8));
  ASSERT_EQ(table.rows.size(), 20u);  // (4 folds + 1 avg) x 4 noises
  for (std::size_t ni = 0; ni < 4; ++ni) {
    std::set<std::string> folds;
    double rate_sum = 0.0;
    for (std::size_t f = 0; f < 4; ++f) {
      const ResultRow& row = table.rows[ni * 5 + f];
      EXPECT_EQ(row.noise, noise_levels[ni]);
      EXPECT_EQ(row.protocol, "fewshot");
      folds.insert(row.fold);
      rate_sum += row.metrics.success_rate;
    }
    EXPECT_EQ(folds.size(), 4u);  // every disease held out exactly once
    const ResultRow& avg = table.rows[ni * 5 + 4];
    EXPECT_EQ(avg.fold, "avg");
    EXPECT_NEAR(avg.metrics.success_rate, rate_sum / 4.0, 1e-12);
  }
}

TEST(WriteResults, EmptyTableIsHeaderOnly) {
  EXPECT_EQ(write_results(ResultsTable{}), std::string(kCsvHeader) + "\n");
}

TEST(WriteResults, OneRowIsTwoLines) {
  ResultsTable table;
  Metrics m;
  m.episodes = 10;
  m.success_rate = 70.0;
  m.mean_reward = 14.0;
  m.mean_turns = 2.5;
  table.rows.push_back({"dqn", "eval", 0.1, "all", m});
  const std::string csv = write_results(table);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2);
  EXPECT_NE(csv.find("dqn,eval,0.1,all,10,70.000000,14.000000,2.500000"),
            std::string::npos);
}

TEST(WriteResults, ParseBackRoundTrip) {
  const Corpus c = generate_synthetic(small_spec());
  FewShotSpec spec;
  spec.shots_n = 2;
  spec.pretrain_episodes = 6;
  spec.adapt_episodes = 3;
  const ResultsTable table = run_fewshot_all_folds(AgentKind::Proto, c, spec,
                                                   {0.0, 0.2}, tiny_config(6));
  const std::string csv = write_results(table);
  std::istringstream in(csv);
  const ResultsTable parsed = read_results(in);
  ASSERT_EQ(parsed.rows.size(), table.rows.size());
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    EXPECT_EQ(parsed.rows[i].agent, table.rows[i].agent);
    EXPECT_EQ(parsed.rows[i].protocol, table.rows[i].protocol);
    EXPECT_EQ(parsed.rows[i].noise, table.rows[i].noise);
    EXPECT_EQ(parsed.rows[i].fold, table.rows[i].fold);
    EXPECT_EQ(parsed.rows[i].metrics.episodes, table.rows[i].metrics.episodes);
    EXPECT_NEAR(parsed.rows[i].metrics.success_rate,
                table.rows[i].metrics.success_rate, 1e-6);
    EXPECT_NEAR(parsed.rows[i].metrics.mean_reward,
                table.rows[i].metrics.mean_reward, 1e-6);
    EXPECT_NEAR(parsed.rows[i].metrics.mean_turns,
                table.rows[i].metrics.mean_turns, 1e-6);
  }
}

TEST(Metrics, IdentitiesUnderRewardScheme) {
  const Corpus c = generate_synthetic(small_spec());
  const RunResult r = run_supervised(AgentKind::Dqn, c, tiny_config(20));
  const Metrics& m = r.metrics;
  const auto it = m.outcome_counts.find(Outcome::Success);
  const int successes = it == m.outcome_counts.end() ? 0 : it->second;
  EXPECT_NEAR(m.success_rate * m.episodes / 100.0, successes, 1e-9);
  EXPECT_NEAR(m.mean_reward, 20.0 * successes / m.episodes, 1e-9);
}

TEST(Determinism, IdenticalConfigGivesIdenticalTables) {
  const Corpus c = generate_synthetic(small_spec());
  FewShotSpec spec;
  spec.shots_n = 2;
  spec.pretrain_episodes = 6;
  spec.adapt_episodes = 3;
  const auto a = run_fewshot_all_folds(AgentKind::Dqn, c, spec, {0.0, 0.3},
                                       tiny_config(6));
  const auto b = run_fewshot_all_folds(AgentKind::Dqn, c, spec, {0.0, 0.3},
                                       tiny_config(6));
  EXPECT_EQ(write_results(a), write_results(b));
}
