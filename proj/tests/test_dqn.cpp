#include <gtest/gtest.h>

#include <map>

#include "protodiag/dqn.hpp"

using namespace protodiag;

namespace {

// Identity encoder (no hidden layer) with a caller-filled head: q values are
// linear reads of the state vector, which keeps expectations exact.
DqnParams make_linear_dqn(int dim, int actions) {
  EncoderConfig cfg{.input_dim = dim, .hidden_dims = {}, .output_dim = dim};
  DqnParams p;
  p.encoder = init_params(cfg, 0);
  auto& layer = p.encoder.layers[0];
  for (auto& v : layer.w) v = 0.0;
  for (int i = 0; i < dim; ++i)
    layer.w[static_cast<std::size_t>(i * dim + i)] = 1.0;
  p.head = init_head(actions, dim, 0);
  for (auto& v : p.head.w) v = 0.0;
  for (auto& v : p.head.b) v = 0.0;
  return p;
}

void set_head_row(DqnParams& p, int action, const std::vector<double>& row) {
  for (int i = 0; i < p.head.dim; ++i)
    p.head.w[static_cast<std::size_t>(action * p.head.dim + i)] =
        row[static_cast<std::size_t>(i)];
}

}  // namespace

TEST(QValues, ZeroParamsGiveZeroQ) {
  DqnParams p = make_linear_dqn(3, 4);
  for (auto& v : p.encoder.layers[0].w) v = 0.0;
  const auto q = q_values(p, {1.0, 2.0, 3.0});
  ASSERT_EQ(q.size(), 4u);
  for (double v : q) EXPECT_EQ(v, 0.0);
}

TEST(QValues, UnitHeadRowReadsCoordinate) {
  DqnParams p = make_linear_dqn(3, 2);
  set_head_row(p, 1, {0.0, 1.0, 0.0});
  const auto q = q_values(p, {5.0, -7.5, 2.0});
  EXPECT_EQ(q[1], -7.5);
  EXPECT_EQ(q[0], 0.0);
}

TEST(QValues, MatchesIndependentOracle) {
  Rng rng = make_rng(3);
  EncoderConfig cfg{.input_dim = 6, .hidden_dims = {5}, .output_dim = 4};
  DqnParams p;
  p.encoder = init_params(cfg, 1);
  p.head = init_head(3, 4, 2);
  std::normal_distribution<double> dist;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> s(6);
    for (auto& v : s) v = dist(rng);
    // oracle: explicit loops over the same math
    std::vector<double> h(5, 0.0);
    for (int o = 0; o < 5; ++o) {
      for (int i = 0; i < 6; ++i)
        h[static_cast<std::size_t>(o)] +=
            p.encoder.layers[0].w[static_cast<std::size_t>(o * 6 + i)] *
            s[static_cast<std::size_t>(i)];
      h[static_cast<std::size_t>(o)] = std::max(0.0, h[static_cast<std::size_t>(o)]);
    }
    std::vector<double> e(4, 0.0);
    for (int o = 0; o < 4; ++o)
      for (int i = 0; i < 5; ++i)
        e[static_cast<std::size_t>(o)] +=
            p.encoder.layers[1].w[static_cast<std::size_t>(o * 5 + i)] *
            h[static_cast<std::size_t>(i)];
    std::vector<double> want(3, 0.0);
    for (int a = 0; a < 3; ++a) {
      want[static_cast<std::size_t>(a)] = p.head.b[static_cast<std::size_t>(a)];
      for (int i = 0; i < 4; ++i)
        want[static_cast<std::size_t>(a)] +=
            p.head.w[static_cast<std::size_t>(a * 4 + i)] *
            e[static_cast<std::size_t>(i)];
    }
    const auto got = q_values(p, s);
    for (int a = 0; a < 3; ++a)
      EXPECT_NEAR(got[static_cast<std::size_t>(a)],
                  want[static_cast<std::size_t>(a)], 1e-12);
  }
}

TEST(SelectAction, GreedyPicksArgmax) {
  Rng rng = make_rng(0);
  EXPECT_EQ(select_action({1, 5, 3}, {1, 1, 1}, 0.0, rng), 1);
}

TEST(SelectAction, MaskedActionsSkipped) {
  Rng rng = make_rng(0);
  EXPECT_EQ(select_action({1, 5, 3}, {1, 0, 1}, 0.0, rng), 2);
  EXPECT_THROW(select_action({1, 5, 3}, {0, 0, 0}, 0.0, rng), RuntimeError);
}

TEST(SelectAction, FullExplorationIsUniform) {
  Rng rng = make_rng(123);
  std::map<int, int> counts;
  const int n = 30000;
  for (int i = 0; i < n; ++i)
    ++counts[select_action({9, 1, 1, 1, 1}, {1, 1, 1, 1, 0}, 1.0, rng)];
  EXPECT_EQ(counts[4], 0);
  for (int a = 0; a < 4; ++a)
    EXPECT_NEAR(static_cast<double>(counts[a]) / n, 0.25, 0.02);
}

TEST(TdLoss, TerminalSquaredError) {
  DqnParams p = make_linear_dqn(2, 2);
  set_head_row(p, 0, {1.0, 0.0});
  Transition t{{18.0, 0.0}, 0, 20.0, {}, true};
  const ActionSpace space{1, 1};
  const DqnLoss l = td_loss({t}, p, p, 0.9, space);
  EXPECT_DOUBLE_EQ(l.loss, 4.0);
}

TEST(TdLoss, ExactPredictionHasZeroLossAndGrad) {
  DqnParams p = make_linear_dqn(2, 2);
  set_head_row(p, 0, {1.0, 0.0});
  Transition t{{20.0, 0.0}, 0, 20.0, {}, true};
  const DqnLoss l = td_loss({t}, p, p, 0.9, {1, 1});
  EXPECT_DOUBLE_EQ(l.loss, 0.0);
  for (const auto& layer : l.encoder.layers)
    for (double v : layer.w) EXPECT_EQ(v, 0.0);
  for (double v : l.head_w) EXPECT_EQ(v, 0.0);
}

TEST(TdLoss, BootstrapsFromMaskedMax) {
  DqnParams p = make_linear_dqn(2, 2);
  set_head_row(p, 0, {1.0, 0.0});
  set_head_row(p, 1, {0.0, 1.0});
  // q(s, 0) = 5; successor q = [10, 0], symptom slot 0 -> legal.
  Transition t{{5.0, 0.0}, 0, 0.0, {10.0, 0.0}, false};
  const DqnLoss l = td_loss({t}, p, p, 0.9, {1, 1});
  EXPECT_DOUBLE_EQ(l.loss, 16.0);  // (0.9*10 - 5)^2

  // Mask the symptom action in the successor: slot code != 0.
  Transition masked{{5.0, 0.0}, 0, 0.0, {10.0, 1.0}, false};
  const DqnLoss l2 = td_loss({masked}, p, p, 0.9, {1, 1});
  // max over legal = q[1] = slot value 1.0 -> target 0.9.
  EXPECT_DOUBLE_EQ(l2.loss, (5.0 - 0.9) * (5.0 - 0.9));
}

TEST(ReplayBuffer, FifoEviction) {
  ReplayBuffer buffer(5);
  for (int i = 0; i < 8; ++i)
    buffer.push({{}, i, 0.0, {}, true});
  EXPECT_EQ(buffer.size(), 5u);
  for (const auto& t : buffer.data()) EXPECT_GE(t.a, 3);
  EXPECT_EQ(buffer.data().front().a, 3);
  EXPECT_EQ(buffer.data().back().a, 7);
}

TEST(EpsSchedule, LinearDecayHitsEndExactly) {
  const EpsSchedule s{1.0, 0.1, 2000};
  EXPECT_EQ(s.at(0), 1.0);
  EXPECT_EQ(s.at(2000), 0.1);
  EXPECT_EQ(s.at(5000), 0.1);
  double prev = s.at(0);
  for (int t = 1; t <= 2100; t += 7) {
    const double cur = s.at(t);
    EXPECT_LE(cur, prev);
    prev = cur;
  }
  EXPECT_NEAR(s.at(1000), 0.55, 1e-12);
}

TEST(ActGreedy, TieBreaksToLowestIndex) {
  Vocabulary vocab{{"s0", "s1"}, {"d0"}};
  DqnParams p = make_linear_dqn(state_vector_length(2, 4), 3);
  for (auto& v : p.head.w) v = 0.0;
  DialogState state = initial_state({{1, Finding::Present}}, 2);
  // all-zero q: lowest legal index wins; slot 1 is taken, so s0 it is.
  EXPECT_EQ(act_greedy(p, state, vocab, 4), AgentAction::request(0));
  state = apply_turn(state, AgentAction::request(0), UserActionKind::Deny);
  // both symptoms now masked -> the inform is the only action left.
  EXPECT_EQ(act_greedy(p, state, vocab, 4), AgentAction::inform(0));
}

TEST(ActGreedy, MatchesSelectActionAtZeroEps) {
  Rng rng = make_rng(77);
  std::normal_distribution<double> dist;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> q(6);
    for (auto& v : q) v = dist(rng);
    std::vector<char> mask(6, 0);
    while (std::none_of(mask.begin(), mask.end(), [](char c) { return c; }))
      for (auto& m : mask) m = uniform_unit(rng) < 0.5 ? 1 : 0;
    Rng throwaway = make_rng(trial);
    EXPECT_EQ(greedy_action(q, mask), select_action(q, mask, 0.0, throwaway));
  }
}

TEST(TrainDqn, ZeroEpisodesReturnsInitParams) {
  const Corpus corpus = generate_synthetic(SynthSpec{});
  SimConfig sim;
  sim.max_turns = 10;
  TrainConfig cfg;
  cfg.episodes = 0;
  cfg.seed = 5;
  EncoderConfig enc{.input_dim = 0, .hidden_dims = {8}, .output_dim = 4};
  const auto result = train_dqn(corpus, sim, cfg, enc);
  EXPECT_TRUE(result.log.empty());
  enc.input_dim = state_vector_length(corpus.vocab.n_symptoms(), sim.max_turns);
  EXPECT_EQ(result.params, init_dqn(enc, action_count(corpus.vocab), cfg.seed));
}

TEST(TrainDqn, DeterministicUnderFixedSeed) {
  const Corpus corpus = generate_synthetic(SynthSpec{});
  SimConfig sim;
  sim.max_turns = 10;
  sim.noise = 0.1;
  TrainConfig cfg;
  cfg.episodes = 40;
  cfg.batch_size = 8;
  cfg.seed = 17;
  const EncoderConfig enc{.input_dim = 0, .hidden_dims = {8}, .output_dim = 4};
  const auto a = train_dqn(corpus, sim, cfg, enc);
  const auto b = train_dqn(corpus, sim, cfg, enc);
  EXPECT_EQ(serialize_log(a.log), serialize_log(b.log));
  EXPECT_EQ(a.params, b.params);
  TrainConfig other = cfg;
  other.seed = 18;
  EXPECT_NE(serialize_log(train_dqn(corpus, sim, other, enc).log),
            serialize_log(a.log));
}

// Single disease, tiny state space: the greedy policy must become reliable
// within a few hundred episodes.
TEST(TrainDqn, SolvesSingleDiseaseCorpus) {
  SynthSpec spec;
  spec.n_diseases = 1;
  spec.n_symptoms = 3;
  spec.signature_size = 1;
  spec.implicit_present_per_goal = 0;
  spec.implicit_absent_per_goal = 1;
  spec.seed = 2;
  const Corpus corpus = generate_synthetic(spec);
  SimConfig sim;
  sim.max_turns = 6;
  TrainConfig cfg;
  cfg.episodes = 500;
  cfg.batch_size = 16;
  cfg.eps = {1.0, 0.05, 800};
  cfg.opt.learning_rate = 0.01;
  cfg.seed = 3;
  const EncoderConfig enc{.input_dim = 0, .hidden_dims = {16}, .output_dim = 8};
  const auto result = train_dqn(corpus, sim, cfg, enc);
  int successes = 0, evals = 0;
  for (std::size_t i : corpus.split_indices(Split::Test)) {
    Episode e = reset(corpus.goals[i], corpus.vocab.n_symptoms(), 1);
    while (!e.finished)
      step(e, act_greedy(result.params, e.state, corpus.vocab, sim.max_turns),
           sim);
    successes += e.outcome == Outcome::Success ? 1 : 0;
    ++evals;
  }
  EXPECT_GE(static_cast<double>(successes) / evals, 0.95);
}
