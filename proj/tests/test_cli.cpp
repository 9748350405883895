#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "protodiag/checkpoint.hpp"
#include "protodiag/experiments.hpp"

using namespace protodiag;
namespace fs = std::filesystem;

namespace {

struct CmdResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("protodiag_cli_" + std::string(::testing::UnitTest::GetInstance()
                                               ->current_test_info()
                                               ->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }

  CmdResult run(const std::string& args, const std::string& stdin_text = "") {
    const fs::path out = dir_ / "stdout.txt";
    const fs::path err = dir_ / "stderr.txt";
    const fs::path in = dir_ / "stdin.txt";
    {
      std::ofstream f(in, std::ios::binary);
      f << stdin_text;
    }
    const std::string cmd = std::string(PROTODIAG_BIN) + " " + args + " < " +
                            in.string() + " > " + out.string() + " 2> " +
                            err.string();
    const int ret = std::system(cmd.c_str());
    CmdResult res;
    res.exit_code = WIFEXITED(ret) ? WEXITSTATUS(ret) : -1;
    res.out = slurp(out);
    res.err = slurp(err);
    return res;
  }

  std::string gen_corpus(const std::string& name, const std::string& extra = "") {
    const fs::path corpus = dir_ / name;
    const CmdResult r = run(
        "gen-data --diseases 4 --symptoms 12 --signature-size 3 "
        "--train-per-disease 8 --test-per-disease 3 --seed 5 " +
        extra + " --out " + corpus.string());
    EXPECT_EQ(r.exit_code, 0) << r.err;
    return corpus.string();
  }

  fs::path dir_;
};

}  // namespace

TEST_F(CliTest, GenDataWritesDeterministicFiles) {
  const CmdResult r1 =
      run("gen-data --diseases 4 --symptoms 20 --seed 7 --out " +
          (dir_ / "a").string());
  ASSERT_EQ(r1.exit_code, 0) << r1.err;
  EXPECT_NE(r1.out.find("160 goals"), std::string::npos);
  const std::string vocab1 = slurp(dir_ / "a" / "vocab.json");
  const std::string goals1 = slurp(dir_ / "a" / "goals.jsonl");
  ASSERT_FALSE(vocab1.empty());
  ASSERT_FALSE(goals1.empty());

  const CmdResult r2 =
      run("gen-data --diseases 4 --symptoms 20 --seed 7 --out " +
          (dir_ / "b").string());
  ASSERT_EQ(r2.exit_code, 0);
  EXPECT_EQ(slurp(dir_ / "b" / "vocab.json"), vocab1);
  EXPECT_EQ(slurp(dir_ / "b" / "goals.jsonl"), goals1);
}

TEST_F(CliTest, GenDataInfeasibleSpecFails) {
  const CmdResult r = run("gen-data --signature-size 30 --symptoms 20 --out " +
                          (dir_ / "x").string());
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_NE(r.err.find("error(usage):"), std::string::npos);
}

TEST_F(CliTest, TrainMissingCorpusFails) {
  const CmdResult r = run("train --agent dqn --corpus " +
                          (dir_ / "nowhere").string() + " --out " +
                          (dir_ / "o").string());
  EXPECT_EQ(r.exit_code, 3);
  EXPECT_NE(r.err.find("error(data):"), std::string::npos);
}

TEST_F(CliTest, TrainIsDeterministicAndEvaluable) {
  const std::string corpus = gen_corpus("corpus");
  const std::string common =
      "train --agent proto --corpus " + corpus +
      " --episodes 30 --noise 0.1 --seed 42 --out ";
  const CmdResult r1 = run(common + (dir_ / "r1").string());
  ASSERT_EQ(r1.exit_code, 0) << r1.err;
  EXPECT_NE(r1.out.find("success_rate="), std::string::npos);
  const CmdResult r2 = run(common + (dir_ / "r2").string());
  ASSERT_EQ(r2.exit_code, 0);
  for (const char* f :
       {"train_log.jsonl", "checkpoint.json", "results.csv", "run_meta.json"}) {
    EXPECT_EQ(slurp(dir_ / "r1" / f), slurp(dir_ / "r2" / f)) << f;
    EXPECT_FALSE(slurp(dir_ / "r1" / f).empty()) << f;
  }
}

TEST_F(CliTest, EvalChecksAndReproduces) {
  const std::string corpus = gen_corpus("corpus");
  ASSERT_EQ(run("train --agent dqn --corpus " + corpus +
                " --episodes 20 --seed 1 --out " + (dir_ / "t").string())
                .exit_code,
            0);
  const std::string eval_cmd =
      "eval --checkpoint " + (dir_ / "t" / "checkpoint.json").string() +
      " --corpus " + corpus + " --seed 3 --out ";
  const CmdResult e1 = run(eval_cmd + (dir_ / "e1").string());
  ASSERT_EQ(e1.exit_code, 0) << e1.err;
  EXPECT_NE(e1.out.find("success_rate="), std::string::npos);
  const CmdResult e2 = run(eval_cmd + (dir_ / "e2").string());
  ASSERT_EQ(e2.exit_code, 0);
  EXPECT_EQ(slurp(dir_ / "e1" / "results.csv"), slurp(dir_ / "e2" / "results.csv"));

  // Tamper with a weight shape: the loader must refuse it.
  std::string cp = slurp(dir_ / "t" / "checkpoint.json");
  const auto pos = cp.find("\"actions\"");
  ASSERT_NE(pos, std::string::npos);
  cp.replace(pos, 9, "\"actionz\"");
  std::ofstream(dir_ / "t" / "bad.json", std::ios::binary) << cp;
  const CmdResult bad = run("eval --checkpoint " +
                            (dir_ / "t" / "bad.json").string() + " --corpus " +
                            corpus + " --out " + (dir_ / "e3").string());
  EXPECT_EQ(bad.exit_code, 3);
  EXPECT_NE(bad.err.find("error(data):"), std::string::npos);
}

TEST_F(CliTest, EvalRejectsMismatchedCorpusForProto) {
  const std::string corpus = gen_corpus("corpus");
  ASSERT_EQ(run("train --agent proto --corpus " + corpus +
                " --episodes 10 --seed 1 --out " + (dir_ / "t").string())
                .exit_code,
            0);
  const std::string other = gen_corpus("other", "--implicit-absent 0");
  const CmdResult r = run("eval --checkpoint " +
                          (dir_ / "t" / "checkpoint.json").string() +
                          " --corpus " + other + " --out " +
                          (dir_ / "e").string());
  EXPECT_EQ(r.exit_code, 3);
  EXPECT_NE(r.err.find("fingerprint"), std::string::npos);
}

TEST_F(CliTest, FewshotZeroShotsIsUsageError) {
  const std::string corpus = gen_corpus("corpus");
  const CmdResult r = run("fewshot --agent dqn --corpus " + corpus +
                          " --shots 0 --out " + (dir_ / "f").string());
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_NE(r.err.find("error(usage):"), std::string::npos);
}

TEST_F(CliTest, FewshotEmitsFoldTableWithAggregates) {
  const std::string corpus = gen_corpus("corpus");
  const CmdResult r = run("fewshot --agent dqn --corpus " + corpus +
                          " --shots 2 --pretrain-episodes 8 "
                          "--adapt-episodes 4 --noise-levels 0,0.2 --seed 2 "
                          "--out " +
                          (dir_ / "f").string());
  ASSERT_EQ(r.exit_code, 0) << r.err;
  std::istringstream csv(slurp(dir_ / "f" / "results.csv"));
  const ResultsTable table = read_results(csv);
  ASSERT_EQ(table.rows.size(), 10u);  // (4 folds + avg) x 2 noises
  for (int ni = 0; ni < 2; ++ni) {
    double sum = 0.0;
    for (int f = 0; f < 4; ++f) sum += table.rows[static_cast<std::size_t>(ni * 5 + f)].metrics.success_rate;
    const ResultRow& avg = table.rows[static_cast<std::size_t>(ni * 5 + 4)];
    EXPECT_EQ(avg.fold, "avg");
    EXPECT_NEAR(avg.metrics.success_rate, sum / 4.0, 1e-5);
  }
}

TEST_F(CliTest, HelpExitsZeroForEverySubcommand) {
  EXPECT_EQ(run("--help").exit_code, 0);
  for (const char* sub :
       {"gen-data", "convert-muzhi", "train", "eval", "fewshot", "chat"}) {
    const CmdResult r = run(std::string(sub) + " --help");
    EXPECT_EQ(r.exit_code, 0) << sub;
    EXPECT_NE(r.out.find("--"), std::string::npos) << sub;
  }
}

TEST_F(CliTest, ConvertMuzhiProducesLoadableCorpus) {
  const std::string goal_set = R"({
    "train": [{"consult_id": "c1", "disease_tag": "flu",
               "goal": {"explicit_inform_slots": {"cough": true},
                        "implicit_inform_slots": {"fever": true}}},
              {"consult_id": "c2", "disease_tag": "cold",
               "goal": {"explicit_inform_slots": {"sneeze": true},
                        "implicit_inform_slots": {"cough": false}}}],
    "test": [{"consult_id": "c3", "disease_tag": "flu",
              "goal": {"explicit_inform_slots": {"fever": true},
                       "implicit_inform_slots": {}}}]
  })";
  std::ofstream(dir_ / "muzhi.json", std::ios::binary) << goal_set;
  const CmdResult r = run("convert-muzhi --input " +
                          (dir_ / "muzhi.json").string() + " --out " +
                          (dir_ / "m").string());
  ASSERT_EQ(r.exit_code, 0) << r.err;
  std::ifstream vocab(dir_ / "m" / "vocab.json"), goals(dir_ / "m" / "goals.jsonl");
  const Corpus c = load_corpus(vocab, goals);
  EXPECT_EQ(c.goals.size(), 3u);
  EXPECT_TRUE(validate_corpus(c).ok());
}

// Scripted chat session must retrace the greedy rollout the simulator
// produces for the same goal at noise 0.
TEST_F(CliTest, ChatReproducesSimulatorTrajectory) {
  const std::string corpus_dir = gen_corpus("corpus");
  ASSERT_EQ(run("train --agent dqn --corpus " + corpus_dir +
                " --episodes 120 --seed 9 --out " + (dir_ / "t").string())
                .exit_code,
            0);

  std::ifstream vin(fs::path(corpus_dir) / "vocab.json"),
      gin(fs::path(corpus_dir) / "goals.jsonl");
  const Corpus corpus = load_corpus(vin, gin);
  std::ifstream cin_(dir_ / "t" / "checkpoint.json");
  const Checkpoint cp = load_checkpoint(cin_);
  ASSERT_EQ(cp.kind, AgentKind::Dqn);

  const UserGoal& goal = corpus.goals[corpus.split_indices(Split::Test)[0]];
  // Reference rollout: greedy policy against the noise-free simulator.
  SimConfig sim;
  sim.max_turns = cp.max_turns;
  Episode episode = reset(goal, corpus.vocab.n_symptoms(), 1);
  std::vector<int> asked;
  std::vector<UserActionKind> replies;
  int informed = -1;
  while (!episode.finished) {
    const AgentAction a =
        act_greedy(cp.dqn, episode.state, corpus.vocab, sim.max_turns);
    if (a.kind == AgentActionKind::InformDisease) informed = a.index;
    const StepResult res = step(episode, a, sim);
    if (a.kind == AgentActionKind::RequestSymptom) {
      asked.push_back(a.index);
      replies.push_back(*res.user_action);
    }
  }
  ASSERT_GE(informed, 0);

  // Scripted patient: same self-report, annotation-true answers.
  std::string stdin_text;
  for (std::size_t i = 0; i < goal.explicit_findings.size(); ++i) {
    if (i) stdin_text += ",";
    stdin_text += corpus.vocab.symptoms[static_cast<std::size_t>(
        goal.explicit_findings[i].symptom)];
  }
  stdin_text += "\n";
  for (const UserActionKind r : replies) {
    if (r == UserActionKind::Confirm) stdin_text += "y\n";
    if (r == UserActionKind::Deny) stdin_text += "n\n";
    if (r == UserActionKind::NotSure) stdin_text += "u\n";
  }
  const CmdResult chat = run(
      "chat --checkpoint " + (dir_ / "t" / "checkpoint.json").string() +
          " --vocab " + (fs::path(corpus_dir) / "vocab.json").string(),
      stdin_text);
  ASSERT_EQ(chat.exit_code, 0) << chat.err;
  const std::string expected =
      "diagnosis: " +
      corpus.vocab.diseases[static_cast<std::size_t>(informed)] + " (after " +
      std::to_string(asked.size()) + " turns)";
  EXPECT_NE(chat.out.find(expected), std::string::npos) << chat.out;
}

TEST_F(CliTest, ChatRepromptsOnEmptyAndSuggestsNearMatches) {
  const std::string corpus_dir = gen_corpus("corpus");
  ASSERT_EQ(run("train --agent dqn --corpus " + corpus_dir +
                " --episodes 5 --seed 1 --out " + (dir_ / "t").string())
                .exit_code,
            0);
  // empty line, misspelled symptom, then a valid one; 'u' answers until done.
  std::string stdin_text = "\nsymptom_0x\nsymptom_00\n";
  for (int i = 0; i < 50; ++i) stdin_text += "u\n";
  const CmdResult chat = run(
      "chat --checkpoint " + (dir_ / "t" / "checkpoint.json").string() +
          " --vocab " + (fs::path(corpus_dir) / "vocab.json").string(),
      stdin_text);
  ASSERT_EQ(chat.exit_code, 0) << chat.err;
  EXPECT_NE(chat.out.find("please name at least one symptom"),
            std::string::npos);
  EXPECT_NE(chat.out.find("unknown symptom 'symptom_0x'"), std::string::npos);
  EXPECT_NE(chat.out.find("closest matches:"), std::string::npos);
  EXPECT_NE(chat.out.find("symptom_00"), std::string::npos);
}

TEST_F(CliTest, ConfigFileWithUnknownKeyRejected) {
  const std::string corpus = gen_corpus("corpus");
  std::ofstream(dir_ / "cfg.json", std::ios::binary)
      << R"({"train": {"episodes": 5}, "typo_key": 1})";
  const CmdResult r = run("train --agent dqn --corpus " + corpus +
                          " --config " + (dir_ / "cfg.json").string() +
                          " --out " + (dir_ / "o").string());
  EXPECT_EQ(r.exit_code, 3);
  EXPECT_NE(r.err.find("typo_key"), std::string::npos);
}

TEST_F(CliTest, ConfigFileDrivesTrainingAndFlagsWin) {
  const std::string corpus = gen_corpus("corpus");
  std::ofstream(dir_ / "cfg.json", std::ios::binary)
      << R"({"train": {"episodes": 4}, "seed": 11, "encoder": {"hidden_dims": [8], "output_dim": 4}})";
  const CmdResult r = run("train --agent dqn --corpus " + corpus +
                          " --config " + (dir_ / "cfg.json").string() +
                          " --episodes 6 --out " + (dir_ / "o").string());
  ASSERT_EQ(r.exit_code, 0) << r.err;
  // flag --episodes 6 overrode the file's 4
  const std::string log = slurp(dir_ / "o" / "train_log.jsonl");
  EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 6);
  const std::string meta = slurp(dir_ / "o" / "run_meta.json");
  EXPECT_NE(meta.find("\"episodes\": 6"), std::string::npos);
  EXPECT_NE(meta.find("\"seed\": 11"), std::string::npos);
}

TEST_F(CliTest, EnvironmentSeedIsDefault) {
  const std::string corpus = gen_corpus("corpus");
  const std::string cmd = "train --agent dqn --corpus " + corpus +
                          " --episodes 5 --out ";
  const fs::path out = dir_ / "stdout.txt", err = dir_ / "stderr.txt";
  auto run_env = [&](const std::string& env, const std::string& o) {
    const std::string full = env + " " + std::string(PROTODIAG_BIN) + " " +
                             cmd + (dir_ / o).string() + " > " + out.string() +
                             " 2> " + err.string();
    return std::system(full.c_str());
  };
  ASSERT_EQ(run_env("PROTODIAG_SEED=123", "a"), 0);
  ASSERT_EQ(run_env("PROTODIAG_SEED=123", "b"), 0);
  ASSERT_EQ(run_env("PROTODIAG_SEED=456", "c"), 0);
  EXPECT_EQ(slurp(dir_ / "a" / "train_log.jsonl"),
            slurp(dir_ / "b" / "train_log.jsonl"));
  EXPECT_NE(slurp(dir_ / "a" / "train_log.jsonl"),
            slurp(dir_ / "c" / "train_log.jsonl"));
}
