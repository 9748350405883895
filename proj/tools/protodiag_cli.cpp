// protodiag: symptom-inquiry dialog policies (DQN and prototypical Q network)
// trained against a noisy rule-based patient simulator.

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "protodiag/checkpoint.hpp"
#include "protodiag/corpus.hpp"
#include "protodiag/dqn.hpp"
#include "protodiag/errors.hpp"
#include "protodiag/experiments.hpp"
#include "protodiag/proto.hpp"
#include "protodiag/simulator.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace protodiag;

namespace {

// ---------------------------------------------------------------------------
// RunConfig: one JSON document covering every knob. Flags override the file.
// ---------------------------------------------------------------------------

struct RunConfig {
  SimConfig sim;
  TrainConfig train;
  TrainConfig adapt;
  ProtoConfig proto;
  EncoderConfig encoder;
  FewShotSpec fewshot;
  std::vector<double> noise_levels{0.0, 0.1, 0.2, 0.3};
  std::uint64_t seed = 0;
};

RunConfig default_run_config() {
  RunConfig cfg;
  cfg.train.episodes = 2000;
  cfg.train.opt.learning_rate = 5e-3;
  // Fine-tuning explores less and anneals faster than from-scratch training.
  cfg.adapt = cfg.train;
  cfg.adapt.eps = {0.3, 0.05, 600};
  cfg.encoder.hidden_dims = {128};
  cfg.encoder.output_dim = 64;
  cfg.fewshot.shots_n = 5;
  cfg.fewshot.pretrain_episodes = 2000;
  cfg.fewshot.adapt_episodes = 500;
  return cfg;
}

void check_keys(const json& j, const std::set<std::string>& allowed,
                const std::string& where) {
  for (const auto& [key, value] : j.items())
    if (!allowed.count(key))
      throw DataError("config: unknown key '" + key + "' in " + where);
}

void parse_train_section(const json& j, TrainConfig& t, const std::string& where) {
  check_keys(j,
             {"gamma", "batch_size", "target_sync_every", "updates_per_episode",
              "episodes", "replay_capacity", "learning_rate", "momentum",
              "eps_start", "eps_end", "decay_steps"},
             where);
  t.gamma = j.value("gamma", t.gamma);
  t.batch_size = j.value("batch_size", t.batch_size);
  t.target_sync_every = j.value("target_sync_every", t.target_sync_every);
  t.updates_per_episode = j.value("updates_per_episode", t.updates_per_episode);
  t.episodes = j.value("episodes", t.episodes);
  t.replay_capacity = j.value("replay_capacity", t.replay_capacity);
  t.opt.learning_rate = j.value("learning_rate", t.opt.learning_rate);
  t.opt.momentum = j.value("momentum", t.opt.momentum);
  t.eps.eps_start = j.value("eps_start", t.eps.eps_start);
  t.eps.eps_end = j.value("eps_end", t.eps.eps_end);
  t.eps.decay_steps = j.value("decay_steps", t.eps.decay_steps);
}

RunConfig parse_run_config(const json& j) {
  RunConfig cfg = default_run_config();
  check_keys(j,
             {"sim", "train", "adapt", "proto", "encoder", "fewshot",
              "noise_levels", "seed"},
             "top level");
  if (j.contains("sim")) {
    const auto& s = j.at("sim");
    check_keys(s, {"noise", "max_turns", "success_reward", "failure_reward"},
               "sim");
    cfg.sim.noise = s.value("noise", cfg.sim.noise);
    cfg.sim.max_turns = s.value("max_turns", cfg.sim.max_turns);
    cfg.sim.success_reward = s.value("success_reward", cfg.sim.success_reward);
    cfg.sim.failure_reward = s.value("failure_reward", cfg.sim.failure_reward);
  }
  if (j.contains("train")) parse_train_section(j.at("train"), cfg.train, "train");
  if (j.contains("adapt")) parse_train_section(j.at("adapt"), cfg.adapt, "adapt");
  if (j.contains("proto")) {
    const auto& p = j.at("proto");
    check_keys(p, {"support_k", "order", "shuffle_seed", "stop_support_gradient"},
               "proto");
    cfg.proto.support_k = p.value("support_k", cfg.proto.support_k);
    if (p.contains("order")) {
      const std::string order = p.at("order").get<std::string>();
      if (order == "annotation")
        cfg.proto.order = SupportOrder::Annotation;
      else if (order == "shuffled")
        cfg.proto.order = SupportOrder::Shuffled;
      else
        throw DataError("config: proto.order must be annotation|shuffled");
    }
    cfg.proto.shuffle_seed = p.value("shuffle_seed", cfg.proto.shuffle_seed);
    cfg.proto.stop_support_gradient =
        p.value("stop_support_gradient", cfg.proto.stop_support_gradient);
  }
  if (j.contains("encoder")) {
    const auto& e = j.at("encoder");
    check_keys(e, {"hidden_dims", "output_dim"}, "encoder");
    cfg.encoder.hidden_dims =
        e.value("hidden_dims", cfg.encoder.hidden_dims);
    cfg.encoder.output_dim = e.value("output_dim", cfg.encoder.output_dim);
  }
  if (j.contains("fewshot")) {
    const auto& f = j.at("fewshot");
    check_keys(f, {"shots", "pretrain_episodes", "adapt_episodes"}, "fewshot");
    cfg.fewshot.shots_n = f.value("shots", cfg.fewshot.shots_n);
    cfg.fewshot.pretrain_episodes =
        f.value("pretrain_episodes", cfg.fewshot.pretrain_episodes);
    cfg.fewshot.adapt_episodes =
        f.value("adapt_episodes", cfg.fewshot.adapt_episodes);
  }
  if (j.contains("noise_levels"))
    cfg.noise_levels = j.at("noise_levels").get<std::vector<double>>();
  if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
  return cfg;
}

json train_section_to_json(const TrainConfig& t) {
  return {{"gamma", t.gamma},
          {"batch_size", t.batch_size},
          {"target_sync_every", t.target_sync_every},
          {"updates_per_episode", t.updates_per_episode},
          {"episodes", t.episodes},
          {"replay_capacity", t.replay_capacity},
          {"learning_rate", t.opt.learning_rate},
          {"momentum", t.opt.momentum},
          {"eps_start", t.eps.eps_start},
          {"eps_end", t.eps.eps_end},
          {"decay_steps", t.eps.decay_steps}};
}

// Full defaults-applied echo of the effective configuration.
json run_config_to_json(const RunConfig& cfg) {
  return {{"sim",
           {{"noise", cfg.sim.noise},
            {"max_turns", cfg.sim.max_turns},
            {"success_reward", cfg.sim.success_reward},
            {"failure_reward", cfg.sim.failure_reward}}},
          {"train", train_section_to_json(cfg.train)},
          {"adapt", train_section_to_json(cfg.adapt)},
          {"proto",
           {{"support_k", cfg.proto.support_k},
            {"order", support_order_name(cfg.proto.order)},
            {"shuffle_seed", cfg.proto.shuffle_seed},
            {"stop_support_gradient", cfg.proto.stop_support_gradient}}},
          {"encoder",
           {{"hidden_dims", cfg.encoder.hidden_dims},
            {"output_dim", cfg.encoder.output_dim}}},
          {"fewshot",
           {{"shots", cfg.fewshot.shots_n},
            {"pretrain_episodes", cfg.fewshot.pretrain_episodes},
            {"adapt_episodes", cfg.fewshot.adapt_episodes}}},
          {"noise_levels", cfg.noise_levels},
          {"seed", cfg.seed}};
}

// ---------------------------------------------------------------------------
// Small I/O helpers
// ---------------------------------------------------------------------------

void write_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeError("cannot write " + path.string());
  out << content;
  if (!out) throw RuntimeError("write failed for " + path.string());
}

Corpus load_corpus_dir(const std::string& dir) {
  std::ifstream vocab(fs::path(dir) / "vocab.json");
  if (!vocab) throw DataError("cannot open " + dir + "/vocab.json");
  std::ifstream goals(fs::path(dir) / "goals.jsonl");
  if (!goals) throw DataError("cannot open " + dir + "/goals.jsonl");
  return load_corpus(vocab, goals);
}

ExperimentConfig to_experiment_config(const RunConfig& cfg) {
  ExperimentConfig e;
  e.sim = cfg.sim;
  e.train = cfg.train;
  e.train.seed = cfg.seed;
  e.adapt = cfg.adapt;
  e.adapt.seed = cfg.seed;
  e.proto = cfg.proto;
  e.encoder = cfg.encoder;
  return e;
}

void write_run_meta(const fs::path& path, const std::string& command,
                    const RunConfig& cfg, const Corpus& corpus) {
  json meta = {{"version", kVersion},
               {"command", command},
               {"corpus_hash", corpus_hash(corpus)},
               {"config", run_config_to_json(cfg)}};
  write_file(path, meta.dump(2) + "\n");
}

void print_metrics(const Metrics& m) {
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "episodes=%d success_rate=%.2f%% mean_reward=%.2f mean_turns=%.2f",
                m.episodes, m.success_rate, m.mean_reward, m.mean_turns);
  std::cout << buf << "\n";
}

Checkpoint checkpoint_from_run(const RunResult& run, const Corpus& corpus,
                               const RunConfig& cfg) {
  Checkpoint cp;
  cp.kind = run.agent.kind;
  cp.vocab = corpus.vocab;
  cp.max_turns = cfg.sim.max_turns;
  if (cp.kind == AgentKind::Dqn) {
    cp.dqn = run.agent.dqn;
  } else {
    cp.proto = run.agent.proto;
    cp.support_corpus_hash = corpus_hash(corpus);
    cp.support_order = cfg.proto.order;
    cp.support_shuffle_seed = cfg.proto.shuffle_seed;
    cp.support_k = cfg.proto.support_k;
  }
  return cp;
}

// Rebuilds the prototype support index an existing proto checkpoint expects,
// refusing corpora other than the one it was trained on.
SupportIndex rebuild_support_index(const Checkpoint& cp, const Corpus& corpus) {
  if (corpus_hash(corpus) != cp.support_corpus_hash)
    throw DataError(
        "checkpoint was trained on a different corpus (fingerprint mismatch)");
  return build_support_index(corpus, cp.max_turns, cp.support_order,
                             cp.support_shuffle_seed);
}

// ---------------------------------------------------------------------------
// Subcommand state
// ---------------------------------------------------------------------------

struct CliOptions {
  // shared
  std::string config_path;
  std::string corpus_dir;
  std::string out_dir = ".";
  std::string agent = "dqn";
  std::uint64_t seed = 0;
  bool seed_set = false;
  double noise = -1.0;  // <0: keep config value
  // gen-data
  SynthSpec synth;
  // convert-muzhi
  std::string muzhi_input;
  // train
  int episodes = -1;
  // eval / chat
  std::string checkpoint_path;
  std::string vocab_path;
  std::string goals_path;
  // fewshot
  int shots = -1;
  int pretrain_episodes = -1;
  int adapt_episodes = -1;
  std::string noise_levels_arg;
};

RunConfig effective_config(const CliOptions& opt) {
  RunConfig cfg = default_run_config();
  if (!opt.config_path.empty()) {
    std::ifstream in(opt.config_path);
    if (!in) throw DataError("cannot open config " + opt.config_path);
    json j;
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw DataError(std::string("config: malformed JSON: ") + e.what());
    }
    cfg = parse_run_config(j);
  }
  // Flag overrides beat the file; the environment seed is the last resort.
  if (opt.seed_set)
    cfg.seed = opt.seed;
  else if (const char* env = std::getenv("PROTODIAG_SEED");
           env && *env && opt.config_path.empty())
    cfg.seed = std::strtoull(env, nullptr, 10);
  if (opt.noise >= 0.0) cfg.sim.noise = opt.noise;
  if (opt.episodes >= 0) cfg.train.episodes = opt.episodes;
  if (opt.shots >= 0) cfg.fewshot.shots_n = opt.shots;
  if (opt.pretrain_episodes >= 0)
    cfg.fewshot.pretrain_episodes = opt.pretrain_episodes;
  if (opt.adapt_episodes >= 0) cfg.fewshot.adapt_episodes = opt.adapt_episodes;
  if (!opt.noise_levels_arg.empty()) {
    cfg.noise_levels.clear();
    std::stringstream ss(opt.noise_levels_arg);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      try {
        cfg.noise_levels.push_back(std::stod(tok));
      } catch (const std::exception&) {
        throw UsageError("bad --noise-levels entry '" + tok + "'");
      }
    }
    if (cfg.noise_levels.empty()) throw UsageError("--noise-levels is empty");
  }
  return cfg;
}

AgentKind parse_agent(const std::string& name) {
  if (name == "dqn") return AgentKind::Dqn;
  if (name == "proto") return AgentKind::Proto;
  throw UsageError("--agent must be dqn or proto");
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

int cmd_gen_data(const CliOptions& opt) {
  SynthSpec spec = opt.synth;
  if (opt.seed_set) spec.seed = opt.seed;
  const Corpus corpus = generate_synthetic(spec);
  const auto report = validate_corpus(corpus);
  if (!report.ok())
    throw RuntimeError("generated corpus failed validation: " +
                       report.errors.front());
  write_file(fs::path(opt.out_dir) / "vocab.json", serialize_vocab(corpus.vocab));
  write_file(fs::path(opt.out_dir) / "goals.jsonl", serialize_goals(corpus));
  std::cout << "wrote " << opt.out_dir << "/vocab.json and goals.jsonl: "
            << corpus.goals.size() << " goals ("
            << corpus.count_split(Split::Train) << " train / "
            << corpus.count_split(Split::Test) << " test), "
            << corpus.vocab.n_symptoms() << " symptoms, "
            << corpus.vocab.n_diseases() << " diseases\n";
  return 0;
}

int cmd_convert_muzhi(const CliOptions& opt) {
  std::ifstream in(opt.muzhi_input);
  if (!in) throw DataError("cannot open " + opt.muzhi_input);
  const Corpus corpus = convert_muzhi(in);
  const auto report = validate_corpus(corpus);
  for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";
  if (!report.ok())
    throw DataError("converted corpus failed validation: " +
                    report.errors.front());
  write_file(fs::path(opt.out_dir) / "vocab.json", serialize_vocab(corpus.vocab));
  write_file(fs::path(opt.out_dir) / "goals.jsonl", serialize_goals(corpus));
  std::cout << "converted " << corpus.goals.size() << " goals ("
            << corpus.count_split(Split::Train) << " train / "
            << corpus.count_split(Split::Test) << " test), "
            << corpus.vocab.n_symptoms() << " symptoms, "
            << corpus.vocab.n_diseases() << " diseases\n";
  return 0;
}

int cmd_train(const CliOptions& opt) {
  const RunConfig cfg = effective_config(opt);
  const AgentKind kind = parse_agent(opt.agent);
  const Corpus corpus = load_corpus_dir(opt.corpus_dir);
  const RunResult run = run_supervised(kind, corpus, to_experiment_config(cfg));

  const fs::path out(opt.out_dir);
  write_file(out / "checkpoint.json",
             save_checkpoint(checkpoint_from_run(run, corpus, cfg)));
  write_file(out / "train_log.jsonl", serialize_log(run.agent.log));
  write_run_meta(out / "run_meta.json", "train", cfg, corpus);
  ResultsTable table;
  table.rows.push_back(
      {agent_name(kind), "supervised", cfg.sim.noise, "all", run.metrics});
  write_file(out / "results.csv", write_results(table));
  print_metrics(run.metrics);
  return 0;
}

int cmd_eval(const CliOptions& opt) {
  const RunConfig cfg = effective_config(opt);
  std::ifstream in(opt.checkpoint_path);
  if (!in) throw DataError("cannot open checkpoint " + opt.checkpoint_path);
  const Checkpoint cp = load_checkpoint(in);
  const Corpus corpus = load_corpus_dir(opt.corpus_dir);
  if (cp.vocab != corpus.vocab)
    throw DataError("checkpoint vocabulary does not match the corpus");

  SimConfig sim = cfg.sim;
  sim.max_turns = cp.max_turns;
  const auto test_goals = goals_of_split(corpus, Split::Test);

  Metrics metrics;
  if (cp.kind == AgentKind::Proto) {
    const SupportIndex index = rebuild_support_index(cp, corpus);
    metrics = eval_proto(cp.proto.encoder, cp.proto.fallback, index, test_goals,
                         sim, derive_seed(cfg.seed, 99), corpus.vocab);
  } else {
    metrics = evaluate_policy(
        [&](const DialogState& s) {
          return act_greedy(cp.dqn, s, corpus.vocab, sim.max_turns);
        },
        test_goals, sim, derive_seed(cfg.seed, 99), corpus.vocab);
  }
  ResultsTable table;
  table.rows.push_back(
      {agent_name(cp.kind), "eval", sim.noise, "all", metrics});
  write_file(fs::path(opt.out_dir) / "results.csv", write_results(table));
  print_metrics(metrics);
  return 0;
}

int cmd_fewshot(const CliOptions& opt) {
  const RunConfig cfg = effective_config(opt);
  if (cfg.fewshot.shots_n < 1) throw UsageError("--shots must be >= 1");
  const AgentKind kind = parse_agent(opt.agent);
  const Corpus corpus = load_corpus_dir(opt.corpus_dir);
  const ResultsTable table = run_fewshot_all_folds(
      kind, corpus, cfg.fewshot, cfg.noise_levels, to_experiment_config(cfg));
  write_file(fs::path(opt.out_dir) / "results.csv", write_results(table));
  write_run_meta(fs::path(opt.out_dir) / "run_meta.json", "fewshot", cfg, corpus);
  for (const auto& row : table.rows)
    if (row.fold == "avg") {
      char buf[120];
      std::snprintf(buf, sizeof(buf), "noise=%g avg_success_rate=%.2f%%",
                    row.noise, row.metrics.success_rate);
      std::cout << buf << "\n";
    }
  return 0;
}

// ---------------------------------------------------------------------------
// Interactive demo: the human plays the patient.
// ---------------------------------------------------------------------------

int edit_distance(const std::string& a, const std::string& b) {
  std::vector<int> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = static_cast<int>(j);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = static_cast<int>(i);
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1,
                         prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

void print_chat_state(const DialogState& state, const Vocabulary& vocab) {
  std::cout << "state: turn=" << state.turn;
  for (std::size_t k = 0; k < state.slots.size(); ++k) {
    const char* status = nullptr;
    switch (state.slots[k]) {
      case SlotStatus::Confirmed: status = "confirmed"; break;
      case SlotStatus::Denied: status = "denied"; break;
      case SlotStatus::Unrelated: status = "unrelated"; break;
      case SlotStatus::NotInquired: continue;
    }
    std::cout << " " << vocab.symptoms[k] << "=" << status;
  }
  std::cout << "\n";
}

int cmd_chat(const CliOptions& opt) {
  std::ifstream in(opt.checkpoint_path);
  if (!in) throw DataError("cannot open checkpoint " + opt.checkpoint_path);
  const Checkpoint cp = load_checkpoint(in);

  Vocabulary vocab;
  {
    std::ifstream vin(opt.vocab_path);
    if (!vin) throw DataError("cannot open vocab " + opt.vocab_path);
    vocab = detail::parse_vocab(vin);
  }
  if (cp.vocab != vocab)
    throw DataError("checkpoint vocabulary does not match --vocab");

  // A proto policy needs the training corpus back to rebuild its prototypes.
  PrototypeTable proto_table;
  if (cp.kind == AgentKind::Proto) {
    if (opt.goals_path.empty())
      throw UsageError("proto checkpoints need --goals to rebuild prototypes");
    std::ifstream vin(opt.vocab_path), gin(opt.goals_path);
    const Corpus corpus = load_corpus(vin, gin);
    const SupportIndex index = rebuild_support_index(cp, corpus);
    proto_table = proto_embed_eval(cp.proto.encoder, index, cp.proto.fallback);
  }

  std::cout << "symptom checker demo (" << agent_name(cp.kind) << " policy, "
            << vocab.n_symptoms() << " symptoms, " << vocab.n_diseases()
            << " diseases)\n";
  std::cout << "enter your symptoms, comma-separated ('list' prints them):\n";

  std::vector<SymptomFinding> explicit_findings;
  std::string line;
  while (explicit_findings.empty()) {
    std::cout << "> " << std::flush;
    if (!std::getline(std::cin, line)) return 0;
    const std::string entry = trim(line);
    if (entry.empty()) {
      std::cout << "please name at least one symptom\n";
      continue;
    }
    if (entry == "list") {
      for (const auto& s : vocab.symptoms) std::cout << "  " << s << "\n";
      continue;
    }
    std::vector<SymptomFinding> parsed;
    bool ok = true;
    std::stringstream ss(entry);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      const std::string name = trim(tok);
      if (name.empty()) continue;
      const auto idx = vocab.symptom_index(name);
      if (!idx) {
        std::cout << "unknown symptom '" << name << "'";
        std::vector<std::pair<int, std::string>> ranked;
        for (const auto& s : vocab.symptoms)
          ranked.emplace_back(edit_distance(name, s), s);
        std::sort(ranked.begin(), ranked.end());
        std::cout << "; closest matches:";
        for (std::size_t i = 0; i < ranked.size() && i < 3; ++i)
          std::cout << " " << ranked[i].second;
        std::cout << "\n";
        ok = false;
        break;
      }
      bool dup = false;
      for (const auto& f : parsed) dup = dup || f.symptom == *idx;
      if (!dup) parsed.push_back({*idx, Finding::Present});
    }
    if (ok && parsed.empty())
      std::cout << "please name at least one symptom\n";
    else if (ok)
      explicit_findings = std::move(parsed);
  }

  DialogState state = initial_state(explicit_findings, vocab.n_symptoms());
  const int max_turns = cp.max_turns;
  while (true) {
    const auto sv = encode_state(state, max_turns);
    const auto mask = legal_actions(state, vocab.n_diseases());
    int a;
    if (cp.kind == AgentKind::Proto)
      a = greedy_action(proto_q(forward(cp.proto.encoder, sv), proto_table), mask);
    else
      a = greedy_action(q_values(cp.dqn, sv), mask);
    const AgentAction action = index_action(a, vocab);
    if (action.kind == AgentActionKind::InformDisease) {
      std::cout << "diagnosis: "
                << vocab.diseases[static_cast<std::size_t>(action.index)]
                << " (after " << state.turn << " turns)\n";
      return 0;
    }
    std::cout << "do you have "
              << vocab.symptoms[static_cast<std::size_t>(action.index)]
              << "? [y/n/u] " << std::flush;
    UserActionKind reply;
    while (true) {
      if (!std::getline(std::cin, line)) return 0;
      const std::string ans = trim(line);
      if (ans == "y" || ans == "yes") { reply = UserActionKind::Confirm; break; }
      if (ans == "n" || ans == "no") { reply = UserActionKind::Deny; break; }
      if (ans == "u" || ans == "unsure") { reply = UserActionKind::NotSure; break; }
      std::cout << "please answer y, n, or u: " << std::flush;
    }
    state = apply_turn(state, action, reply);
    print_chat_state(state, vocab);
    if (state.turn >= max_turns) {
      std::cout << "turn limit reached without a diagnosis\n";
      return 0;
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"symptom-inquiry dialog policy lab (DQN vs prototypical Q network)"};
  app.require_subcommand(1);
  CliOptions opt;

  auto add_seed = [&](CLI::App* cmd) {
    cmd->add_option("--seed", opt.seed, "rng seed (default: $PROTODIAG_SEED or 0)")
        ->each([&](const std::string&) { opt.seed_set = true; });
  };

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic corpus");
  gen->add_option("--diseases", opt.synth.n_diseases, "number of diseases");
  gen->add_option("--symptoms", opt.synth.n_symptoms, "number of symptoms");
  gen->add_option("--signature-size", opt.synth.signature_size,
                  "symptoms per disease signature");
  gen->add_option("--overlap", opt.synth.overlap,
                  "shared symptoms between adjacent disease signatures");
  gen->add_option("--explicit", opt.synth.explicit_per_goal,
                  "explicit symptoms per goal");
  gen->add_option("--implicit-present", opt.synth.implicit_present_per_goal,
                  "present implicit symptoms per goal");
  gen->add_option("--implicit-absent", opt.synth.implicit_absent_per_goal,
                  "absent implicit symptoms per goal");
  gen->add_option("--train-per-disease", opt.synth.goals_per_disease_train,
                  "train goals per disease");
  gen->add_option("--test-per-disease", opt.synth.goals_per_disease_test,
                  "test goals per disease");
  gen->add_option("--out", opt.out_dir, "output directory")->required();
  add_seed(gen);

  auto* conv = app.add_subcommand("convert-muzhi",
                                  "convert a Muzhi goal-set JSON file");
  conv->add_option("--input", opt.muzhi_input, "goal-set JSON file")->required();
  conv->add_option("--out", opt.out_dir, "output directory")->required();

  auto* train = app.add_subcommand("train", "train an agent, then evaluate it");
  train->add_option("--agent", opt.agent, "dqn|proto")->required();
  train->add_option("--corpus", opt.corpus_dir, "corpus directory")->required();
  train->add_option("--config", opt.config_path, "run-config JSON file");
  train->add_option("--noise", opt.noise, "simulator noise level");
  train->add_option("--episodes", opt.episodes, "training episodes");
  train->add_option("--out", opt.out_dir, "output directory");
  add_seed(train);

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a corpus");
  eval->add_option("--checkpoint", opt.checkpoint_path, "checkpoint.json")
      ->required();
  eval->add_option("--corpus", opt.corpus_dir, "corpus directory")->required();
  eval->add_option("--config", opt.config_path, "run-config JSON file");
  eval->add_option("--noise", opt.noise, "simulator noise level");
  eval->add_option("--out", opt.out_dir, "output directory");
  add_seed(eval);

  auto* few = app.add_subcommand(
      "fewshot", "leave-one-disease-out few-shot sweep over noise levels");
  few->add_option("--agent", opt.agent, "dqn|proto")->required();
  few->add_option("--corpus", opt.corpus_dir, "corpus directory")->required();
  few->add_option("--config", opt.config_path, "run-config JSON file");
  few->add_option("--shots", opt.shots, "adaptation examples per disease");
  few->add_option("--pretrain-episodes", opt.pretrain_episodes,
                  "episodes for the pretraining phase");
  few->add_option("--adapt-episodes", opt.adapt_episodes,
                  "episodes for the adaptation phase");
  few->add_option("--noise-levels", opt.noise_levels_arg,
                  "comma-separated noise levels (default 0,0.1,0.2,0.3)");
  few->add_option("--out", opt.out_dir, "output directory");
  add_seed(few);

  auto* chat = app.add_subcommand("chat", "interactive demo: you are the patient");
  chat->add_option("--checkpoint", opt.checkpoint_path, "checkpoint.json")
      ->required();
  chat->add_option("--vocab", opt.vocab_path, "vocab.json")->required();
  chat->add_option("--goals", opt.goals_path,
                   "goals.jsonl (required for proto checkpoints)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error(usage): " << e.what() << "\n";
    return 2;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(opt);
    if (conv->parsed()) return cmd_convert_muzhi(opt);
    if (train->parsed()) return cmd_train(opt);
    if (eval->parsed()) return cmd_eval(opt);
    if (few->parsed()) return cmd_fewshot(opt);
    if (chat->parsed()) return cmd_chat(opt);
  } catch (const UsageError& e) {
    std::cerr << "error(usage): " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "error(data): " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error(runtime): " << e.what() << "\n";
    return 4;
  }
  return 0;
}
