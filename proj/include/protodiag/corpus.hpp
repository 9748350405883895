#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "protodiag/errors.hpp"
#include "protodiag/rng.hpp"

namespace protodiag {

// Symptom and disease name universes. Indices into these lists are the only
// identifiers the rest of the project uses; they are fixed at load time.
struct Vocabulary {
  std::vector<std::string> symptoms;
  std::vector<std::string> diseases;

  std::optional<int> symptom_index(std::string_view name) const {
    for (std::size_t i = 0; i < symptoms.size(); ++i)
      if (symptoms[i] == name) return static_cast<int>(i);
    return std::nullopt;
  }
  std::optional<int> disease_index(std::string_view name) const {
    for (std::size_t i = 0; i < diseases.size(); ++i)
      if (diseases[i] == name) return static_cast<int>(i);
    return std::nullopt;
  }
  int n_symptoms() const { return static_cast<int>(symptoms.size()); }
  int n_diseases() const { return static_cast<int>(diseases.size()); }

  bool operator==(const Vocabulary&) const = default;
};

// Annotation-side truth for one symptom.
enum class Finding { Present, Absent };

enum class Split { Train, Test };

struct SymptomFinding {
  int symptom = 0;
  Finding status = Finding::Present;

  bool operator==(const SymptomFinding&) const = default;
};

// One annotated patient case: the disease label, the symptoms volunteered in
// the self-report (explicit) and those only revealed on inquiry (implicit).
// Finding order follows the annotation and is preserved by serialization.
struct UserGoal {
  std::string id;
  int disease = 0;
  std::vector<SymptomFinding> explicit_findings;
  std::vector<SymptomFinding> implicit_findings;
  Split split = Split::Train;

  // Looks a symptom up across both maps; nullopt means "unrelated".
  std::optional<Finding> find(int symptom) const {
    for (const auto& f : explicit_findings)
      if (f.symptom == symptom) return f.status;
    for (const auto& f : implicit_findings)
      if (f.symptom == symptom) return f.status;
    return std::nullopt;
  }

  bool operator==(const UserGoal&) const = default;
};

struct Corpus {
  Vocabulary vocab;
  std::vector<UserGoal> goals;

  std::vector<std::size_t> split_indices(Split s) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < goals.size(); ++i)
      if (goals[i].split == s) out.push_back(i);
    return out;
  }
  int count_split(Split s) const {
    return static_cast<int>(split_indices(s).size());
  }

  bool operator==(const Corpus&) const = default;
};

struct ValidationReport {
  std::vector<std::string> errors;
  std::vector<std::string> warnings;

  bool ok() const { return errors.empty(); }
};

// Parameters for the deterministic synthetic corpus generator. Each disease
// owns a contiguous symptom signature; adjacent signatures share `overlap`
// symptoms.
struct SynthSpec {
  int n_diseases = 4;
  int n_symptoms = 20;
  int signature_size = 5;
  int overlap = 0;
  int explicit_per_goal = 1;
  int implicit_present_per_goal = 2;
  int implicit_absent_per_goal = 1;
  int goals_per_disease_train = 30;
  int goals_per_disease_test = 10;
  std::uint64_t seed = 0;
};

namespace detail {

inline std::string padded_name(const char* stem, int index, int count) {
  std::size_t width = 1;
  for (int c = count - 1; c >= 10; c /= 10) ++width;
  std::string digits = std::to_string(index);
  if (digits.size() < width)
    digits.insert(0, width - digits.size(), '0');
  return std::string(stem) + "_" + digits;
}

inline const char* split_name(Split s) {
  return s == Split::Train ? "train" : "test";
}

// Draws k distinct elements from pool, preserving rng determinism.
inline std::vector<int> sample_without_replacement(Rng& rng,
                                                   std::vector<int> pool,
                                                   int k) {
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) {
    std::size_t j = uniform_index(rng, pool.size());
    out.push_back(pool[j]);
    pool[j] = pool.back();
    pool.pop_back();
  }
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Serialization: vocab.json + goals.jsonl
// ---------------------------------------------------------------------------

inline std::string serialize_vocab(const Vocabulary& vocab) {
  nlohmann::ordered_json j;
  j["symptoms"] = vocab.symptoms;
  j["diseases"] = vocab.diseases;
  return j.dump() + "\n";
}

inline std::string serialize_goals(const Corpus& corpus) {
  std::string out;
  for (const auto& g : corpus.goals) {
    nlohmann::ordered_json j;
    j["id"] = g.id;
    j["disease"] = corpus.vocab.diseases.at(static_cast<std::size_t>(g.disease));
    nlohmann::ordered_json exp = nlohmann::ordered_json::object();
    for (const auto& f : g.explicit_findings)
      exp[corpus.vocab.symptoms.at(static_cast<std::size_t>(f.symptom))] =
          (f.status == Finding::Present);
    nlohmann::ordered_json imp = nlohmann::ordered_json::object();
    for (const auto& f : g.implicit_findings)
      imp[corpus.vocab.symptoms.at(static_cast<std::size_t>(f.symptom))] =
          (f.status == Finding::Present);
    j["explicit"] = exp;
    j["implicit"] = imp;
    j["split"] = detail::split_name(g.split);
    out += j.dump();
    out += "\n";
  }
  return out;
}

namespace detail {

inline Vocabulary parse_vocab(std::istream& vocab_text) {
  nlohmann::json j;
  try {
    vocab_text >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("vocab: malformed JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("symptoms") || !j.contains("diseases"))
    throw DataError("vocab: expected object with 'symptoms' and 'diseases'");
  Vocabulary v;
  v.symptoms = j.at("symptoms").get<std::vector<std::string>>();
  v.diseases = j.at("diseases").get<std::vector<std::string>>();
  if (v.symptoms.empty()) throw DataError("vocab: symptom list is empty");
  if (v.diseases.empty()) throw DataError("vocab: disease list is empty");
  std::set<std::string> seen;
  for (const auto& s : v.symptoms)
    if (!seen.insert(s).second)
      throw DataError("vocab: duplicate symptom name '" + s + "'");
  seen.clear();
  for (const auto& d : v.diseases)
    if (!seen.insert(d).second)
      throw DataError("vocab: duplicate disease name '" + d + "'");
  return v;
}

// Parses one {"<symptom>": bool, ...} block, resolving names to indices.
inline std::vector<SymptomFinding> parse_finding_map(
    const nlohmann::ordered_json& j, const Vocabulary& vocab,
    const std::string& where) {
  std::vector<SymptomFinding> out;
  if (!j.is_object()) throw DataError(where + ": expected an object");
  for (const auto& [name, value] : j.items()) {
    auto idx = vocab.symptom_index(name);
    if (!idx) throw DataError(where + ": unknown symptom '" + name + "'");
    if (!value.is_boolean())
      throw DataError(where + ": status of '" + name + "' must be a boolean");
    out.push_back({*idx, value.get<bool>() ? Finding::Present : Finding::Absent});
  }
  return out;
}

}  // namespace detail

// Loads and validates a corpus from the documented two-file format.
// Throws DataError with the offending goals.jsonl line number on bad input.
inline Corpus load_corpus(std::istream& vocab_text, std::istream& goals_text) {
  Corpus corpus;
  corpus.vocab = detail::parse_vocab(vocab_text);

  std::unordered_set<std::string> ids;
  std::string line;
  int line_no = 0;
  while (std::getline(goals_text, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = "goals line " + std::to_string(line_no);
    nlohmann::ordered_json j;
    try {
      j = nlohmann::ordered_json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(where + ": malformed JSON: " + e.what());
    }
    UserGoal g;
    if (!j.contains("id") || !j.at("id").is_string())
      throw DataError(where + ": missing string field 'id'");
    g.id = j.at("id").get<std::string>();
    if (!ids.insert(g.id).second)
      throw DataError(where + ": duplicate goal id '" + g.id + "'");

    if (!j.contains("disease"))
      throw DataError(where + ": missing field 'disease'");
    auto di = corpus.vocab.disease_index(j.at("disease").get<std::string>());
    if (!di)
      throw DataError(where + ": unknown disease '" +
                      j.at("disease").get<std::string>() + "'");
    g.disease = *di;

    g.explicit_findings = detail::parse_finding_map(
        j.value("explicit", nlohmann::ordered_json::object()), corpus.vocab,
        where + " explicit");
    g.implicit_findings = detail::parse_finding_map(
        j.value("implicit", nlohmann::ordered_json::object()), corpus.vocab,
        where + " implicit");

    std::set<int> exp_keys, imp_keys;
    for (const auto& f : g.explicit_findings)
      if (!exp_keys.insert(f.symptom).second)
        throw DataError(where + ": symptom repeated within explicit map");
    for (const auto& f : g.implicit_findings)
      if (!imp_keys.insert(f.symptom).second)
        throw DataError(where + ": symptom repeated within implicit map");
    for (int k : imp_keys)
      if (exp_keys.count(k))
        throw DataError(where + ": overlapping explicit/implicit symptom '" +
                        corpus.vocab.symptoms[static_cast<std::size_t>(k)] +
                        "'");
    bool any_present = false;
    for (const auto& f : g.explicit_findings)
      any_present = any_present || f.status == Finding::Present;
    if (!any_present)
      throw DataError(where + ": explicit map has no present symptom");

    std::string split = j.value("split", std::string("train"));
    if (split == "train")
      g.split = Split::Train;
    else if (split == "test")
      g.split = Split::Test;
    else
      throw DataError(where + ": split must be 'train' or 'test', got '" +
                      split + "'");
    corpus.goals.push_back(std::move(g));
  }
  return corpus;
}

// Re-checks every corpus invariant; meant for corpora that did not come
// through load_corpus (converters, generators, hand-built fixtures).
inline ValidationReport validate_corpus(const Corpus& corpus) {
  ValidationReport report;
  auto err = [&](std::string m) { report.errors.push_back(std::move(m)); };
  auto warn = [&](std::string m) { report.warnings.push_back(std::move(m)); };

  if (corpus.vocab.symptoms.empty()) err("vocab: empty symptom list");
  if (corpus.vocab.diseases.empty()) err("vocab: empty disease list");

  std::unordered_set<std::string> ids;
  std::vector<int> train_per_disease(corpus.vocab.diseases.size(), 0);
  std::vector<int> mentions(corpus.vocab.symptoms.size(), 0);
  for (const auto& g : corpus.goals) {
    if (!ids.insert(g.id).second) err("duplicate goal id '" + g.id + "'");
    if (g.disease < 0 || g.disease >= corpus.vocab.n_diseases()) {
      err("goal '" + g.id + "': disease index out of range");
      continue;
    }
    if (g.split == Split::Train)
      ++train_per_disease[static_cast<std::size_t>(g.disease)];
    std::set<int> exp_keys, imp_keys;
    bool any_present = false;
    for (const auto& f : g.explicit_findings) {
      if (f.symptom < 0 || f.symptom >= corpus.vocab.n_symptoms())
        err("goal '" + g.id + "': explicit symptom index out of range");
      else
        ++mentions[static_cast<std::size_t>(f.symptom)];
      if (!exp_keys.insert(f.symptom).second)
        err("goal '" + g.id + "': repeated explicit symptom");
      any_present = any_present || f.status == Finding::Present;
    }
    if (!any_present) err("goal '" + g.id + "': no present explicit symptom");
    for (const auto& f : g.implicit_findings) {
      if (f.symptom < 0 || f.symptom >= corpus.vocab.n_symptoms())
        err("goal '" + g.id + "': implicit symptom index out of range");
      else
        ++mentions[static_cast<std::size_t>(f.symptom)];
      if (!imp_keys.insert(f.symptom).second)
        err("goal '" + g.id + "': repeated implicit symptom");
      if (exp_keys.count(f.symptom))
        err("goal '" + g.id + "': overlapping explicit/implicit symptom '" +
            corpus.vocab.symptoms[static_cast<std::size_t>(f.symptom)] + "'");
    }
  }
  for (std::size_t d = 0; d < train_per_disease.size(); ++d)
    if (train_per_disease[d] == 0)
      warn("disease '" + corpus.vocab.diseases[d] + "' has no train goals");
  for (std::size_t s = 0; s < mentions.size(); ++s)
    if (mentions[s] == 0)
      warn("symptom '" + corpus.vocab.symptoms[s] + "' is never mentioned");
  return report;
}

// Deterministic synthetic corpus: a pure function of the spec.
inline Corpus generate_synthetic(const SynthSpec& spec) {
  if (spec.n_diseases < 1 || spec.n_symptoms < 1)
    throw UsageError("synthetic: need at least one disease and one symptom");
  if (spec.signature_size > spec.n_symptoms)
    throw UsageError("synthetic: signature_size exceeds n_symptoms");
  if (spec.explicit_per_goal < 1)
    throw UsageError("synthetic: explicit_per_goal must be >= 1");
  if (spec.overlap < 0 || spec.overlap >= spec.signature_size)
    throw UsageError("synthetic: overlap must be in [0, signature_size)");
  if (spec.explicit_per_goal + spec.implicit_present_per_goal >
      spec.signature_size)
    throw UsageError(
        "synthetic: explicit + implicit present symptoms exceed signature");
  if (spec.implicit_absent_per_goal > spec.n_symptoms - spec.signature_size)
    throw UsageError(
        "synthetic: not enough off-signature symptoms for absent findings");
  const int stride = spec.signature_size - spec.overlap;
  if ((spec.n_diseases - 1) * stride + spec.signature_size > spec.n_symptoms)
    throw UsageError("synthetic: signatures do not fit the symptom universe");

  Corpus corpus;
  for (int s = 0; s < spec.n_symptoms; ++s)
    corpus.vocab.symptoms.push_back(
        detail::padded_name("symptom", s, spec.n_symptoms));
  for (int d = 0; d < spec.n_diseases; ++d)
    corpus.vocab.diseases.push_back(
        detail::padded_name("disease", d, spec.n_diseases));

  // Signature of disease d: `signature_size` consecutive symptoms starting at
  // d*stride, so adjacent diseases share exactly `overlap` symptoms.
  std::vector<std::vector<int>> signatures;
  for (int d = 0; d < spec.n_diseases; ++d) {
    std::vector<int> sig;
    for (int k = 0; k < spec.signature_size; ++k) sig.push_back(d * stride + k);
    signatures.push_back(std::move(sig));
  }

  Rng rng = make_rng(spec.seed);
  for (int d = 0; d < spec.n_diseases; ++d) {
    std::vector<int> off_signature;
    for (int s = 0; s < spec.n_symptoms; ++s)
      if (std::find(signatures[static_cast<std::size_t>(d)].begin(),
                    signatures[static_cast<std::size_t>(d)].end(),
                    s) == signatures[static_cast<std::size_t>(d)].end())
        off_signature.push_back(s);
    for (Split split : {Split::Train, Split::Test}) {
      const int n_goals = split == Split::Train ? spec.goals_per_disease_train
                                                : spec.goals_per_disease_test;
      for (int g = 0; g < n_goals; ++g) {
        UserGoal goal;
        goal.disease = d;
        goal.split = split;
        goal.id = corpus.vocab.diseases[static_cast<std::size_t>(d)] + "_" +
                  detail::split_name(split) + "_" +
                  detail::padded_name("g", g, n_goals);
        auto present = detail::sample_without_replacement(
            rng, signatures[static_cast<std::size_t>(d)],
            spec.explicit_per_goal + spec.implicit_present_per_goal);
        for (int i = 0; i < spec.explicit_per_goal; ++i)
          goal.explicit_findings.push_back(
              {present[static_cast<std::size_t>(i)], Finding::Present});
        for (std::size_t i = static_cast<std::size_t>(spec.explicit_per_goal);
             i < present.size(); ++i)
          goal.implicit_findings.push_back({present[i], Finding::Present});
        auto absent = detail::sample_without_replacement(
            rng, off_signature, spec.implicit_absent_per_goal);
        for (int s : absent)
          goal.implicit_findings.push_back({s, Finding::Absent});
        corpus.goals.push_back(std::move(goal));
      }
    }
  }
  return corpus;
}

// Drops goals whose disease is not in `keep`. The vocabulary (and with it the
// action space and every index) is intentionally left untouched.
inline Corpus filter_by_diseases(const Corpus& corpus,
                                 const std::set<int>& keep) {
  if (keep.empty()) throw UsageError("filter: empty disease set");
  for (int d : keep)
    if (d < 0 || d >= corpus.vocab.n_diseases())
      throw UsageError("filter: disease index out of range");
  Corpus out;
  out.vocab = corpus.vocab;
  for (const auto& g : corpus.goals)
    if (keep.count(g.disease)) out.goals.push_back(g);
  return out;
}

// Content fingerprint used to tie checkpoints to the corpus they were
// trained against.
inline std::string corpus_hash(const Corpus& corpus) {
  std::uint64_t h = fnv1a64(serialize_vocab(corpus.vocab));
  h ^= splitmix64(fnv1a64(serialize_goals(corpus)));
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------
// Optional adapter for the public Muzhi goal-set JSON.
// ---------------------------------------------------------------------------

// Expected layout: {"train": [case...], "test": [case...]} where each case is
// {"consult_id": ..., "disease_tag": ..., "goal": {"explicit_inform_slots":
// {...}, "implicit_inform_slots": {...}}}. Slot values may be booleans or the
// strings "1"/"0"/"true"/"false". Symptoms listed in both maps keep only their
// explicit entry; symptoms absent from both maps stay unannotated and the
// simulator answers NotSure for them. The result must pass validate_corpus.
inline Corpus convert_muzhi(std::istream& goal_set_json) {
  nlohmann::ordered_json root;
  try {
    goal_set_json >> root;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("muzhi: malformed JSON: ") + e.what());
  }
  if (!root.is_object() || !root.contains("train") || !root.contains("test"))
    throw DataError("muzhi: expected object with 'train' and 'test' lists");

  auto slot_value = [](const nlohmann::ordered_json& v, const std::string& w) {
    if (v.is_boolean()) return v.get<bool>();
    if (v.is_string()) {
      const std::string s = v.get<std::string>();
      if (s == "1" || s == "true" || s == "True") return true;
      if (s == "0" || s == "false" || s == "False") return false;
    }
    if (v.is_number()) return v.get<double>() != 0.0;
    throw DataError("muzhi: " + w + ": unsupported slot value " + v.dump());
  };

  Corpus corpus;
  auto intern_symptom = [&](const std::string& name) {
    if (auto i = corpus.vocab.symptom_index(name)) return *i;
    corpus.vocab.symptoms.push_back(name);
    return corpus.vocab.n_symptoms() - 1;
  };
  auto intern_disease = [&](const std::string& name) {
    if (auto i = corpus.vocab.disease_index(name)) return *i;
    corpus.vocab.diseases.push_back(name);
    return corpus.vocab.n_diseases() - 1;
  };

  int anon = 0;
  for (Split split : {Split::Train, Split::Test}) {
    const auto& cases = root.at(detail::split_name(split));
    if (!cases.is_array()) throw DataError("muzhi: split entry is not a list");
    for (const auto& c : cases) {
      const std::string where = "muzhi case " + std::to_string(anon);
      UserGoal g;
      g.split = split;
      if (c.contains("consult_id"))
        g.id = c.at("consult_id").is_string()
                   ? c.at("consult_id").get<std::string>()
                   : c.at("consult_id").dump();
      else
        g.id = "muzhi_" + std::to_string(anon);
      ++anon;
      if (!c.contains("disease_tag"))
        throw DataError(where + ": missing disease_tag");
      g.disease = intern_disease(c.at("disease_tag").get<std::string>());
      const auto& goal = c.at("goal");
      std::set<int> seen;
      const auto explicit_slots =
          goal.value("explicit_inform_slots", nlohmann::ordered_json::object());
      for (const auto& [name, value] : explicit_slots.items()) {
        int s = intern_symptom(name);
        if (seen.insert(s).second)
          g.explicit_findings.push_back(
              {s, slot_value(value, where) ? Finding::Present : Finding::Absent});
      }
      const auto implicit_slots =
          goal.value("implicit_inform_slots", nlohmann::ordered_json::object());
      for (const auto& [name, value] : implicit_slots.items()) {
        int s = intern_symptom(name);
        if (seen.insert(s).second)
          g.implicit_findings.push_back(
              {s, slot_value(value, where) ? Finding::Present : Finding::Absent});
      }
      bool any_present = false;
      for (const auto& f : g.explicit_findings)
        any_present = any_present || f.status == Finding::Present;
      if (!any_present) continue;  // unusable as a dialog start; skip
      corpus.goals.push_back(std::move(g));
    }
  }
  return corpus;
}

}  // namespace protodiag
