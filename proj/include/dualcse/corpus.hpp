#pragma once

// INLI-format data model: loading, validation, task conversions, synthetic
// corpus generation and batching.

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include "dualcse/error.hpp"
#include "dualcse/util.hpp"
#include "json.hpp"

namespace dualcse {

using nlohmann::json;

enum class SplitName { kTrain, kDevelopment, kTest };

inline std::string_view to_string(SplitName s) {
  switch (s) {
    case SplitName::kTrain: return "train";
    case SplitName::kDevelopment: return "development";
    case SplitName::kTest: return "test";
  }
  return "?";
}

inline SplitName parse_split_name(std::string_view s) {
  if (s == "train") return SplitName::kTrain;
  if (s == "development" || s == "dev") return SplitName::kDevelopment;
  if (s == "test") return SplitName::kTest;
  throw ConfigError("unknown split name: " + std::string(s));
}

struct InliSample {
  std::string id;
  std::string premise;
  std::string implied_entailment;
  std::string explicit_entailment;
  std::string neutral;
  std::string contradiction;

  friend bool operator==(const InliSample&, const InliSample&) = default;
};

inline constexpr std::array<std::string_view, 6> kInliFields = {
    "id", "premise", "implied_entailment", "explicit_entailment", "neutral", "contradiction"};

inline json to_json(const InliSample& s) {
  return json{{"id", s.id},
              {"premise", s.premise},
              {"implied_entailment", s.implied_entailment},
              {"explicit_entailment", s.explicit_entailment},
              {"neutral", s.neutral},
              {"contradiction", s.contradiction}};
}

// Checks non-empty text fields. Id uniqueness is a split-level property.
inline void validate_sample(const InliSample& s, std::string_view where) {
  const std::pair<std::string_view, const std::string*> fields[] = {
      {"id", &s.id},
      {"premise", &s.premise},
      {"implied_entailment", &s.implied_entailment},
      {"explicit_entailment", &s.explicit_entailment},
      {"neutral", &s.neutral},
      {"contradiction", &s.contradiction}};
  for (const auto& [name, value] : fields) {
    if (trim(*value).empty()) {
      throw ValidationError(std::string(where) + ": field '" + std::string(name) +
                            "' is empty after trimming");
    }
  }
}

// An ordered, validated, immutable list of samples.
class DatasetSplit {
 public:
  DatasetSplit(SplitName name, std::vector<InliSample> samples)
      : name_(name), samples_(std::move(samples)) {
    std::unordered_set<std::string> seen;
    for (std::size_t i = 0; i < samples_.size(); ++i) {
      validate_sample(samples_[i], "sample " + std::to_string(i + 1));
      if (!seen.insert(samples_[i].id).second) {
        throw ValidationError("duplicate id '" + samples_[i].id + "' in split " +
                              std::string(to_string(name_)));
      }
    }
  }

  SplitName name() const { return name_; }
  const std::vector<InliSample>& samples() const { return samples_; }
  std::size_t size() const { return samples_.size(); }
  bool empty() const { return samples_.empty(); }
  const InliSample& operator[](std::size_t i) const { return samples_[i]; }

 private:
  SplitName name_;
  std::vector<InliSample> samples_;
};

namespace detail {

inline std::string required_string(const json& obj, std::string_view field, std::size_t line) {
  auto it = obj.find(std::string(field));
  if (it == obj.end()) {
    throw SchemaError("line " + std::to_string(line) + ": missing field '" + std::string(field) + "'");
  }
  if (!it->is_string()) {
    throw SchemaError("line " + std::to_string(line) + ": field '" + std::string(field) +
                      "' is not a string");
  }
  return it->get<std::string>();
}

// Calls fn(parsed_object, line_number) for every non-blank line of a JSONL file.
template <typename Fn>
void for_each_jsonl(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw SchemaError("line " + std::to_string(lineno) + ": malformed JSON (" + e.what() + ")");
    }
    if (!obj.is_object()) {
      throw SchemaError("line " + std::to_string(lineno) + ": expected a JSON object");
    }
    fn(obj, lineno);
  }
}

}  // namespace detail

inline InliSample parse_inli_record(const json& obj, std::size_t line) {
  InliSample s;
  s.id = obj.contains("id") && obj["id"].is_number_integer()
             ? std::to_string(obj["id"].get<long long>())
             : detail::required_string(obj, "id", line);
  s.premise = detail::required_string(obj, "premise", line);
  s.implied_entailment = detail::required_string(obj, "implied_entailment", line);
  s.explicit_entailment = detail::required_string(obj, "explicit_entailment", line);
  s.neutral = detail::required_string(obj, "neutral", line);
  s.contradiction = detail::required_string(obj, "contradiction", line);
  validate_sample(s, "line " + std::to_string(line));
  return s;
}

inline DatasetSplit load_inli(const std::filesystem::path& path, SplitName split) {
  std::vector<InliSample> samples;
  std::unordered_set<std::string> ids;
  detail::for_each_jsonl(path, [&](const json& obj, std::size_t line) {
    InliSample s = parse_inli_record(obj, line);
    if (!ids.insert(s.id).second) {
      throw ValidationError("line " + std::to_string(line) + ": duplicate id '" + s.id + "'");
    }
    samples.push_back(std::move(s));
  });
  return DatasetSplit(split, std::move(samples));
}

inline std::string to_jsonl(const DatasetSplit& split) {
  std::string out;
  for (const auto& s : split.samples()) {
    out += to_json(s).dump();
    out += '\n';
  }
  return out;
}

inline void save_inli(const DatasetSplit& split, const std::filesystem::path& path) {
  write_file(path, to_jsonl(split));
}

// Declared split sizes, e.g. {"train": 32000, "development": 4000, "test": 4000}.
struct SplitManifest {
  std::map<SplitName, std::size_t> expected;

  static SplitManifest load(const std::filesystem::path& path) {
    json j;
    try {
      j = json::parse(read_file(path));
    } catch (const json::exception& e) {
      throw SchemaError("manifest " + path.string() + ": " + e.what());
    }
    SplitManifest m;
    for (const auto& [key, value] : j.items()) {
      if (!value.is_number_unsigned()) {
        throw SchemaError("manifest " + path.string() + ": size for '" + key + "' is not a count");
      }
      m.expected[parse_split_name(key)] = value.get<std::size_t>();
    }
    return m;
  }

  void validate(const DatasetSplit& split) const {
    auto it = expected.find(split.name());
    if (it == expected.end()) return;
    if (it->second != split.size()) {
      throw ValidationError("split " + std::string(to_string(split.name())) + " has " +
                            std::to_string(split.size()) + " samples, manifest declares " +
                            std::to_string(it->second));
    }
  }
};

// ---------------------------------------------------------------------------
// Task conversions

enum class Origin { kExplicitEntailment, kImpliedEntailment, kNeutral, kContradiction };
enum class RteLabel { kEntailment, kNonEntailment };

inline constexpr std::array<Origin, 4> kOrigins = {Origin::kExplicitEntailment, Origin::kImpliedEntailment,
                                                   Origin::kNeutral, Origin::kContradiction};

inline std::string_view to_string(Origin o) {
  switch (o) {
    case Origin::kExplicitEntailment: return "explicit_entailment";
    case Origin::kImpliedEntailment: return "implied_entailment";
    case Origin::kNeutral: return "neutral";
    case Origin::kContradiction: return "contradiction";
  }
  return "?";
}

inline RteLabel gold_label(Origin o) {
  return (o == Origin::kExplicitEntailment || o == Origin::kImpliedEntailment) ? RteLabel::kEntailment
                                                                               : RteLabel::kNonEntailment;
}

inline const std::string& hypothesis(const InliSample& s, Origin o) {
  switch (o) {
    case Origin::kExplicitEntailment: return s.explicit_entailment;
    case Origin::kImpliedEntailment: return s.implied_entailment;
    case Origin::kNeutral: return s.neutral;
    case Origin::kContradiction: return s.contradiction;
  }
  return s.neutral;
}

struct RteInstance {
  std::string premise;
  std::string hypothesis;
  RteLabel gold;
  Origin origin;
};

inline std::vector<RteInstance> to_rte_instances(const DatasetSplit& split) {
  std::vector<RteInstance> out;
  out.reserve(split.size() * kOrigins.size());
  for (const auto& s : split.samples()) {
    for (Origin o : kOrigins) {
      out.push_back({s.premise, hypothesis(s, o), gold_label(o), o});
    }
  }
  return out;
}

struct EisPair {
  std::string s1;
  std::string s2;
  int gold_more_implicit;  // 1 or 2

  const std::string& gold_sentence() const { return gold_more_implicit == 1 ? s1 : s2; }
  const std::string& other_sentence() const { return gold_more_implicit == 1 ? s2 : s1; }
};

namespace detail {

// Places `implicit` on a seeded random side.
inline EisPair make_pair_randomized(std::string implicit, std::string other, std::mt19937_64& rng) {
  if (implicit == other) {
    throw ValidationError("EIS pair has identical sentences: '" + implicit + "'");
  }
  if (std::bernoulli_distribution(0.5)(rng)) {
    return {std::move(implicit), std::move(other), 1};
  }
  return {std::move(other), std::move(implicit), 2};
}

}  // namespace detail

// One pair per (premise, hypothesis) over all four hypothesis fields; the
// premise is the gold more-implicit side. Pairs whose hypothesis equals the
// premise verbatim are skipped.
inline std::vector<EisPair> to_eis_pairs_from_inli(const DatasetSplit& split, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<EisPair> out;
  out.reserve(split.size() * kOrigins.size());
  for (const auto& s : split.samples()) {
    for (Origin o : kOrigins) {
      const std::string& h = hypothesis(s, o);
      if (h == s.premise) continue;
      out.push_back(detail::make_pair_randomized(s.premise, h, rng));
    }
  }
  return out;
}

inline std::vector<EisPair> load_pairwise(const std::filesystem::path& path, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<EisPair> out;
  detail::for_each_jsonl(path, [&](const json& obj, std::size_t line) {
    std::string imp = detail::required_string(obj, "implicit_sentence", line);
    std::string exp = detail::required_string(obj, "explicit_sentence", line);
    if (trim(imp).empty() || trim(exp).empty()) {
      throw ValidationError("line " + std::to_string(line) + ": empty sentence");
    }
    if (imp == exp) {
      throw ValidationError("line " + std::to_string(line) + ": implicit and explicit sentences are identical");
    }
    out.push_back(detail::make_pair_randomized(std::move(imp), std::move(exp), rng));
  });
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic corpus

// Ground-truth template of one synthetic sample.
struct SyntheticTemplate {
  std::vector<std::string> literal;       // L: shared with explicit-entailment
  std::vector<std::string> hidden;        // H: shared with implied-entailment
  std::vector<std::string> anti_literal;  // antonyms of L, used by the contradiction
  std::vector<std::string> anti_hidden;   // antonyms of H, used by the contradiction
  std::vector<std::string> unrelated_literal;  // literal words disjoint from L, used by the neutral

  bool is_template_token(const std::string& t) const {
    auto has = [&](const std::vector<std::string>& v) { return std::find(v.begin(), v.end(), t) != v.end(); };
    return has(literal) || has(hidden) || has(anti_literal) || has(anti_hidden);
  }
};

struct SyntheticCorpus {
  DatasetSplit split;
  std::vector<SyntheticTemplate> templates;  // parallel to split.samples()
  std::vector<std::string> vocabulary;
};

// Vocabulary word i is "w<i>". Words are dealt into five equal pools:
// literal, hidden, anti-literal, anti-hidden (antonym k of pool word k) and
// filler. The premise reads two literal words, two hidden words and one
// filler; each hypothesis pairs its template words with a fresh filler. The
// neutral hypothesis states two literal words that the premise does not use.
inline SyntheticCorpus make_synthetic_corpus(std::uint64_t seed, std::size_t n_samples, std::size_t vocab_size,
                                             SplitName split_name = SplitName::kTrain) {
  if (n_samples < 1) throw ConfigError("synthetic corpus needs n_samples >= 1");
  if (vocab_size < 20) throw ConfigError("synthetic corpus needs vocab_size >= 20");

  std::vector<std::string> vocab(vocab_size);
  for (std::size_t i = 0; i < vocab_size; ++i) vocab[i] = "w" + std::to_string(i);
  const std::size_t pool = vocab_size / 5;
  auto word = [&](std::size_t pool_index, std::size_t k) { return vocab[pool_index * pool + k]; };
  constexpr std::size_t kLiteral = 0, kHidden = 1, kAntiLiteral = 2, kAntiHidden = 3, kFiller = 4;
  const std::size_t filler_count = vocab_size - 4 * pool;

  std::mt19937_64 rng(seed);
  auto pick_distinct = [&](std::size_t n, std::size_t count) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(count);
    return idx;
  };
  auto join = [&](std::vector<std::string> words) {
    std::shuffle(words.begin(), words.end(), rng);
    std::string out;
    for (const auto& w : words) {
      if (!out.empty()) out += ' ';
      out += w;
    }
    return out;
  };

  std::vector<InliSample> samples;
  std::vector<SyntheticTemplate> templates;
  samples.reserve(n_samples);
  templates.reserve(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) {
    SyntheticTemplate t;
    const auto lit = pick_distinct(pool, 4);
    for (std::size_t k = 0; k < 2; ++k) {
      t.literal.push_back(word(kLiteral, lit[k]));
      t.anti_literal.push_back(word(kAntiLiteral, lit[k]));
      t.unrelated_literal.push_back(word(kLiteral, lit[k + 2]));
    }
    for (std::size_t k : pick_distinct(pool, 2)) {
      t.hidden.push_back(word(kHidden, k));
      t.anti_hidden.push_back(word(kAntiHidden, k));
    }
    // Up to five distinct fillers; fill[0] belongs to the premise only.
    const auto fill = pick_distinct(filler_count, std::min<std::size_t>(5, filler_count));
    auto filler = [&](std::size_t j) { return word(kFiller, fill[j < fill.size() ? j : 1]); };

    InliSample s;
    s.id = "syn-" + std::to_string(seed) + "-" + std::to_string(i);
    s.premise = join({t.literal[0], t.literal[1], t.hidden[0], t.hidden[1], filler(0)});
    s.explicit_entailment = join({t.literal[0], t.literal[1], filler(1)});
    s.implied_entailment = join({t.hidden[0], t.hidden[1], filler(2)});
    s.contradiction = join({t.anti_literal[0], t.anti_hidden[0], filler(3)});
    s.neutral = join({t.unrelated_literal[0], t.unrelated_literal[1], filler(4)});
    samples.push_back(std::move(s));
    templates.push_back(std::move(t));
  }
  return {DatasetSplit(split_name, std::move(samples)), std::move(templates), std::move(vocab)};
}

// ---------------------------------------------------------------------------
// Batching

struct Batch {
  std::vector<InliSample> samples;
  std::size_t size() const { return samples.size(); }
};

// Deterministic shuffle by epoch_seed, then consecutive chunks of batch_size;
// the final short batch is kept.
inline std::vector<Batch> batch_iter(const DatasetSplit& split, std::size_t batch_size, std::uint64_t epoch_seed) {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (split.empty()) throw ValidationError("cannot batch an empty split");
  std::vector<std::size_t> order(split.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 rng(epoch_seed);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<Batch> batches;
  batches.reserve((order.size() + batch_size - 1) / batch_size);
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    Batch b;
    const std::size_t end = std::min(order.size(), start + batch_size);
    for (std::size_t k = start; k < end; ++k) b.samples.push_back(split[order[k]]);
    batches.push_back(std::move(b));
  }
  return batches;
}

inline std::string fingerprint(const DatasetSplit& split) {
  Fnv1a h;
  h.update(to_jsonl(split));
  return h.hex();
}

}  // namespace dualcse
