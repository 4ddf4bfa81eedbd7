#pragma once

// Entailment recognition via the max-of-two-cosines rule, implicitness
// scoring, the character-length baseline, and report types.

#include <algorithm>
#include <array>
#include <cstdio>
#include <iostream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "dualcse/corpus.hpp"
#include "dualcse/encoder.hpp"
#include "dualcse/error.hpp"
#include "dualcse/objective.hpp"
#include "dualcse/util.hpp"
#include "json.hpp"

namespace dualcse {

class RteThreshold {
 public:
  explicit RteThreshold(double gamma) : gamma_(gamma) {
    if (!(gamma >= -1.0 && gamma <= 1.0)) throw ValidationError("threshold must lie in [-1, 1]");
  }
  double value() const { return gamma_; }

 private:
  double gamma_;
};

// max(cos(r_premise, r_hyp), cos(u_premise, r_hyp))
inline double rte_score(const DualEmbedding& premise, const Vector& hypothesis_r) {
  return std::max(cosine(premise.r, hypothesis_r), cosine(premise.u, hypothesis_r));
}

// Entailment iff the score strictly exceeds gamma.
inline RteLabel rte_decide(double score, RteThreshold gamma) {
  return score > gamma.value() ? RteLabel::kEntailment : RteLabel::kNonEntailment;
}

inline RteLabel rte_predict(const DualEmbedding& premise, const Vector& hypothesis_r, RteThreshold gamma) {
  return rte_decide(rte_score(premise, hypothesis_r), gamma);
}

struct ScoredLabel {
  double score;
  RteLabel gold;
};

inline double threshold_accuracy(std::span<const ScoredLabel> scores, double gamma) {
  std::size_t correct = 0;
  for (const auto& s : scores) {
    const RteLabel pred = s.score > gamma ? RteLabel::kEntailment : RteLabel::kNonEntailment;
    if (pred == s.gold) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(scores.size());
}

// Candidate thresholds: -1, the midpoints between consecutive distinct sorted
// scores, and 1. Returns the most accurate; ties go to the smallest gamma.
inline RteThreshold tune_threshold(std::span<const ScoredLabel> scores) {
  if (scores.empty()) throw ValidationError("tune_threshold: no scores");
  bool has_ent = false, has_non = false;
  std::vector<double> sorted;
  sorted.reserve(scores.size());
  for (const auto& s : scores) {
    (s.gold == RteLabel::kEntailment ? has_ent : has_non) = true;
    sorted.push_back(std::clamp(s.score, -1.0, 1.0));
  }
  if (!has_ent || !has_non) throw ValidationError("tune_threshold: development scores contain a single class");
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());

  std::vector<double> candidates{-1.0};
  for (std::size_t k = 0; k + 1 < sorted.size(); ++k) candidates.push_back(0.5 * (sorted[k] + sorted[k + 1]));
  candidates.push_back(1.0);

  // Sweep in ascending order; moving to candidate g turns every score in (prev, g] into non-entailment.
  std::vector<ScoredLabel> by_score;
  by_score.reserve(scores.size());
  for (const auto& s : scores) by_score.push_back({std::clamp(s.score, -1.0, 1.0), s.gold});
  std::sort(by_score.begin(), by_score.end(), [](const auto& a, const auto& b) { return a.score < b.score; });

  long long correct = 0;
  std::size_t cursor = 0;
  for (const auto& s : by_score) {
    const bool pred_ent = s.score > candidates.front();
    correct += pred_ent == (s.gold == RteLabel::kEntailment) ? 1 : 0;
    if (!pred_ent) ++cursor;
  }
  double best_gamma = candidates.front();
  long long best_correct = correct;
  for (std::size_t c = 1; c < candidates.size(); ++c) {
    const double g = candidates[c];
    for (; cursor < by_score.size() && by_score[cursor].score <= g; ++cursor) {
      correct += by_score[cursor].gold == RteLabel::kEntailment ? -1 : 1;
    }
    if (correct > best_correct) {
      best_correct = correct;
      best_gamma = g;
    }
  }
  return RteThreshold(best_gamma);
}

struct RteReport {
  std::map<Origin, std::optional<double>> class_accuracy;  // nullopt = class absent
  double average = 0.0;

  std::optional<double> at(Origin o) const {
    auto it = class_accuracy.find(o);
    return it == class_accuracy.end() ? std::nullopt : it->second;
  }
};

inline std::string_view short_name(Origin o) {
  switch (o) {
    case Origin::kExplicitEntailment: return "exp";
    case Origin::kImpliedEntailment: return "imp";
    case Origin::kNeutral: return "neu";
    case Origin::kContradiction: return "con";
  }
  return "?";
}

// Per-origin accuracy from predictions parallel to `instances`. Absent classes
// are excluded from the unweighted average (with a warning on stderr).
inline RteReport rte_report(std::span<const RteInstance> instances, std::span<const RteLabel> predictions) {
  if (instances.size() != predictions.size()) throw ValidationError("rte_report: size mismatch");
  std::map<Origin, std::pair<std::size_t, std::size_t>> tally;  // correct, total
  for (std::size_t k = 0; k < instances.size(); ++k) {
    auto& [c, t] = tally[instances[k].origin];
    ++t;
    if (predictions[k] == instances[k].gold) ++c;
  }
  RteReport rep;
  double sum = 0.0;
  int present = 0;
  for (Origin o : kOrigins) {
    auto it = tally.find(o);
    if (it == tally.end()) {
      rep.class_accuracy[o] = std::nullopt;
      std::cerr << "warning: no RTE instances with origin " << to_string(o) << "; excluded from average\n";
      continue;
    }
    const double acc = static_cast<double>(it->second.first) / static_cast<double>(it->second.second);
    rep.class_accuracy[o] = acc;
    sum += acc;
    ++present;
  }
  if (present == 0) throw ValidationError("rte_report: no instances");
  rep.average = sum / present;
  return rep;
}

inline json to_json(const RteReport& rep, std::optional<double> gamma = {}) {
  json rte = json::object();
  for (Origin o : kOrigins) {
    auto a = rep.at(o);
    rte[std::string(short_name(o))] = a ? json(*a) : json(nullptr);
  }
  rte["avg"] = rep.average;
  json out{{"rte", rte}};
  if (gamma) out["gamma"] = *gamma;
  return out;
}

// Encodes each distinct sentence once per view.
template <typename Model>
class EmbeddingCache {
 public:
  explicit EmbeddingCache(const Model& model) : model_(model) {}

  const Vector& get(const std::string& sentence, View view) {
    auto& table = view == View::kExplicit ? explicit_ : implicit_;
    auto it = table.find(sentence);
    if (it == table.end()) it = table.emplace(sentence, model_.encode(sentence, view).embedding).first;
    return it->second;
  }

  DualEmbedding dual(const std::string& sentence) { return {get(sentence, View::kExplicit), get(sentence, View::kImplicit)}; }

 private:
  const Model& model_;
  std::unordered_map<std::string, Vector> explicit_;
  std::unordered_map<std::string, Vector> implicit_;
};

template <typename Model>
std::vector<ScoredLabel> rte_scores(const Model& model, std::span<const RteInstance> instances) {
  EmbeddingCache<Model> cache(model);
  std::vector<ScoredLabel> out;
  out.reserve(instances.size());
  for (const auto& inst : instances) {
    out.push_back({rte_score(cache.dual(inst.premise), cache.get(inst.hypothesis, View::kExplicit)), inst.gold});
  }
  return out;
}

inline RteReport rte_report_from_scores(std::span<const RteInstance> instances, std::span<const ScoredLabel> scores,
                                        RteThreshold gamma) {
  std::vector<RteLabel> preds;
  preds.reserve(scores.size());
  for (const auto& s : scores) preds.push_back(rte_decide(s.score, gamma));
  return rte_report(instances, preds);
}

template <typename Model>
RteReport rte_evaluate(const Model& model, std::span<const RteInstance> instances, RteThreshold gamma) {
  const auto scores = rte_scores(model, instances);
  return rte_report_from_scores(instances, scores, gamma);
}

struct TunedRte {
  RteThreshold gamma;
  RteReport dev;
};

// Tunes gamma on dev instances and reports dev accuracy at that gamma.
template <typename Model>
TunedRte rte_tune_and_report(const Model& model, std::span<const RteInstance> dev) {
  const auto scores = rte_scores(model, dev);
  RteThreshold gamma = tune_threshold(scores);
  return {gamma, rte_report_from_scores(dev, scores, gamma)};
}

// 1 - cos(r, u), in [0, 2].
inline double imp_score(const DualEmbedding& d) { return 1.0 - cosine(d.r, d.u); }

// Index (1 or 2) of the more implicit sentence; an exact tie yields 1.
inline int eis_predict(const DualEmbedding& s1, const DualEmbedding& s2) {
  return imp_score(s2) > imp_score(s1) ? 2 : 1;
}

// Index of the longer sentence in code points after trimming; ties yield 1.
inline int length_baseline(const EisPair& pair) {
  return utf8_length(trim(pair.s2)) > utf8_length(trim(pair.s1)) ? 2 : 1;
}

struct EisReport {
  double accuracy = 0.0;
  std::size_t pairs = 0;
  std::size_t ties = 0;
};

inline json to_json(const EisReport& rep) {
  return json{{"eis", {{"accuracy", rep.accuracy}, {"pairs", rep.pairs}, {"ties", rep.ties}}}};
}

template <typename Model>
EisReport eis_evaluate(const Model& model, std::span<const EisPair> pairs) {
  if (pairs.empty()) throw ValidationError("eis_evaluate: no pairs");
  EmbeddingCache<Model> cache(model);
  EisReport rep;
  std::size_t correct = 0;
  for (const auto& p : pairs) {
    const DualEmbedding a = cache.dual(p.s1), b = cache.dual(p.s2);
    if (imp_score(a) == imp_score(b)) ++rep.ties;
    if (eis_predict(a, b) == p.gold_more_implicit) ++correct;
  }
  rep.pairs = pairs.size();
  rep.accuracy = static_cast<double>(correct) / static_cast<double>(pairs.size());
  if (rep.ties > 0) std::cerr << "note: " << rep.ties << " EIS pairs tied; resolved to index 1\n";
  return rep;
}

inline EisReport eis_evaluate_length(std::span<const EisPair> pairs) {
  if (pairs.empty()) throw ValidationError("eis_evaluate_length: no pairs");
  EisReport rep;
  std::size_t correct = 0;
  for (const auto& p : pairs) {
    if (utf8_length(trim(p.s1)) == utf8_length(trim(p.s2))) ++rep.ties;
    if (length_baseline(p) == p.gold_more_implicit) ++correct;
  }
  rep.pairs = pairs.size();
  rep.accuracy = static_cast<double>(correct) / static_cast<double>(pairs.size());
  return rep;
}

}  // namespace dualcse
