#pragma once

// Exact (flat) cosine retrieval over hypothesis embeddings. The index stores
// each entry's explicit-view vector; a query is embedded under the requested
// view, so the explicit and implicit result lists differ only on the query side.

#include <algorithm>
#include <numeric>
#include <optional>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "dualcse/corpus.hpp"
#include "dualcse/encoder.hpp"
#include "dualcse/error.hpp"
#include "dualcse/objective.hpp"
#include "dualcse/util.hpp"
#include "json.hpp"

namespace dualcse {

struct IndexEntry {
  std::string id;
  std::string text;
  Vector r;
  std::optional<Vector> u;  // only with store_implicit
};

struct DualIndex {
  std::vector<IndexEntry> entries;
  std::string fingerprint;  // FNV-1a over "id\ttext\n" of every entry, in order
  int embedding_dim = 0;

  std::size_t size() const { return entries.size(); }
};

struct RetrievalHit {
  std::size_t rank = 0;  // 1-based
  std::string id;
  std::string text;
  double score = 0.0;
};

struct RetrievalResult {
  std::string query;
  View view = View::kExplicit;
  std::vector<RetrievalHit> hits;
};

inline std::string corpus_fingerprint(const std::vector<std::pair<std::string, std::string>>& sentences) {
  Fnv1a h;
  for (const auto& [id, text] : sentences) {
    h.update(id);
    h.update("\t");
    h.update(text);
    h.update("\n");
  }
  return h.hex();
}

template <typename Model>
DualIndex build_index(const std::vector<std::pair<std::string, std::string>>& sentences, const Model& model,
                      bool store_implicit = false) {
  if (sentences.empty()) throw ValidationError("build_index: no sentences");
  std::unordered_set<std::string> ids;
  DualIndex index;
  index.embedding_dim = model.dim();
  index.entries.reserve(sentences.size());
  for (const auto& [id, text] : sentences) {
    if (!ids.insert(id).second) throw ValidationError("build_index: duplicate id '" + id + "'");
    IndexEntry e{id, text, model.encode(text, View::kExplicit).embedding, std::nullopt};
    if (store_implicit) e.u = model.encode(text, View::kImplicit).embedding;
    index.entries.push_back(std::move(e));
  }
  index.fingerprint = corpus_fingerprint(sentences);
  return index;
}

// Ranks entries by cosine to `query_vec`; ties keep index order.
inline std::vector<RetrievalHit> rank_entries(const DualIndex& index, const Vector& query_vec, std::size_t k,
                                              View index_view = View::kExplicit) {
  if (index.entries.empty()) throw ValidationError("query: empty index");
  if (k < 1) throw ConfigError("query: k must be >= 1");
  if (query_vec.size() != index.embedding_dim) throw ValidationError("query: embedding dimension mismatch");
  std::vector<double> scores(index.size());
  for (std::size_t e = 0; e < index.size(); ++e) {
    const auto& entry = index.entries[e];
    if (index_view == View::kImplicit && !entry.u) throw ConfigError("index does not store implicit-view vectors");
    scores[e] = cosine(query_vec, index_view == View::kExplicit ? entry.r : *entry.u);
  }
  std::vector<std::size_t> order(index.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t top = std::min(k, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(top), order.end(),
                    [&](std::size_t a, std::size_t b) { return scores[a] > scores[b] || (scores[a] == scores[b] && a < b); });
  std::vector<RetrievalHit> hits;
  hits.reserve(top);
  for (std::size_t r = 0; r < top; ++r) {
    const auto& entry = index.entries[order[r]];
    hits.push_back({r + 1, entry.id, entry.text, scores[order[r]]});
  }
  return hits;
}

template <typename Model>
RetrievalResult query(const DualIndex& index, const std::string& sentence, View view, std::size_t k, const Model& model) {
  if (model.dim() != index.embedding_dim) throw ValidationError("query: model dimension differs from index");
  if (index.entries.empty()) throw ValidationError("query: empty index");
  return {sentence, view, rank_entries(index, model.encode(sentence, view).embedding, k)};
}

inline json to_json(const RetrievalResult& r) {
  json hits = json::array();
  for (const auto& h : r.hits) hits.push_back({{"rank", h.rank}, {"id", h.id}, {"text", h.text}, {"score", h.score}});
  return json{{"query", r.query}, {"view", r.view}, {"hits", hits}};
}

enum class RetrievalPool { kAllHypotheses, kEntailmentsOnly };

// Hypotheses of a split as (id, text); ids are "<sample id>:<field>".
// Identical texts under different ids are kept as separate entries.
inline std::vector<std::pair<std::string, std::string>> hypothesis_pool(const DatasetSplit& split,
                                                                        RetrievalPool pool = RetrievalPool::kAllHypotheses) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& s : split.samples()) {
    for (Origin o : kOrigins) {
      if (pool == RetrievalPool::kEntailmentsOnly && gold_label(o) != RteLabel::kEntailment) continue;
      out.emplace_back(s.id + ":" + std::string(to_string(o)), hypothesis(s, o));
    }
  }
  return out;
}

}  // namespace dualcse
