#pragma once

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "dualcse/error.hpp"
#include "dualcse/util.hpp"

namespace dualcse {

inline constexpr std::string_view kPadToken = "[PAD]";
inline constexpr std::string_view kUnkToken = "[UNK]";
inline constexpr std::string_view kClsToken = "[CLS]";
inline constexpr std::string_view kSepToken = "[SEP]";

// Lowercases ASCII and splits on whitespace; ASCII punctuation becomes its own token.
inline std::vector<std::string> basic_tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      flush();
    } else if (c < 0x80 && std::ispunct(c)) {
      flush();
      out.emplace_back(1, ch);
    } else {
      cur.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
    }
  }
  flush();
  return out;
}

// Word-level vocabulary. Ids 0..3 are [PAD], [UNK], [CLS], [SEP].
class Vocabulary {
 public:
  Vocabulary() {
    for (auto t : {kPadToken, kUnkToken, kClsToken, kSepToken}) add(std::string(t));
  }

  explicit Vocabulary(const std::vector<std::string>& tokens) {
    if (tokens.size() < 4 || tokens[0] != kPadToken || tokens[1] != kUnkToken || tokens[2] != kClsToken ||
        tokens[3] != kSepToken) {
      throw CheckpointError("vocabulary must start with [PAD] [UNK] [CLS] [SEP]");
    }
    for (const auto& t : tokens) {
      if (index_.count(t)) throw CheckpointError("duplicate vocabulary entry: " + t);
      add(t);
    }
  }

  // Words from `texts`, most frequent first (ties lexicographic), plus `extra`
  // words that must always be present. max_size = 0 means unbounded.
  static Vocabulary build(const std::vector<std::string>& texts, const std::vector<std::string>& extra,
                          std::size_t max_size = 0) {
    std::map<std::string, std::size_t> counts;
    for (const auto& t : texts) {
      for (auto& w : basic_tokenize(t)) ++counts[w];
    }
    std::vector<std::pair<std::string, std::size_t>> sorted(counts.begin(), counts.end());
    std::stable_sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    Vocabulary v;
    for (const auto& e : extra) {
      if (!v.contains(e)) v.add(e);
    }
    for (const auto& [w, n] : sorted) {
      if (max_size != 0 && v.size() >= max_size) break;
      if (!v.contains(w)) v.add(w);
    }
    return v;
  }

  std::size_t size() const { return tokens_.size(); }
  bool contains(const std::string& t) const { return index_.count(t) != 0; }
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  int id(const std::string& t) const {
    auto it = index_.find(t);
    return it == index_.end() ? unk_id() : it->second;
  }

  int pad_id() const { return 0; }
  int unk_id() const { return 1; }
  int cls_id() const { return 2; }
  int sep_id() const { return 3; }

  std::vector<int> encode_words(std::string_view text) const {
    std::vector<int> ids;
    for (const auto& w : basic_tokenize(text)) ids.push_back(id(w));
    return ids;
  }

  void save(const std::filesystem::path& path) const {
    std::string out;
    for (const auto& t : tokens_) out += t + "\n";
    write_file(path, out);
  }

  static Vocabulary load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw CheckpointError("cannot open vocabulary " + path.string());
    std::vector<std::string> tokens;
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      tokens.push_back(line);
    }
    return Vocabulary(tokens);
  }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  void add(std::string t) {
    index_.emplace(t, static_cast<int>(tokens_.size()));
    tokens_.push_back(std::move(t));
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace dualcse
