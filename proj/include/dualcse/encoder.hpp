#pragma once

// Sentence -> (view-conditioned) embedding. Two architectures:
//   cross: one tower, input "[CLS] s [SEP] <view word>"
//   bi:    one tower per view, input "[CLS] s [SEP]"
// Both pool the final-layer hidden state at the CLS position.

#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "dualcse/autograd.hpp"
#include "dualcse/error.hpp"
#include "dualcse/tokenizer.hpp"
#include "dualcse/transformer.hpp"
#include "dualcse/util.hpp"
#include "json.hpp"

namespace dualcse {

using Vector = Eigen::VectorXd;

enum class Architecture { kCross, kBi };
enum class BackboneKind { kToy, kExternal };
enum class View { kExplicit, kImplicit };

NLOHMANN_JSON_SERIALIZE_ENUM(Architecture, {{Architecture::kCross, "cross"}, {Architecture::kBi, "bi"}})
NLOHMANN_JSON_SERIALIZE_ENUM(BackboneKind, {{BackboneKind::kToy, "toy"}, {BackboneKind::kExternal, "external"}})
NLOHMANN_JSON_SERIALIZE_ENUM(View, {{View::kExplicit, "explicit"}, {View::kImplicit, "implicit"}})

inline std::string_view view_word(View v) { return v == View::kExplicit ? "explicit" : "implicit"; }

inline View parse_view(std::string_view s) {
  if (s == "explicit") return View::kExplicit;
  if (s == "implicit") return View::kImplicit;
  throw ConfigError("unknown view: " + std::string(s));
}

inline Architecture parse_architecture(std::string_view s) {
  if (s == "cross") return Architecture::kCross;
  if (s == "bi") return Architecture::kBi;
  throw ConfigError("unknown architecture: " + std::string(s));
}

struct ToyConfig {
  int layers = 2;
  int heads = 4;
  int hidden = 64;
  int ffn = 128;

  friend bool operator==(const ToyConfig&, const ToyConfig&) = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(ToyConfig, layers, heads, hidden, ffn)

struct EncoderSpec {
  Architecture architecture = Architecture::kCross;
  BackboneKind backbone = BackboneKind::kToy;
  int embedding_dim = 64;
  int max_sequence_length = 32;
  ToyConfig toy;
  std::string external_locator;  // checkpoint directory when backbone = external

  void validate() const {
    if (embedding_dim <= 0) throw ConfigError("embedding_dim must be positive");
    if (max_sequence_length < 4) throw ConfigError("max_sequence_length must be at least 4");
    if (backbone == BackboneKind::kToy && toy.hidden != embedding_dim) {
      throw ConfigError("toy hidden size " + std::to_string(toy.hidden) + " differs from embedding_dim " +
                        std::to_string(embedding_dim));
    }
    if (backbone == BackboneKind::kExternal && external_locator.empty()) {
      throw ConfigError("external backbone requires a locator");
    }
  }

  friend bool operator==(const EncoderSpec&, const EncoderSpec&) = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(EncoderSpec, architecture, backbone, embedding_dim,
                                                max_sequence_length, toy, external_locator)

// Explicit-view (r) and implicit-view (u) embeddings of one sentence.
struct DualEmbedding {
  Vector r;
  Vector u;
};

struct Encoded {
  Vector embedding;
  bool truncated = false;
};

struct TokenizedInput {
  std::vector<int> ids;
  bool truncated = false;
};

// Row 0 of the hidden-state matrix.
inline Vector pool_cls(const Eigen::MatrixXd& hidden_states) {
  if (hidden_states.rows() < 1) throw Error("pool_cls: empty sequence");
  return hidden_states.row(0).transpose();
}

// A single pretrained tower plus its vocabulary, as loaded from a checkpoint.
struct Backbone {
  TransformerConfig config;
  Vocabulary vocab;
  ParamStore tower;  // parameter names without tower prefix
};

namespace detail {

inline constexpr char kParamsMagic[8] = {'D', 'C', 'S', 'E', 'P', 'R', 'M', '1'};
inline constexpr int kCheckpointVersion = 1;

inline std::string serialize_params(const ParamStore& store) {
  std::string out(kParamsMagic, sizeof(kParamsMagic));
  auto put = [&](const void* p, std::size_t n) { out.append(static_cast<const char*>(p), n); };
  const std::uint64_t count = store.size();
  put(&count, sizeof(count));
  for (const auto& [name, param] : store) {
    const auto len = static_cast<std::uint32_t>(name.size());
    put(&len, sizeof(len));
    put(name.data(), name.size());
    const std::uint64_t rows = static_cast<std::uint64_t>(param.value.rows());
    const std::uint64_t cols = static_cast<std::uint64_t>(param.value.cols());
    put(&rows, sizeof(rows));
    put(&cols, sizeof(cols));
    put(param.value.data(), static_cast<std::size_t>(param.value.size()) * sizeof(double));
  }
  return out;
}

inline ParamStore deserialize_params(std::string_view bytes) {
  std::size_t at = 0;
  auto take = [&](void* dst, std::size_t n) {
    if (bytes.size() - at < n) throw CheckpointError("parameter file truncated");
    std::memcpy(dst, bytes.data() + at, n);
    at += n;
  };
  char magic[8];
  take(magic, sizeof(magic));
  if (std::memcmp(magic, kParamsMagic, sizeof(magic)) != 0) throw CheckpointError("bad parameter file magic");
  std::uint64_t count = 0;
  take(&count, sizeof(count));
  ParamStore store;
  for (std::uint64_t i = 0; i < count; ++i) {
    std::uint32_t len = 0;
    take(&len, sizeof(len));
    if (len > 4096) throw CheckpointError("parameter name too long");
    std::string name(len, '\0');
    take(name.data(), len);
    std::uint64_t rows = 0, cols = 0;
    take(&rows, sizeof(rows));
    take(&cols, sizeof(cols));
    if (rows > (1u << 24) || cols > (1u << 24)) throw CheckpointError("implausible tensor shape for " + name);
    ad::Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    take(m.data(), static_cast<std::size_t>(m.size()) * sizeof(double));
    store.emplace(std::move(name), ad::Parameter(std::move(m)));
  }
  if (at != bytes.size()) throw CheckpointError("trailing bytes in parameter file");
  return store;
}

struct Container {
  std::string kind;
  json spec;
  ParamStore params;
  Vocabulary vocab;
};

inline void write_container(const std::filesystem::path& dir, const std::string& kind, const json& spec,
                            const ParamStore& params, const Vocabulary& vocab) {
  std::filesystem::create_directories(dir);
  const std::string blob = serialize_params(params);
  Fnv1a h;
  h.update(blob);
  write_file(dir / "spec.json", spec.dump(2) + "\n");
  write_file(dir / "params.bin", blob);
  vocab.save(dir / "vocab.txt");
  json manifest{{"format", "dualcse-checkpoint"},
                {"version", kCheckpointVersion},
                {"kind", kind},
                {"files", {{"spec", "spec.json"}, {"params", "params.bin"}, {"vocab", "vocab.txt"}}},
                {"params_bytes", blob.size()},
                {"params_fnv1a", h.hex()}};
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

inline Container read_container(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw CheckpointError("checkpoint not found: " + dir.string());
  try {
    const json manifest = json::parse(read_file(dir / "manifest.json"));
    if (manifest.value("format", "") != "dualcse-checkpoint") throw CheckpointError("not a dualcse checkpoint");
    if (manifest.value("version", -1) != kCheckpointVersion) {
      throw CheckpointError("unsupported checkpoint version " + manifest.value("version", json()).dump());
    }
    const auto& files = manifest.at("files");
    const std::string blob = read_file(dir / files.at("params").get<std::string>());
    Fnv1a h;
    h.update(blob);
    if (blob.size() != manifest.at("params_bytes").get<std::size_t>() ||
        h.hex() != manifest.at("params_fnv1a").get<std::string>()) {
      throw CheckpointError("parameter file does not match manifest checksum");
    }
    Container c{manifest.at("kind").get<std::string>(),
                json::parse(read_file(dir / files.at("spec").get<std::string>())), deserialize_params(blob),
                Vocabulary::load(dir / files.at("vocab").get<std::string>())};
    return c;
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::exception& e) {
    throw CheckpointError("cannot read checkpoint " + dir.string() + ": " + e.what());
  }
}

inline ParamStore extract_tower(const ParamStore& store, const std::string& prefix) {
  ParamStore tower;
  for (const auto& [name, p] : store) {
    if (name.rfind(prefix, 0) == 0) tower.emplace(name.substr(prefix.size()), p);
  }
  return tower;
}

}  // namespace detail

// Resolves a relative locator against $DUALCSE_HOME when it does not exist as given.
inline std::filesystem::path resolve_locator(const std::string& locator) {
  std::filesystem::path p(locator);
  if (std::filesystem::exists(p) || p.is_absolute()) return p;
  if (const char* home = std::getenv("DUALCSE_HOME"); home != nullptr && *home != '\0') {
    return std::filesystem::path(home) / p;
  }
  return p;
}

inline void save_backbone(const Backbone& b, const std::filesystem::path& dir) {
  detail::write_container(dir, "backbone", json{{"transformer", b.config}}, b.tower, b.vocab);
}

// Loads a transformer tower from a checkpoint directory. Encoder checkpoints
// are accepted too: the shared (cross) or explicit (bi) tower is taken.
inline Backbone load_external_backbone(const std::string& locator, std::optional<int> expected_hidden = {}) {
  const auto dir = resolve_locator(locator);
  if (!std::filesystem::exists(dir)) throw CheckpointError("cannot resolve backbone locator: " + locator);
  detail::Container c = detail::read_container(dir);
  Backbone b{c.spec.at("transformer").get<TransformerConfig>(), std::move(c.vocab), {}};
  if (c.kind == "backbone") {
    b.tower = std::move(c.params);
  } else if (c.kind == "encoder") {
    const auto arch = c.spec.at("encoder").at("architecture").get<Architecture>();
    b.tower = detail::extract_tower(c.params, arch == Architecture::kCross ? "shared." : "explicit.");
  } else {
    throw CheckpointError("unknown checkpoint kind: " + c.kind);
  }
  if (b.config.vocab_size != static_cast<int>(b.vocab.size())) {
    throw CheckpointError("checkpoint vocabulary size does not match its transformer config");
  }
  if (expected_hidden && *expected_hidden != b.config.hidden) {
    throw ConfigError("backbone hidden size " + std::to_string(b.config.hidden) + " does not match spec dim " +
                      std::to_string(*expected_hidden));
  }
  return b;
}

class Encoder {
 public:
  // Fresh toy backbone. Bi-encoder towers start from identical weights.
  static Encoder create_toy(const EncoderSpec& spec, Vocabulary vocab, std::uint64_t seed) {
    spec.validate();
    if (spec.backbone != BackboneKind::kToy) throw ConfigError("create_toy requires backbone = toy");
    TransformerConfig cfg;
    cfg.layers = spec.toy.layers;
    cfg.heads = spec.toy.heads;
    cfg.hidden = spec.toy.hidden;
    cfg.ffn = spec.toy.ffn;
    cfg.max_positions = spec.max_sequence_length;
    cfg.vocab_size = static_cast<int>(vocab.size());
    std::mt19937_64 rng(seed);
    ParamStore tower;
    init_tower(tower, "", cfg, rng);
    return Encoder(spec, cfg, std::move(vocab), tower);
  }

  static Encoder from_backbone(const EncoderSpec& spec, const Backbone& backbone) {
    spec.validate();
    if (backbone.config.hidden != spec.embedding_dim) {
      throw ConfigError("backbone hidden size " + std::to_string(backbone.config.hidden) +
                        " does not match spec embedding_dim " + std::to_string(spec.embedding_dim));
    }
    if (spec.max_sequence_length > backbone.config.max_positions) {
      throw ConfigError("max_sequence_length exceeds the backbone's position table");
    }
    return Encoder(spec, backbone.config, backbone.vocab, backbone.tower);
  }

  static Encoder create(const EncoderSpec& spec, Vocabulary vocab, std::uint64_t seed) {
    if (spec.backbone == BackboneKind::kToy) return create_toy(spec, std::move(vocab), seed);
    return from_backbone(spec, load_external_backbone(spec.external_locator, spec.embedding_dim));
  }

  const EncoderSpec& spec() const { return spec_; }
  const TransformerConfig& transformer() const { return config_; }
  const Vocabulary& vocab() const { return vocab_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  int dim() const { return spec_.embedding_dim; }

  std::string tower_prefix(View view) const {
    if (spec_.architecture == Architecture::kCross) return "shared.";
    return view == View::kExplicit ? "explicit." : "implicit.";
  }

  // Token ids fed to the tower. Sentence words are truncated from the tail so
  // that CLS, SEP and the view suffix always survive.
  TokenizedInput tokenize(std::string_view sentence, View view) const {
    std::vector<int> words = vocab_.encode_words(sentence);
    std::vector<int> suffix{vocab_.sep_id()};
    if (spec_.architecture == Architecture::kCross) {
      for (int id : vocab_.encode_words(view_word(view))) suffix.push_back(id);
    }
    const std::size_t budget = static_cast<std::size_t>(spec_.max_sequence_length) - 1 - suffix.size();
    TokenizedInput in;
    if (words.size() > budget) {
      words.resize(budget);
      in.truncated = true;
    }
    in.ids.reserve(1 + words.size() + suffix.size());
    in.ids.push_back(vocab_.cls_id());
    in.ids.insert(in.ids.end(), words.begin(), words.end());
    in.ids.insert(in.ids.end(), suffix.begin(), suffix.end());
    return in;
  }

  // Full final-layer hidden states (sequence x hidden).
  Eigen::MatrixXd hidden_states(std::string_view sentence, View view) const {
    ad::Tape tape(false);
    const auto in = tokenize(sentence, view);
    // An inference tape never writes to parameter gradients.
    auto& params = const_cast<ParamStore&>(params_);
    return tape.value(tower_forward(tape, params, tower_prefix(view), config_, in.ids));
  }

  Encoded encode(std::string_view sentence, View view) const {
    ad::Tape tape(false);
    const auto in = tokenize(sentence, view);
    auto& params = const_cast<ParamStore&>(params_);
    ad::Var h = tower_forward(tape, params, tower_prefix(view), config_, in.ids);
    return {pool_cls(tape.value(h)), in.truncated};
  }

  DualEmbedding encode_dual(std::string_view sentence) const {
    return {encode(sentence, View::kExplicit).embedding, encode(sentence, View::kImplicit).embedding};
  }

  // Differentiable CLS embedding (1 x dim) on a recording tape.
  ad::Var forward(ad::Tape& tape, std::string_view sentence, View view) {
    const auto in = tokenize(sentence, view);
    return tape.row(tower_forward(tape, params_, tower_prefix(view), config_, in.ids), 0);
  }

  void zero_grad() {
    for (auto& [_, p] : params_) p.zero_grad();
  }

  void save(const std::filesystem::path& dir) const {
    detail::write_container(dir, "encoder", json{{"encoder", spec_}, {"transformer", config_}}, params_, vocab_);
  }

  // Loads an encoder checkpoint. If `expected` is given, its spec must match the stored one.
  static Encoder load(const std::filesystem::path& dir, const std::optional<EncoderSpec>& expected = {}) {
    detail::Container c = detail::read_container(dir);
    if (c.kind != "encoder") throw CheckpointError("checkpoint kind is '" + c.kind + "', expected 'encoder'");
    EncoderSpec spec;
    TransformerConfig cfg;
    try {
      spec = c.spec.at("encoder").get<EncoderSpec>();
      cfg = c.spec.at("transformer").get<TransformerConfig>();
    } catch (const json::exception& e) {
      throw CheckpointError(std::string("malformed checkpoint spec: ") + e.what());
    }
    if (expected && !(*expected == spec)) {
      throw ConfigError("checkpoint encoder spec does not match the requested spec");
    }
    Encoder enc(spec, cfg, std::move(c.vocab));
    enc.params_ = std::move(c.params);
    enc.check_params();
    return enc;
  }

  Backbone export_backbone(View view = View::kExplicit) const {
    return {config_, vocab_, detail::extract_tower(params_, tower_prefix(view))};
  }

 private:
  Encoder(EncoderSpec spec, TransformerConfig cfg, Vocabulary vocab)
      : spec_(std::move(spec)), config_(cfg), vocab_(std::move(vocab)) {
    if (!vocab_.contains("explicit") || !vocab_.contains("implicit")) {
      throw ConfigError("vocabulary must contain the view words 'explicit' and 'implicit'");
    }
    if (config_.vocab_size != static_cast<int>(vocab_.size())) {
      throw ConfigError("vocabulary size does not match the transformer config");
    }
    if (spec_.max_sequence_length > config_.max_positions) {
      throw ConfigError("max_sequence_length exceeds the position table");
    }
  }

  Encoder(EncoderSpec spec, TransformerConfig cfg, Vocabulary vocab, const ParamStore& tower)
      : Encoder(std::move(spec), cfg, std::move(vocab)) {
    const std::vector<std::string> prefixes = spec_.architecture == Architecture::kCross
                                                  ? std::vector<std::string>{"shared."}
                                                  : std::vector<std::string>{"explicit.", "implicit."};
    for (const auto& prefix : prefixes) {
      for (const auto& [name, p] : tower) params_.emplace(prefix + name, ad::Parameter(p.value));
    }
    check_params();
  }

  // Every tower must carry exactly the tensors init_tower would create, at the same shapes.
  void check_params() const {
    ParamStore reference;
    std::mt19937_64 rng(0);
    const TransformerConfig& cfg = config_;
    for (View v : {View::kExplicit, View::kImplicit}) {
      if (!reference.count(tower_prefix(v) + "embeddings.token")) init_tower(reference, tower_prefix(v), cfg, rng);
    }
    if (reference.size() != params_.size()) throw CheckpointError("parameter set does not match the architecture");
    for (const auto& [name, ref] : reference) {
      auto it = params_.find(name);
      if (it == params_.end()) throw CheckpointError("missing parameter " + name);
      if (it->second.value.rows() != ref.value.rows() || it->second.value.cols() != ref.value.cols()) {
        throw CheckpointError("shape mismatch for parameter " + name);
      }
    }
  }

  EncoderSpec spec_;
  TransformerConfig config_;
  Vocabulary vocab_;
  ParamStore params_;
};

// Vocabulary over the training split plus the view words.
template <typename Split>
Vocabulary build_vocabulary(const Split& split, std::size_t max_size = 0) {
  std::vector<std::string> texts;
  for (const auto& s : split.samples()) {
    texts.push_back(s.premise);
    texts.push_back(s.explicit_entailment);
    texts.push_back(s.implied_entailment);
    texts.push_back(s.neutral);
    texts.push_back(s.contradiction);
  }
  return Vocabulary::build(texts, {"explicit", "implicit"}, max_size);
}

}  // namespace dualcse
