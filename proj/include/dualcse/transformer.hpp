#pragma once

// Post-LayerNorm transformer encoder tower (BERT layout) over the autograd tape.

#include <cmath>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dualcse/autograd.hpp"
#include "dualcse/error.hpp"
#include "json.hpp"

namespace dualcse {

using ParamStore = std::map<std::string, ad::Parameter>;

struct TransformerConfig {
  int layers = 2;
  int heads = 4;
  int hidden = 64;
  int ffn = 128;
  int max_positions = 64;
  int vocab_size = 0;
  double layer_norm_eps = 1e-12;
  double init_std = 0.02;

  void validate() const {
    if (layers < 1 || heads < 1 || hidden < 1 || ffn < 1 || max_positions < 2 || vocab_size < 1) {
      throw ConfigError("transformer config has non-positive dimension");
    }
    if (hidden % heads != 0) throw ConfigError("hidden size must be divisible by the number of heads");
  }

  friend bool operator==(const TransformerConfig&, const TransformerConfig&) = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(TransformerConfig, layers, heads, hidden, ffn, max_positions,
                                                vocab_size, layer_norm_eps, init_std)

namespace detail {

inline std::string layer_key(const std::string& prefix, int layer, const char* name) {
  return prefix + "layer" + std::to_string(layer) + "." + name;
}

}  // namespace detail

// Adds the parameters of one tower under `prefix` (e.g. "shared.").
inline void init_tower(ParamStore& store, const std::string& prefix, const TransformerConfig& cfg,
                       std::mt19937_64& rng) {
  cfg.validate();
  std::normal_distribution<double> normal(0.0, cfg.init_std);
  auto randn = [&](int r, int c) {
    ad::Matrix m(r, c);
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = normal(rng);
    return m;
  };
  auto put = [&](const std::string& key, ad::Matrix m) { store.insert_or_assign(key, ad::Parameter(std::move(m))); };
  const int d = cfg.hidden;
  put(prefix + "embeddings.token", randn(cfg.vocab_size, d));
  put(prefix + "embeddings.position", randn(cfg.max_positions, d));
  put(prefix + "embeddings.ln.gamma", ad::Matrix::Ones(1, d));
  put(prefix + "embeddings.ln.beta", ad::Matrix::Zero(1, d));
  for (int l = 0; l < cfg.layers; ++l) {
    for (const char* w : {"attn.q", "attn.k", "attn.v", "attn.o"}) {
      put(detail::layer_key(prefix, l, w) + ".weight", randn(d, d));
      put(detail::layer_key(prefix, l, w) + ".bias", ad::Matrix::Zero(1, d));
    }
    put(detail::layer_key(prefix, l, "attn.ln.gamma"), ad::Matrix::Ones(1, d));
    put(detail::layer_key(prefix, l, "attn.ln.beta"), ad::Matrix::Zero(1, d));
    put(detail::layer_key(prefix, l, "ffn.in.weight"), randn(d, cfg.ffn));
    put(detail::layer_key(prefix, l, "ffn.in.bias"), ad::Matrix::Zero(1, cfg.ffn));
    put(detail::layer_key(prefix, l, "ffn.out.weight"), randn(cfg.ffn, d));
    put(detail::layer_key(prefix, l, "ffn.out.bias"), ad::Matrix::Zero(1, d));
    put(detail::layer_key(prefix, l, "ffn.ln.gamma"), ad::Matrix::Ones(1, d));
    put(detail::layer_key(prefix, l, "ffn.ln.beta"), ad::Matrix::Zero(1, d));
  }
}

// Final-layer hidden states (sequence x hidden) for token ids.
inline ad::Var tower_forward(ad::Tape& tape, ParamStore& store, const std::string& prefix,
                             const TransformerConfig& cfg, std::span<const int> ids) {
  if (ids.empty()) throw Error("cannot encode an empty token sequence");
  if (static_cast<int>(ids.size()) > cfg.max_positions) throw Error("token sequence exceeds max_positions");
  auto p = [&](const std::string& key) -> ad::Parameter& {
    auto it = store.find(key);
    if (it == store.end()) throw CheckpointError("missing parameter " + key);
    return it->second;
  };
  auto lp = [&](int l, const char* name) -> ad::Parameter& { return p(detail::layer_key(prefix, l, name)); };

  std::vector<int> positions(ids.size());
  for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = static_cast<int>(i);

  ad::Var x = tape.add(tape.embed(p(prefix + "embeddings.token"), ids),
                       tape.embed(p(prefix + "embeddings.position"), positions));
  x = tape.layer_norm(x, p(prefix + "embeddings.ln.gamma"), p(prefix + "embeddings.ln.beta"), cfg.layer_norm_eps);

  const int dh = cfg.hidden / cfg.heads;
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
  for (int l = 0; l < cfg.layers; ++l) {
    ad::Var q = tape.linear(x, lp(l, "attn.q.weight"), lp(l, "attn.q.bias"));
    ad::Var k = tape.linear(x, lp(l, "attn.k.weight"), lp(l, "attn.k.bias"));
    ad::Var v = tape.linear(x, lp(l, "attn.v.weight"), lp(l, "attn.v.bias"));
    std::vector<ad::Var> heads;
    heads.reserve(static_cast<std::size_t>(cfg.heads));
    for (int h = 0; h < cfg.heads; ++h) {
      ad::Var qh = tape.cols(q, h * dh, dh);
      ad::Var kh = tape.cols(k, h * dh, dh);
      ad::Var vh = tape.cols(v, h * dh, dh);
      ad::Var attn = tape.softmax_rows(tape.scale(tape.matmul_nt(qh, kh), inv_sqrt_dh));
      heads.push_back(tape.matmul(attn, vh));
    }
    ad::Var ctx = tape.linear(tape.hcat(heads), lp(l, "attn.o.weight"), lp(l, "attn.o.bias"));
    x = tape.layer_norm(tape.add(x, ctx), lp(l, "attn.ln.gamma"), lp(l, "attn.ln.beta"), cfg.layer_norm_eps);

    ad::Var f = tape.gelu(tape.linear(x, lp(l, "ffn.in.weight"), lp(l, "ffn.in.bias")));
    f = tape.linear(f, lp(l, "ffn.out.weight"), lp(l, "ffn.out.bias"));
    x = tape.layer_norm(tape.add(x, f), lp(l, "ffn.ln.gamma"), lp(l, "ffn.ln.beta"), cfg.layer_norm_eps);
  }
  return x;
}

}  // namespace dualcse
