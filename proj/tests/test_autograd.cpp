#include <gtest/gtest.h>

#include <functional>
#include <numeric>
#include <random>

#include "dualcse/autograd.hpp"
#include "dualcse/transformer.hpp"

using namespace dualcse;
using ad::Matrix;
using ad::Parameter;
using ad::Tape;
using ad::Var;

namespace {

Matrix random_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

// Parameter rows as a tape variable (embedding lookup of 0..rows-1).
Var leaf(Tape& t, Parameter& p) {
  std::vector<int> ids(static_cast<std::size_t>(p.value.rows()));
  std::iota(ids.begin(), ids.end(), 0);
  return t.embed(p, ids);
}

using Graph = std::function<Var(Tape&, std::vector<Parameter>&)>;

// Checks d(sum(C .* f))/dp against central differences for every entry of every parameter.
void check_gradients(std::vector<Parameter> params, const Graph& f, double tol = 1e-6) {
  std::mt19937_64 rng(42);
  Matrix weights;
  {
    Tape t;
    Var out = f(t, params);
    weights = random_matrix(rng, t.value(out).rows(), t.value(out).cols());
  }
  auto objective = [&] {
    Tape t(false);
    return (t.value(f(t, params)).array() * weights.array()).sum();
  };
  for (auto& p : params) p.zero_grad();
  {
    Tape t;
    Var out = f(t, params);
    t.seed(out, weights);
    t.backward();
  }
  const double h = 1e-5;
  for (std::size_t k = 0; k < params.size(); ++k) {
    for (Eigen::Index i = 0; i < params[k].value.size(); ++i) {
      double& x = params[k].value.data()[i];
      const double orig = x;
      x = orig + h;
      const double up = objective();
      x = orig - h;
      const double down = objective();
      x = orig;
      const double fd = (up - down) / (2 * h);
      const double an = params[k].grad.data()[i];
      EXPECT_NEAR(an, fd, tol * std::max(1.0, std::abs(fd))) << "param " << k << " entry " << i;
    }
  }
}

std::vector<Parameter> make_params(std::initializer_list<std::pair<int, int>> shapes, std::uint64_t seed = 1) {
  std::mt19937_64 rng(seed);
  std::vector<Parameter> out;
  for (auto [r, c] : shapes) out.emplace_back(random_matrix(rng, r, c));
  return out;
}

}  // namespace

TEST(Autograd, Add) {
  check_gradients(make_params({{3, 4}, {3, 4}}), [](Tape& t, auto& p) { return t.add(leaf(t, p[0]), leaf(t, p[1])); });
}

TEST(Autograd, Linear) {
  check_gradients(make_params({{3, 4}, {4, 5}, {1, 5}}),
                  [](Tape& t, auto& p) { return t.linear(leaf(t, p[0]), p[1], p[2]); });
}

TEST(Autograd, MatmulAndTransposed) {
  check_gradients(make_params({{3, 4}, {4, 2}}), [](Tape& t, auto& p) { return t.matmul(leaf(t, p[0]), leaf(t, p[1])); });
  check_gradients(make_params({{3, 4}, {5, 4}}),
                  [](Tape& t, auto& p) { return t.matmul_nt(leaf(t, p[0]), leaf(t, p[1])); });
}

TEST(Autograd, ScaleAndSoftmax) {
  check_gradients(make_params({{3, 5}}), [](Tape& t, auto& p) { return t.softmax_rows(t.scale(leaf(t, p[0]), 0.7)); });
}

TEST(Autograd, SoftmaxRowsSumToOne) {
  Tape t(false);
  Var s = t.softmax_rows(t.constant(Matrix::Random(4, 6) * 50));
  for (Eigen::Index r = 0; r < 4; ++r) EXPECT_NEAR(t.value(s).row(r).sum(), 1.0, 1e-12);
}

TEST(Autograd, LayerNorm) {
  check_gradients(make_params({{3, 6}, {1, 6}, {1, 6}}),
                  [](Tape& t, auto& p) { return t.layer_norm(leaf(t, p[0]), p[1], p[2], 1e-5); }, 1e-5);
}

TEST(Autograd, Gelu) {
  check_gradients(make_params({{4, 3}}), [](Tape& t, auto& p) { return t.gelu(leaf(t, p[0])); });
}

TEST(Autograd, ColsHcatRow) {
  check_gradients(make_params({{3, 6}}), [](Tape& t, auto& p) {
    Var x = leaf(t, p[0]);
    std::vector<Var> parts{t.cols(x, 4, 2), t.cols(x, 0, 3)};
    return t.row(t.hcat(parts), 1);
  });
}

TEST(Autograd, EmbedRepeatedIdsAccumulate) {
  Parameter table(Matrix::Ones(3, 2));
  Tape t;
  std::vector<int> ids{1, 1, 2};
  Var e = t.embed(table, ids);
  t.seed(e, Matrix::Ones(3, 2));
  t.backward();
  EXPECT_EQ(table.grad(0, 0), 0.0);
  EXPECT_EQ(table.grad(1, 0), 2.0);
  EXPECT_EQ(table.grad(2, 1), 1.0);
}

TEST(Autograd, TowerForwardGradient) {
  TransformerConfig cfg;
  cfg.layers = 1;
  cfg.heads = 2;
  cfg.hidden = 4;
  cfg.ffn = 6;
  cfg.max_positions = 8;
  cfg.vocab_size = 7;
  cfg.layer_norm_eps = 1e-5;
  cfg.init_std = 0.5;
  ParamStore store;
  std::mt19937_64 rng(3);
  init_tower(store, "t.", cfg, rng);
  const std::vector<int> ids{2, 5, 6, 3};
  Matrix weights = Matrix::Random(1, 4);
  auto objective = [&] {
    Tape t(false);
    return (t.value(t.row(tower_forward(t, store, "t.", cfg, ids), 0)).array() * weights.array()).sum();
  };
  for (auto& [_, p] : store) p.zero_grad();
  Tape t;
  Var out = t.row(tower_forward(t, store, "t.", cfg, ids), 0);
  t.seed(out, weights);
  t.backward();
  const double h = 1e-5;
  for (const std::string name : {"t.layer0.attn.q.weight", "t.layer0.ffn.in.weight", "t.embeddings.position",
                                 "t.layer0.ffn.ln.gamma"}) {
    auto& p = store.at(name);
    for (Eigen::Index i = 0; i < std::min<Eigen::Index>(p.value.size(), 12); ++i) {
      double& x = p.value.data()[i];
      const double orig = x;
      x = orig + h;
      const double up = objective();
      x = orig - h;
      const double down = objective();
      x = orig;
      EXPECT_NEAR(p.grad.data()[i], (up - down) / (2 * h), 1e-6) << name << " " << i;
    }
  }
}
