#pragma once

// Dual contrastive objective. Every loss term has the form
//
//   -log( v(a_i, p_i) / sum_{f in families} sum_j v(a_i, f_j) ),   v(x, y) = exp(cos(x, y) / tau)
//
// where the positive p is the j = i entry of one of the families. The full
// objective has five such terms per instance; the ablations drop families or
// whole terms. Terms are described as data (TermTemplate) so the same
// expansion drives both the value and the analytic gradient.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "dualcse/error.hpp"
#include "json.hpp"

namespace dualcse {

enum class LossVariant { kFull, kNoContradiction, kNoIntra, kNeither };

inline constexpr std::array<LossVariant, 4> kLossVariants = {LossVariant::kFull, LossVariant::kNoContradiction,
                                                             LossVariant::kNoIntra, LossVariant::kNeither};

NLOHMANN_JSON_SERIALIZE_ENUM(LossVariant, {{LossVariant::kFull, "full"},
                                           {LossVariant::kNoContradiction, "no_contradiction"},
                                           {LossVariant::kNoIntra, "no_intra"},
                                           {LossVariant::kNeither, "neither"}})

inline std::string_view to_string(LossVariant v) {
  switch (v) {
    case LossVariant::kFull: return "full";
    case LossVariant::kNoContradiction: return "no_contradiction";
    case LossVariant::kNoIntra: return "no_intra";
    case LossVariant::kNeither: return "neither";
  }
  return "?";
}

inline LossVariant parse_loss_variant(std::string_view s) {
  for (LossVariant v : kLossVariants) {
    if (to_string(v) == s) return v;
  }
  throw ConfigError("unknown loss variant: " + std::string(s));
}

class Temperature {
 public:
  explicit Temperature(double tau) : tau_(tau) {
    if (!(tau > 0.0) || !std::isfinite(tau)) throw ConfigError("temperature must be positive and finite");
  }
  double value() const { return tau_; }

 private:
  double tau_;
};

inline constexpr double kDefaultTau = 0.05;

// Which of the eight per-instance embeddings a term refers to.
enum class Role {
  kPremiseR,
  kPremiseU,
  kExplicitR,  // explicit-entailment hypothesis
  kExplicitU,
  kImpliedR,  // implied-entailment hypothesis
  kImpliedU,
  kContradictionR,
  kContradictionU,
};

inline constexpr int kRoleCount = 8;

inline std::string_view to_string(Role r) {
  constexpr std::array<std::string_view, kRoleCount> names = {"r", "u", "r+1", "u+1", "r+2", "u+2", "r-", "u-"};
  return names[static_cast<int>(r)];
}

// Embeddings of one batch: for every role an N x dim matrix, row i = instance i.
struct BatchEmbeddings {
  std::array<Eigen::MatrixXd, kRoleCount> roles;

  Eigen::MatrixXd& operator[](Role r) { return roles[static_cast<int>(r)]; }
  const Eigen::MatrixXd& operator[](Role r) const { return roles[static_cast<int>(r)]; }

  Eigen::Index size() const { return roles[0].rows(); }
  Eigen::Index dim() const { return roles[0].cols(); }

  static BatchEmbeddings zeros(Eigen::Index n, Eigen::Index dim) {
    BatchEmbeddings b;
    for (auto& m : b.roles) m = Eigen::MatrixXd::Zero(n, dim);
    return b;
  }

  void validate() const {
    const Eigen::Index n = roles[0].rows(), d = roles[0].cols();
    if (n < 1) throw ValidationError("empty batch");
    if (d < 1) throw ValidationError("zero-dimensional embeddings");
    for (const auto& m : roles) {
      if (m.rows() != n || m.cols() != d) throw ValidationError("embedding dimension mismatch within batch");
      if (!m.allFinite()) throw ValidationError("non-finite embedding in batch");
      for (Eigen::Index i = 0; i < n; ++i) {
        if (m.row(i).squaredNorm() == 0.0) throw ValidationError("zero embedding in batch");
      }
    }
  }
};

struct TermTemplate {
  Role anchor;
  Role positive;
  std::vector<Role> families;  // contains `positive`; summed over all j
};

// Per-instance term expansion for a loss variant.
inline std::vector<TermTemplate> expand_terms(LossVariant variant) {
  using R = Role;
  const bool contradiction = variant == LossVariant::kFull || variant == LossVariant::kNoIntra;
  const bool intra = variant == LossVariant::kFull || variant == LossVariant::kNoContradiction;

  TermTemplate t1{R::kPremiseR, R::kExplicitR, {R::kExplicitR}};
  TermTemplate t2{R::kPremiseU, R::kImpliedR, {R::kImpliedR}};
  if (contradiction) {
    t1.families.push_back(R::kContradictionR);
    t2.families.push_back(R::kContradictionR);
  }
  if (intra) {
    t1.families.push_back(R::kPremiseU);
    t2.families.push_back(R::kPremiseR);
  }
  std::vector<TermTemplate> terms{t1, t2};
  if (intra) {
    terms.push_back({R::kExplicitR, R::kExplicitU, {R::kExplicitU}});
    terms.push_back({R::kImpliedR, R::kImpliedU, {R::kImpliedU}});
    if (contradiction) terms.push_back({R::kContradictionR, R::kContradictionU, {R::kContradictionU}});
  }
  return terms;
}

inline double cosine(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& b) {
  if (a.size() != b.size()) throw ValidationError("cosine: dimension mismatch");
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) throw ValidationError("cosine: zero vector");
  return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

// exp(cos(h1, h2) / tau)
inline double pair_score(const Eigen::Ref<const Eigen::VectorXd>& h1, const Eigen::Ref<const Eigen::VectorXd>& h2,
                         Temperature tau) {
  return std::exp(cosine(h1, h2) / tau.value());
}

struct LossAndGrad {
  double loss = 0.0;
  BatchEmbeddings grad;  // d loss / d embedding, same layout as the input
};

namespace detail {

// Unclamped cosine of two rows plus the pieces needed for its gradient.
struct RowCosine {
  double value;
  double inv_norm_a;
  double inv_norm_b;
};

inline RowCosine row_cosine(const Eigen::MatrixXd& A, Eigen::Index i, const Eigen::MatrixXd& B, Eigen::Index j) {
  const double na = A.row(i).norm(), nb = B.row(j).norm();
  return {A.row(i).dot(B.row(j)) / (na * nb), 1.0 / na, 1.0 / nb};
}

template <bool kWithGrad>
double evaluate(const BatchEmbeddings& batch, Temperature tau, LossVariant variant, BatchEmbeddings* grad) {
  batch.validate();
  const Eigen::Index n = batch.size();
  const double inv_tau = 1.0 / tau.value();
  const auto terms = expand_terms(variant);

  double total = 0.0;
  std::vector<double> logits;
  std::vector<std::pair<Role, Eigen::Index>> cands;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (const auto& t : terms) {
      const Eigen::MatrixXd& A = batch[t.anchor];
      logits.clear();
      cands.clear();
      std::size_t pos = 0;
      for (Role f : t.families) {
        for (Eigen::Index j = 0; j < n; ++j) {
          if (f == t.positive && j == i) pos = logits.size();
          logits.push_back(row_cosine(A, i, batch[f], j).value * inv_tau);
          cands.emplace_back(f, j);
        }
      }
      double m = -std::numeric_limits<double>::infinity();
      for (double s : logits) m = std::max(m, s);
      double z = 0.0;
      for (double s : logits) z += std::exp(s - m);
      const double lse = m + std::log(z);
      total += lse - logits[pos];

      if constexpr (kWithGrad) {
        // d term / d logit_k = softmax_k - [k == pos]; chain through cos / tau.
        for (std::size_t k = 0; k < logits.size(); ++k) {
          const double w = std::exp(logits[k] - lse) - (k == pos ? 1.0 : 0.0);
          if (w == 0.0) continue;
          const auto [f, j] = cands[k];
          const Eigen::MatrixXd& B = batch[f];
          const RowCosine c = row_cosine(A, i, B, j);
          const double coef = w * inv_tau / static_cast<double>(n);
          (*grad)[t.anchor].row(i) +=
              coef * (B.row(j) * (c.inv_norm_a * c.inv_norm_b) - A.row(i) * (c.value * c.inv_norm_a * c.inv_norm_a));
          (*grad)[f].row(j) +=
              coef * (A.row(i) * (c.inv_norm_a * c.inv_norm_b) - B.row(j) * (c.value * c.inv_norm_b * c.inv_norm_b));
        }
      }
    }
  }
  return total / static_cast<double>(n);
}

}  // namespace detail

// Mean over the batch of the per-instance loss.
inline double dual_loss(const BatchEmbeddings& batch, Temperature tau, LossVariant variant) {
  return detail::evaluate<false>(batch, tau, variant, nullptr);
}

inline LossAndGrad dual_loss_and_grad(const BatchEmbeddings& batch, Temperature tau, LossVariant variant) {
  LossAndGrad out;
  out.grad = BatchEmbeddings::zeros(batch.size(), batch.dim());
  out.loss = detail::evaluate<true>(batch, tau, variant, &out.grad);
  return out;
}

}  // namespace dualcse
