#pragma once

// Brute-force reference for dual_loss. Written directly from the per-variant
// formulas with scalar loops; it deliberately shares no helpers with
// objective.hpp beyond the BatchEmbeddings container. Intended for N <= 8.

#include <cmath>
#include <cstddef>
#include <vector>

#include "dualcse/error.hpp"
#include "dualcse/objective.hpp"

namespace dualcse::oracle {

namespace detail {

using Vec = std::vector<double>;

inline Vec row(const Eigen::MatrixXd& m, Eigen::Index i) {
  Vec v(static_cast<std::size_t>(m.cols()));
  for (Eigen::Index k = 0; k < m.cols(); ++k) v[static_cast<std::size_t>(k)] = m(i, k);
  return v;
}

inline double scalar_cos(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) throw ValidationError("oracle: dimension mismatch");
  long double dot = 0, aa = 0, bb = 0;
  for (std::size_t k = a.size(); k-- > 0;) {
    dot += static_cast<long double>(a[k]) * b[k];
    aa += static_cast<long double>(a[k]) * a[k];
    bb += static_cast<long double>(b[k]) * b[k];
  }
  if (aa == 0 || bb == 0) throw ValidationError("oracle: zero vector");
  return static_cast<double>(dot / std::sqrt(aa * bb));
}

}  // namespace detail

inline double oracle_dual_loss(const BatchEmbeddings& batch, double tau, LossVariant variant) {
  using detail::Vec;
  const Eigen::Index n = batch.roles[0].rows();
  if (n < 1) throw ValidationError("oracle: empty batch");
  if (!(tau > 0)) throw ConfigError("oracle: tau must be positive");
  for (const auto& m : batch.roles) {
    if (m.rows() != n || m.cols() != batch.roles[0].cols()) throw ValidationError("oracle: dimension mismatch");
  }

  std::vector<Vec> r, u, r1, u1, r2, u2, rn, un;
  for (Eigen::Index i = 0; i < n; ++i) {
    r.push_back(detail::row(batch[Role::kPremiseR], i));
    u.push_back(detail::row(batch[Role::kPremiseU], i));
    r1.push_back(detail::row(batch[Role::kExplicitR], i));
    u1.push_back(detail::row(batch[Role::kExplicitU], i));
    r2.push_back(detail::row(batch[Role::kImpliedR], i));
    u2.push_back(detail::row(batch[Role::kImpliedU], i));
    rn.push_back(detail::row(batch[Role::kContradictionR], i));
    un.push_back(detail::row(batch[Role::kContradictionU], i));
  }
  auto v = [tau](const Vec& a, const Vec& b) { return std::exp(static_cast<long double>(detail::scalar_cos(a, b)) / tau); };

  const bool full = variant == LossVariant::kFull;
  const bool no_con = variant == LossVariant::kNoContradiction;
  const bool no_intra = variant == LossVariant::kNoIntra;

  long double sum_l = 0;
  for (Eigen::Index ii = n; ii-- > 0;) {
    const auto i = static_cast<std::size_t>(ii);
    long double d1 = 0, d2 = 0, d3 = 0, d4 = 0, d5 = 0;
    for (Eigen::Index jj = n; jj-- > 0;) {
      const auto j = static_cast<std::size_t>(jj);
      d1 += v(r[i], r1[j]);
      d2 += v(u[i], r2[j]);
      if (full || no_intra) {
        d1 += v(r[i], rn[j]);
        d2 += v(u[i], rn[j]);
      }
      if (full || no_con) {
        d1 += v(r[i], u[j]);
        d2 += v(u[i], r[j]);
        d3 += v(r1[i], u1[j]);
        d4 += v(r2[i], u2[j]);
      }
      if (full) d5 += v(rn[i], un[j]);
    }
    long double l = -std::log(v(r[i], r1[i]) / d1) - std::log(v(u[i], r2[i]) / d2);
    if (full || no_con) {
      l += -std::log(v(r1[i], u1[i]) / d3) - std::log(v(r2[i], u2[i]) / d4);
    }
    if (full) l += -std::log(v(rn[i], un[i]) / d5);
    sum_l += l;
  }
  return static_cast<double>(sum_l / static_cast<long double>(n));
}

}  // namespace dualcse::oracle
