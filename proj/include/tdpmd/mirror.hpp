#pragma once

#include "tdpmd/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string_view>

namespace tdpmd {

/// Mirror map h generating the Bregman divergence of the proximal step.
enum class MirrorMap {
  Euclidean,   ///< h(p) = 1/2 ||p||^2, projected Q-ascent
  NegEntropy,  ///< h(p) = sum p log p, multiplicative weights
};

inline std::string_view to_string(MirrorMap map) {
  return map == MirrorMap::Euclidean ? "euclidean" : "neg_entropy";
}

inline MirrorMap mirror_map_from_string(std::string_view name) {
  if (name == "euclidean") return MirrorMap::Euclidean;
  if (name == "neg_entropy" || name == "negentropy" || name == "kl") return MirrorMap::NegEntropy;
  throw std::invalid_argument("unknown mirror map '" + std::string(name) + "'");
}

inline constexpr double kSimplexTolerance = 1e-10;

template <typename Derived>
void require_simplex(const Eigen::MatrixBase<Derived>& p, const char* op) {
  using Scalar = typename Derived::Scalar;
  if (p.size() == 0) throw std::invalid_argument(std::string(op) + ": empty vector");
  if (!p.allFinite() || (p.array() < Scalar(0)).any() ||
      std::abs(p.sum() - Scalar(1)) > Scalar(kSimplexTolerance))
    throw std::invalid_argument(std::string(op) + ": argument is not a simplex vector");
}

/**
 * Bregman divergence D_h(p, q).
 *
 * Euclidean: 1/2 ||p - q||^2. NegEntropy: KL(p || q) with 0 log 0 = 0; the
 * result is +infinity when p puts mass where q has none.
 */
template <typename DerivedP, typename DerivedQ>
typename DerivedP::Scalar bregman(MirrorMap map, const Eigen::MatrixBase<DerivedP>& p,
                                  const Eigen::MatrixBase<DerivedQ>& q) {
  using Scalar = typename DerivedP::Scalar;
  require_simplex(p, "bregman");
  require_simplex(q, "bregman");
  if (p.size() != q.size()) throw dimension_error("bregman: length mismatch");
  if (map == MirrorMap::Euclidean) return Scalar(0.5) * (p - q).squaredNorm();
  Scalar kl = 0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p(i) == Scalar(0)) continue;
    if (q(i) == Scalar(0)) return std::numeric_limits<Scalar>::infinity();
    kl += p(i) * std::log(p(i) / q(i));
  }
  // Rounding can push KL of near-identical rows a few ulps below zero.
  return std::max(kl, Scalar(0));
}

/// Euclidean projection onto the probability simplex (sort-and-threshold).
template <typename Derived>
Vector<typename Derived::Scalar> project_simplex(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  const auto n = x.size();
  if (n == 0) throw std::invalid_argument("project_simplex: empty vector");
  if (!x.allFinite()) throw std::invalid_argument("project_simplex: non-finite input");

  Vector<Scalar> sorted = x;
  std::sort(sorted.data(), sorted.data() + n, std::greater<Scalar>());
  Scalar cumulative = 0;
  Scalar tau = 0;
  for (Eigen::Index j = 0; j < n; ++j) {
    cumulative += sorted(j);
    const Scalar candidate = (cumulative - Scalar(1)) / Scalar(j + 1);
    // The largest j with sorted(j) > candidate defines the threshold.
    if (sorted(j) - candidate > Scalar(0)) tau = candidate;
  }
  return (x.array() - tau).cwiseMax(Scalar(0)).matrix();
}

/**
 * Proximal policy step at one state:
 *   argmax_{p in simplex} eta <p, q_row> - D_h(p, p_row).
 *
 * NegEntropy is evaluated in log space with max subtraction; entries that
 * would underflow are floored at the smallest normal number so strictly
 * positive inputs stay strictly positive.
 */
template <typename DerivedQ, typename DerivedP>
Vector<typename DerivedQ::Scalar> pmd_prox(MirrorMap map, const Eigen::MatrixBase<DerivedQ>& q_row,
                                           const Eigen::MatrixBase<DerivedP>& p_row,
                                           typename DerivedQ::Scalar eta) {
  using Scalar = typename DerivedQ::Scalar;
  if (!(eta > Scalar(0)) || !std::isfinite(eta))
    throw std::invalid_argument("pmd_prox: step size must be positive and finite");
  if (q_row.size() != p_row.size()) throw dimension_error("pmd_prox: length mismatch");
  if (!q_row.allFinite()) throw std::invalid_argument("pmd_prox: non-finite action values");
  require_simplex(p_row, "pmd_prox");
  if (map == MirrorMap::NegEntropy && (p_row.array() <= Scalar(0)).any())
    throw std::invalid_argument("pmd_prox: negative-entropy step needs a strictly positive policy row");

  // A constant row leaves every Bregman prox at p_row; return it bit for bit.
  if ((q_row.array() == q_row(0)).all()) return p_row;

  if (map == MirrorMap::Euclidean) return project_simplex(p_row + eta * q_row);

  Vector<Scalar> logits = p_row.array().log().matrix() + eta * q_row;
  logits.array() -= logits.maxCoeff();
  Vector<Scalar> out = logits.array().exp().matrix();
  out /= out.sum();
  out = out.cwiseMax(std::numeric_limits<Scalar>::min());
  return out / out.sum();
}

/**
 * eta <p_new - p_ref, q> - [D(p_new, p_old) + D(p_ref, p_new) - D(p_ref, p_old)].
 * Non-negative (up to rounding) whenever p_new is the proximal step from p_old.
 */
template <typename DerivedQ, typename D1, typename D2, typename D3>
typename DerivedQ::Scalar three_point_residual(MirrorMap map, const Eigen::MatrixBase<DerivedQ>& q_row,
                                               const Eigen::MatrixBase<D1>& p_old,
                                               const Eigen::MatrixBase<D2>& p_new,
                                               const Eigen::MatrixBase<D3>& p_ref,
                                               typename DerivedQ::Scalar eta) {
  using Scalar = typename DerivedQ::Scalar;
  const Scalar d_ref_new = bregman(map, p_ref, p_new);
  const Scalar d_ref_old = bregman(map, p_ref, p_old);
  if (std::isinf(d_ref_new) || std::isinf(d_ref_old))
    throw std::invalid_argument("three_point_residual: reference support not contained in policy support");
  const Scalar lhs = eta * (p_new - p_ref).dot(q_row);
  return lhs - (bregman(map, p_new, p_old) + d_ref_new - d_ref_old);
}

}  // namespace tdpmd
