#pragma once

#include "tdpmd/harness.hpp"
#include "tdpmd/mdp.hpp"

#include <random>

namespace testing {

using namespace tdpmd;

inline double draw(std::mt19937_64& gen) { return uniform01(gen); }

inline PolicyD random_policy(std::mt19937_64& gen, Eigen::Index S, Eigen::Index A) {
  MatrixD p(S, A);
  for (Eigen::Index s = 0; s < S; ++s) {
    for (Eigen::Index a = 0; a < A; ++a) p(s, a) = 0.05 + draw(gen);
    p.row(s) /= p.row(s).sum();
  }
  return PolicyD(p);
}

inline VectorD random_vector(std::mt19937_64& gen, Eigen::Index n, double lo, double hi) {
  VectorD v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = lo + (hi - lo) * draw(gen);
  return v;
}

inline VectorD random_simplex(std::mt19937_64& gen, Eigen::Index n) {
  VectorD v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = -std::log(1 - draw(gen));
  return v / v.sum();
}

/// Every (s,a) moves to a single next state; rewards from random_mdp.
inline Mdp deterministic_mdp(std::uint64_t seed, Eigen::Index S, Eigen::Index A, double gamma) {
  const Mdp base = random_mdp(seed, S, A, gamma);
  std::mt19937_64 gen(seed ^ 0xabcdefULL);
  MatrixD p = MatrixD::Zero(S * A, S);
  for (Eigen::Index row = 0; row < S * A; ++row) p(row, static_cast<Eigen::Index>(gen() % S)) = 1;
  return Mdp(base.rewards(), p, gamma);
}

inline double sup(const MatrixD& m) { return m.cwiseAbs().maxCoeff(); }

}  // namespace testing
