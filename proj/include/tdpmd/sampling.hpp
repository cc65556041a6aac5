#pragma once

#include "tdpmd/algorithms.hpp"
#include "tdpmd/mdp.hpp"
#include "tdpmd/mirror.hpp"

#include <cstdint>
#include <random>

namespace tdpmd {

/// SplitMix64 finalizer; used to derive independent substream seeds.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed of the substream for (master, epoch, s, a). Fixed; documented in README.
constexpr std::uint64_t substream_seed(std::uint64_t master, std::uint64_t epoch, std::uint64_t s,
                                       std::uint64_t a) {
  std::uint64_t h = splitmix64(master);
  h = splitmix64(h ^ splitmix64(epoch));
  h = splitmix64(h ^ splitmix64(s));
  return splitmix64(h ^ splitmix64(a));
}

/// Uniform draw in [0,1) from the top 53 bits; portable across standard libraries.
inline double uniform01(std::mt19937_64& gen) {
  return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}

/// Inverse-CDF draw from a cumulative row; never returns a zero-probability index.
template <typename Derived>
Eigen::Index sample_from_cdf(const Eigen::MatrixBase<Derived>& cdf, double u) {
  const auto n = cdf.size();
  for (Eigen::Index i = 0; i < n; ++i)
    if (u < cdf(i)) return i;
  // u landed above the rounded total; take the last index with positive mass.
  for (Eigen::Index i = n - 1; i > 0; --i)
    if (cdf(i) > cdf(i - 1)) return i;
  return 0;
}

/**
 * Generative model over a tabular MDP. Each estimator call consumes one
 * epoch; draws within an epoch come from per-(s,a) substreams, so results
 * depend only on (seed, call sequence).
 */
class GenerativeModel {
public:
  GenerativeModel(Mdp mdp, std::uint64_t seed);

  const Mdp& mdp() const { return mdp_; }
  std::uint64_t seed() const { return seed_; }
  std::uint64_t epoch() const { return epoch_; }

  /// Starts a new epoch and returns its index.
  std::uint64_t next_epoch() { return epoch_++; }

  std::mt19937_64 stream(std::uint64_t epoch, Eigen::Index s, Eigen::Index a) const {
    return std::mt19937_64(substream_seed(seed_, epoch, static_cast<std::uint64_t>(s),
                                          static_cast<std::uint64_t>(a)));
  }

  Eigen::Index next_state(Eigen::Index s, Eigen::Index a, std::mt19937_64& gen) const {
    return sample_from_cdf(cumulative_.row(s * mdp_.num_actions() + a), uniform01(gen));
  }

private:
  Mdp mdp_;
  MatrixD cumulative_;
  std::uint64_t seed_;
  std::uint64_t epoch_ = 0;
};

struct SampleSizes {
  long m_q = 0;
  /// Zero for the action-value variant, which has no separate V estimate.
  long m_v = 0;
};

/**
 * Hoeffding sample sizes guaranteeing per-entry error <= delta for all T
 * iterations with probability >= 1 - alpha:
 *   M_Q >= log(4T|S||A|/alpha) / (2 (1-gamma)^2 delta^2)
 *   M_V >= log(4T|S|/alpha)    / (2 (1-gamma)^2 delta^2)
 * The action-value variant uses log(2T|S||A|/alpha) for M_Q.
 */
SampleSizes hoeffding_sizes(int T, Eigen::Index num_states, Eigen::Index num_actions, double gamma,
                            double delta, double alpha, bool q_variant = false);

struct SampleConfig {
  int T = 1;
  double delta = 0.1;
  double alpha = 0.1;
  /// Zero means "derive from hoeffding_sizes".
  long m_q = 0;
  long m_v = 0;
};

/// Fills zero counts from hoeffding_sizes.
SampleConfig resolve_sizes(SampleConfig config, const Mdp& mdp, bool q_variant);

/// Q-hat(s,a) = mean over m_q draws s' ~ P(.|s,a) of r(s,a) + gamma v(s').
MatrixD sample_q_hat(GenerativeModel& gm, const VectorD& v, long m_q);

/// V(s) = mean over m_v draws (a, s') ~ pi(.|s) x P(.|s,a) of r(s,a) + gamma v(s').
VectorD sample_td_hat(GenerativeModel& gm, const PolicyD& pi, const VectorD& v, long m_v);

/// Q(s,a) = mean over m_q draws (s', a') ~ P(.|s,a) x pi(.|s') of r(s,a) + gamma q(s',a').
MatrixD sample_bellman_q(GenerativeModel& gm, const PolicyD& pi, const MatrixD& q, long m_q);

Trajectory sample_td_pmd(GenerativeModel& gm, MirrorMap map, const StepSchedule& schedule,
                         const SampleConfig& config, const VectorD& v0, const PolicyD& pi0);

Trajectory sample_q_td_pmd(GenerativeModel& gm, MirrorMap map, const StepSchedule& schedule,
                           const SampleConfig& config, const MatrixD& q0, const PolicyD& pi0);

}  // namespace tdpmd
