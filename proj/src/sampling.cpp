#include "tdpmd/sampling.hpp"

#include <cmath>
#include <stdexcept>

namespace tdpmd {

namespace {

MatrixD row_cumsum(const MatrixD& m) {
  MatrixD out = m;
  for (Eigen::Index c = 1; c < m.cols(); ++c) out.col(c) += out.col(c - 1);
  return out;
}

void require_bounded(const Mdp& mdp, double sup_norm, const char* op) {
  // Sampled backups of bounded inputs can overshoot the bound by a few ulps.
  const double bound = 1.0 / (1.0 - mdp.gamma()) + 1e-12;
  if (!(sup_norm <= bound))
    throw std::invalid_argument(std::string(op) + ": initial or current iterate exceeds 1/(1-gamma) in sup norm");
}

void require_count(long m, const char* op) {
  if (m < 1) throw std::invalid_argument(std::string(op) + ": sample count must be >= 1");
}

}  // namespace

GenerativeModel::GenerativeModel(Mdp mdp, std::uint64_t seed)
    : mdp_(std::move(mdp)), cumulative_(row_cumsum(mdp_.transitions())), seed_(seed) {}

SampleSizes hoeffding_sizes(int T, Eigen::Index num_states, Eigen::Index num_actions, double gamma,
                            double delta, double alpha, bool q_variant) {
  if (T < 1 || num_states < 1 || num_actions < 1)
    throw std::invalid_argument("hoeffding_sizes: T, |S|, |A| must be >= 1");
  if (!(gamma >= 0 && gamma < 1)) throw std::invalid_argument("hoeffding_sizes: gamma must lie in [0,1)");
  if (!(delta > 0)) throw std::invalid_argument("hoeffding_sizes: delta must be positive");
  if (!(alpha > 0 && alpha < 1)) throw std::invalid_argument("hoeffding_sizes: alpha must lie in (0,1)");

  const double scale = 1.0 / (2.0 * (1.0 - gamma) * (1.0 - gamma) * delta * delta);
  const double sa = static_cast<double>(num_states) * static_cast<double>(num_actions);
  SampleSizes sizes;
  if (q_variant) {
    sizes.m_q = static_cast<long>(std::ceil(scale * std::log(2.0 * T * sa / alpha)));
  } else {
    sizes.m_q = static_cast<long>(std::ceil(scale * std::log(4.0 * T * sa / alpha)));
    sizes.m_v = static_cast<long>(
        std::ceil(scale * std::log(4.0 * T * static_cast<double>(num_states) / alpha)));
  }
  return sizes;
}

SampleConfig resolve_sizes(SampleConfig config, const Mdp& mdp, bool q_variant) {
  if (config.m_q > 0 && (q_variant || config.m_v > 0)) return config;
  const auto sizes = hoeffding_sizes(config.T, mdp.num_states(), mdp.num_actions(), mdp.gamma(),
                                     config.delta, config.alpha, q_variant);
  if (config.m_q <= 0) config.m_q = sizes.m_q;
  if (!q_variant && config.m_v <= 0) config.m_v = sizes.m_v;
  return config;
}

MatrixD sample_q_hat(GenerativeModel& gm, const VectorD& v, long m_q) {
  const Mdp& mdp = gm.mdp();
  require_count(m_q, "sample_q_hat");
  detail::require_dims(v.size() == mdp.num_states(), "sample_q_hat", "value length");
  require_bounded(mdp, v.cwiseAbs().maxCoeff(), "sample_q_hat");

  const auto S = mdp.num_states();
  const auto A = mdp.num_actions();
  const auto epoch = gm.next_epoch();
  // Empirical kernel; the estimate then runs through the exact backup code.
  MatrixD kernel = MatrixD::Zero(S * A, S);
  for (Eigen::Index s = 0; s < S; ++s) {
    for (Eigen::Index a = 0; a < A; ++a) {
      auto gen = gm.stream(epoch, s, a);
      auto row = kernel.row(s * A + a);
      for (long i = 0; i < m_q; ++i) row(gm.next_state(s, a, gen)) += 1.0;
      row /= static_cast<double>(m_q);
    }
  }
  return detail::lookahead(mdp.rewards(), kernel, mdp.gamma(), v);
}

VectorD sample_td_hat(GenerativeModel& gm, const PolicyD& pi, const VectorD& v, long m_v) {
  const Mdp& mdp = gm.mdp();
  require_count(m_v, "sample_td_hat");
  require_policy_dims(mdp, pi, "sample_td_hat");
  detail::require_dims(v.size() == mdp.num_states(), "sample_td_hat", "value length");
  require_bounded(mdp, v.cwiseAbs().maxCoeff(), "sample_td_hat");

  const auto S = mdp.num_states();
  const auto A = mdp.num_actions();
  const auto epoch = gm.next_epoch();
  const MatrixD policy_cdf = row_cumsum(pi.probs());

  MatrixD action_freq = MatrixD::Zero(S, A);
  MatrixD kernel = mdp.transitions();  // rows of unsampled actions carry zero weight
  for (Eigen::Index s = 0; s < S; ++s) {
    auto gen = gm.stream(epoch, s, 0);
    MatrixD counts = MatrixD::Zero(A, S);
    for (long i = 0; i < m_v; ++i) {
      const auto a = sample_from_cdf(policy_cdf.row(s), uniform01(gen));
      counts(a, gm.next_state(s, a, gen)) += 1.0;
    }
    for (Eigen::Index a = 0; a < A; ++a) {
      const double n_a = counts.row(a).sum();
      action_freq(s, a) = n_a / static_cast<double>(m_v);
      if (n_a > 0) kernel.row(s * A + a) = counts.row(a) / n_a;
    }
  }
  const MatrixD q = detail::lookahead(mdp.rewards(), kernel, mdp.gamma(), v);
  return action_freq.cwiseProduct(q).rowwise().sum();
}

MatrixD sample_bellman_q(GenerativeModel& gm, const PolicyD& pi, const MatrixD& q, long m_q) {
  const Mdp& mdp = gm.mdp();
  require_count(m_q, "sample_bellman_q");
  require_policy_dims(mdp, pi, "sample_bellman_q");
  detail::require_dims(q.rows() == mdp.num_states() && q.cols() == mdp.num_actions(),
                       "sample_bellman_q", "action-value shape");
  require_bounded(mdp, q.cwiseAbs().maxCoeff(), "sample_bellman_q");

  const auto S = mdp.num_states();
  const auto A = mdp.num_actions();
  const auto epoch = gm.next_epoch();
  const MatrixD policy_cdf = row_cumsum(pi.probs());

  MatrixD out(S, A);
  MatrixD counts(S, A);
  for (Eigen::Index s = 0; s < S; ++s) {
    for (Eigen::Index a = 0; a < A; ++a) {
      auto gen = gm.stream(epoch, s, a);
      counts.setZero();
      for (long i = 0; i < m_q; ++i) {
        const auto next = gm.next_state(s, a, gen);
        counts(next, sample_from_cdf(policy_cdf.row(next), uniform01(gen))) += 1.0;
      }
      // E_{s'} E_{a'|s'} q(s',a') with empirical marginal and conditionals.
      double expected = 0;
      for (Eigen::Index t = 0; t < S; ++t) {
        const double n_t = counts.row(t).sum();
        if (n_t == 0) continue;
        const double inner = (counts.row(t) / n_t).dot(q.row(t));
        expected += (n_t / static_cast<double>(m_q)) * inner;
      }
      out(s, a) = mdp.rewards()(s, a) + mdp.gamma() * expected;
    }
  }
  return out;
}

Trajectory sample_td_pmd(GenerativeModel& gm, MirrorMap map, const StepSchedule& schedule,
                         const SampleConfig& config, const VectorD& v0, const PolicyD& pi0) {
  const Mdp& mdp = gm.mdp();
  detail::require_run_preconditions(mdp, map, schedule, pi0, config.T);
  detail::require_dims(v0.size() == mdp.num_states(), "sample_td_pmd", "initial value length");
  require_bounded(mdp, v0.cwiseAbs().maxCoeff(), "sample_td_pmd");
  const SampleConfig sizes = resolve_sizes(config, mdp, false);

  Trajectory traj;
  traj.algorithm = Algorithm::SampleTdPmd;
  traj.map = map;
  traj.schedule = schedule;
  traj.kappa0 = init_shift(mdp, pi0, v0).first;
  traj.records.reserve(static_cast<std::size_t>(config.T) + 1);

  PolicyD pi = pi0;
  VectorD v = v0;
  for (int k = 0;; ++k) {
    MatrixD q_hat = sample_q_hat(gm, v, sizes.m_q);
    std::optional<double> divergence;
    const double eta = step_size(mdp, map, schedule, pi, q_hat, k, false, divergence);
    traj.records.push_back({k, pi, v, q_hat, eta, divergence});
    if (k == config.T) break;
    pi = detail::prox_all(map, q_hat, pi, eta);
    v = sample_td_hat(gm, pi, v, sizes.m_v);
  }
  return traj;
}

Trajectory sample_q_td_pmd(GenerativeModel& gm, MirrorMap map, const StepSchedule& schedule,
                           const SampleConfig& config, const MatrixD& q0, const PolicyD& pi0) {
  const Mdp& mdp = gm.mdp();
  detail::require_run_preconditions(mdp, map, schedule, pi0, config.T);
  detail::require_dims(q0.rows() == mdp.num_states() && q0.cols() == mdp.num_actions(),
                       "sample_q_td_pmd", "initial action-value shape");
  require_bounded(mdp, q0.cwiseAbs().maxCoeff(), "sample_q_td_pmd");
  const SampleConfig sizes = resolve_sizes(config, mdp, true);

  Trajectory traj;
  traj.algorithm = Algorithm::SampleQTdPmd;
  traj.map = map;
  traj.schedule = schedule;
  traj.kappa0 = init_shift_q(mdp, pi0, q0);
  traj.records.reserve(static_cast<std::size_t>(config.T) + 1);

  PolicyD pi = pi0;
  MatrixD q = q0;
  for (int k = 0;; ++k) {
    std::optional<double> divergence;
    const double eta = step_size(mdp, map, schedule, pi, q, k, true, divergence);
    traj.records.push_back({k, pi, VectorD(), q, eta, divergence});
    if (k == config.T) break;
    pi = detail::prox_all(map, q, pi, eta);
    q = sample_bellman_q(gm, pi, q, sizes.m_q);
  }
  return traj;
}

}  // namespace tdpmd
