#pragma once

#include "tdpmd/mdp.hpp"
#include "tdpmd/mirror.hpp"

#include <cmath>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace tdpmd {

// ---------------------------------------------------------------------------
// Step schedules and evaluation schemes
// ---------------------------------------------------------------------------

struct ConstantStep {
  double eta;
};

/// eta_k = max(eta_floor, ||D(greedy_k, pi_k)||_inf / (c gamma^(2k+1))).
struct AdaptiveStep {
  double c = 1.0;
  double eta_floor = 1e-3;
};

using StepSchedule = std::variant<ConstantStep, AdaptiveStep>;

inline void validate(const StepSchedule& schedule) {
  if (const auto* constant = std::get_if<ConstantStep>(&schedule)) {
    if (!(constant->eta > 0)) throw std::invalid_argument("constant step size must be positive");
  } else {
    const auto& adaptive = std::get<AdaptiveStep>(schedule);
    if (!(adaptive.c > 0) || !(adaptive.eta_floor > 0))
      throw std::invalid_argument("adaptive schedule needs c > 0 and eta_floor > 0");
  }
}

struct OneStep {};
struct NStep {
  int n;
};
/// Geometric mixture of n-step backups, n ~ Geo(1 - lambda).
struct LambdaStep {
  double lambda;
};

using EvalScheme = std::variant<OneStep, NStep, LambdaStep>;

inline void validate(const EvalScheme& scheme) {
  if (const auto* n = std::get_if<NStep>(&scheme); n && n->n < 1)
    throw std::invalid_argument("n-step evaluation needs n >= 1");
  if (const auto* l = std::get_if<LambdaStep>(&scheme); l && !(l->lambda >= 0 && l->lambda < 1))
    throw std::invalid_argument("lambda must lie in [0,1)");
}

/// Per-iteration factor by which a constant value shift decays under the scheme.
inline double shift_decay(const EvalScheme& scheme, double gamma) {
  if (const auto* n = std::get_if<NStep>(&scheme)) return std::pow(gamma, n->n);
  if (const auto* l = std::get_if<LambdaStep>(&scheme))
    return (1 - l->lambda) * gamma / (1 - l->lambda * gamma);
  return gamma;
}

// ---------------------------------------------------------------------------
// Trajectory
// ---------------------------------------------------------------------------

enum class Algorithm { TdPmd, QTdPmd, Pmd, SampleTdPmd, SampleQTdPmd };

inline std::string_view to_string(Algorithm algo) {
  switch (algo) {
    case Algorithm::TdPmd: return "td_pmd";
    case Algorithm::QTdPmd: return "q_td_pmd";
    case Algorithm::Pmd: return "pmd";
    case Algorithm::SampleTdPmd: return "sample_td_pmd";
    case Algorithm::SampleQTdPmd: return "sample_q_td_pmd";
  }
  return "unknown";
}

inline Algorithm algorithm_from_string(std::string_view name) {
  for (auto algo : {Algorithm::TdPmd, Algorithm::QTdPmd, Algorithm::Pmd, Algorithm::SampleTdPmd,
                    Algorithm::SampleQTdPmd})
    if (to_string(algo) == name) return algo;
  throw std::invalid_argument("unknown algorithm '" + std::string(name) + "'");
}

/// True for variants whose iterate is an action-value table.
inline bool tracks_action_values(Algorithm algo) {
  return algo == Algorithm::QTdPmd || algo == Algorithm::SampleQTdPmd;
}

struct IterationRecord {
  int k = 0;
  PolicyD policy;
  /// V^k; empty for action-value variants.
  VectorD v;
  /// Q^k: induced from V^k for state-value variants, the iterate itself otherwise.
  MatrixD q;
  /// Step size used at iteration k to produce pi_{k+1}.
  double eta = 0;
  /// ||D(greedy_k, pi_k)||_inf entering the adaptive rule (gamma-weighted expectation for Q runs).
  std::optional<double> divergence;
};

struct Trajectory {
  Algorithm algorithm = Algorithm::TdPmd;
  MirrorMap map = MirrorMap::Euclidean;
  StepSchedule schedule = ConstantStep{1.0};
  EvalScheme scheme = OneStep{};
  /// kappa_0 for V runs, its action-value analogue for Q runs.
  double kappa0 = 0;
  std::vector<IterationRecord> records;

  std::string variant() const {
    return std::string(to_string(algorithm)) + "/" + std::string(to_string(map));
  }
  int iterations() const { return static_cast<int>(records.size()) - 1; }
};

// ---------------------------------------------------------------------------
// Building blocks
// ---------------------------------------------------------------------------

/**
 * Deterministic greedy policy w.r.t. q. Ties (exact float equality) go to the
 * action with the most reference mass, then to the lowest index.
 */
template <typename Scalar>
Policy<Scalar> greedy_policy(const ActionValue<Scalar>& q,
                             const Policy<Scalar>* reference = nullptr) {
  if (!q.allFinite()) throw std::invalid_argument("greedy_policy: non-finite action values");
  if (reference) detail::require_dims(reference->num_states() == q.rows() &&
                                          reference->num_actions() == q.cols(),
                                      "greedy_policy", "reference shape");
  std::vector<Eigen::Index> actions(static_cast<std::size_t>(q.rows()));
  for (Eigen::Index s = 0; s < q.rows(); ++s) {
    const Scalar best = q.row(s).maxCoeff();
    Eigen::Index chosen = -1;
    for (Eigen::Index a = 0; a < q.cols(); ++a) {
      if (q(s, a) != best) continue;
      if (chosen < 0 || (reference && (*reference)(s, a) > (*reference)(s, chosen))) chosen = a;
    }
    actions[static_cast<std::size_t>(s)] = chosen;
  }
  return Policy<Scalar>::deterministic(actions, q.cols());
}

/// max_s D(target(.|s), pi(.|s)).
template <typename Scalar>
Scalar max_divergence(MirrorMap map, const Policy<Scalar>& target, const Policy<Scalar>& pi) {
  Scalar worst = 0;
  for (Eigen::Index s = 0; s < pi.num_states(); ++s)
    worst = std::max(worst, bregman(map, target.row(s), pi.row(s)));
  return worst;
}

/// D-hat(s,a) = E_{s'~P(.|s,a)} D(target(.|s'), pi(.|s')).
template <typename Scalar>
ActionValue<Scalar> expected_divergence(const TabularMdp<Scalar>& mdp, MirrorMap map,
                                        const Policy<Scalar>& target, const Policy<Scalar>& pi) {
  StateValue<Scalar> per_state(pi.num_states());
  for (Eigen::Index s = 0; s < pi.num_states(); ++s)
    per_state(s) = bregman(map, target.row(s), pi.row(s));
  if (!per_state.allFinite())
    throw std::domain_error("expected_divergence: infinite divergence (support violation)");
  const Vector<Scalar> flat = mdp.transitions() * per_state;
  using RowMajor = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  return Eigen::Map<const RowMajor>(flat.data(), mdp.num_states(), mdp.num_actions());
}

/// Adaptive step from a precomputed divergence norm.
inline double adaptive_eta_from_divergence(double divergence, int k, double gamma, double c,
                                           double eta_floor) {
  if (std::isinf(divergence))
    throw std::domain_error("adaptive_eta: infinite divergence; mirror map and initial policy "
                            "are incompatible with adaptive stepping");
  if (!(gamma > 0)) throw std::invalid_argument("adaptive_eta: requires gamma > 0");
  if (divergence <= 0) return eta_floor;
  const double eta = divergence / (c * std::pow(gamma, 2 * k + 1));
  if (!std::isfinite(eta)) throw std::overflow_error("adaptive_eta: step size overflows");
  return std::max(eta_floor, eta);
}

template <typename Scalar>
Scalar adaptive_eta(MirrorMap map, const Policy<Scalar>& pi_k, const Policy<Scalar>& pi_tilde,
                    int k, Scalar gamma, Scalar c, Scalar eta_floor) {
  return adaptive_eta_from_divergence(max_divergence(map, pi_tilde, pi_k), k, gamma, c, eta_floor);
}

/// kappa_0 = max(0, max_s [V0 - T^pi0 V0](s) / (1 - gamma)) and V0 - kappa_0.
template <typename Scalar>
std::pair<Scalar, StateValue<Scalar>> init_shift(const TabularMdp<Scalar>& mdp,
                                                 const Policy<Scalar>& pi0,
                                                 const NonDeduced<StateValue<Scalar>>& v0) {
  const Scalar excess = (v0 - bellman_pi(mdp, pi0, v0)).maxCoeff();
  const Scalar kappa0 = std::max(Scalar(0), excess / (Scalar(1) - mdp.gamma()));
  return {kappa0, (v0.array() - kappa0).matrix()};
}

/// Action-value analogue: max(0, max_{s,a} [Q0 - F^pi0 Q0] / (1 - gamma)).
template <typename Scalar>
Scalar init_shift_q(const TabularMdp<Scalar>& mdp, const Policy<Scalar>& pi0,
                    const NonDeduced<ActionValue<Scalar>>& q0) {
  const Scalar excess = (q0 - bellman_q(mdp, pi0, q0)).maxCoeff();
  return std::max(Scalar(0), excess / (Scalar(1) - mdp.gamma()));
}

/// TD evaluation of v under pi.
template <typename Scalar>
StateValue<Scalar> td_eval(const TabularMdp<Scalar>& mdp, const Policy<Scalar>& pi,
                           const StateValue<Scalar>& v, const EvalScheme& scheme) {
  validate(scheme);
  if (const auto* n = std::get_if<NStep>(&scheme)) {
    StateValue<Scalar> out = v;
    for (int i = 0; i < n->n; ++i) out = bellman_pi(mdp, pi, out);
    return out;
  }
  if (const auto* l = std::get_if<LambdaStep>(&scheme)) {
    // V + (I - lambda gamma P^pi)^{-1} (T^pi V - V)
    const auto S = mdp.num_states();
    const Matrix<Scalar> system =
        Matrix<Scalar>::Identity(S, S) -
        Scalar(l->lambda) * mdp.gamma() * policy_transition(mdp, pi);
    const StateValue<Scalar> one_step = bellman_pi(mdp, pi, v);
    if (l->lambda == 0) return one_step;
    return v + system.partialPivLu().solve(one_step - v);
  }
  return bellman_pi(mdp, pi, v);
}

namespace detail {

inline void require_run_preconditions(const Mdp& mdp, MirrorMap map,
                                      const StepSchedule& schedule, const PolicyD& pi0, int T) {
  if (T < 1) throw std::invalid_argument("runner: iteration count must be >= 1");
  validate(schedule);
  require_policy_dims(mdp, pi0, "runner");
  if (map == MirrorMap::NegEntropy && (pi0.probs().array() <= 0).any())
    throw std::invalid_argument("runner: negative-entropy map needs a strictly positive initial policy");
  if (std::holds_alternative<AdaptiveStep>(schedule) && !(mdp.gamma() > 0))
    throw std::invalid_argument("runner: adaptive schedule requires gamma > 0");
}

inline PolicyD prox_all(MirrorMap map, const MatrixD& q, const PolicyD& pi, double eta) {
  MatrixD next(pi.num_states(), pi.num_actions());
  for (Eigen::Index s = 0; s < pi.num_states(); ++s)
    next.row(s) = pmd_prox(map, q.row(s).transpose(), pi.row(s).transpose(), eta).transpose();
  return PolicyD(std::move(next));
}

}  // namespace detail

/// Step size for iteration k given the action values driving the update.
/// Fills `divergence` for adaptive schedules.
inline double step_size(const Mdp& mdp, MirrorMap map, const StepSchedule& schedule,
                        const PolicyD& pi, const MatrixD& q, int k, bool q_variant,
                        std::optional<double>& divergence) {
  if (const auto* constant = std::get_if<ConstantStep>(&schedule)) {
    divergence.reset();
    return constant->eta;
  }
  const auto& adaptive = std::get<AdaptiveStep>(schedule);
  const PolicyD greedy = greedy_policy(q, &pi);
  const double d = q_variant
                       ? mdp.gamma() * expected_divergence(mdp, map, greedy, pi).maxCoeff()
                       : max_divergence(map, greedy, pi);
  divergence = d;
  return adaptive_eta_from_divergence(d, k, mdp.gamma(), adaptive.c, adaptive.eta_floor);
}

/**
 * Exact TD-PMD: Q^k induced from V^k, proximal policy step, then one TD
 * evaluation V^{k+1} = T^{pi_{k+1}} V^k (or its n-step / lambda form).
 * kappa_0 is recorded but never applied.
 */
inline Trajectory td_pmd(const Mdp& mdp, MirrorMap map, const StepSchedule& schedule,
                         const EvalScheme& scheme, const VectorD& v0, const PolicyD& pi0, int T) {
  detail::require_run_preconditions(mdp, map, schedule, pi0, T);
  validate(scheme);
  detail::require_dims(v0.size() == mdp.num_states(), "td_pmd", "initial value length");

  Trajectory traj;
  traj.algorithm = Algorithm::TdPmd;
  traj.map = map;
  traj.schedule = schedule;
  traj.scheme = scheme;
  traj.kappa0 = init_shift(mdp, pi0, v0).first;
  traj.records.reserve(static_cast<std::size_t>(T) + 1);

  PolicyD pi = pi0;
  VectorD v = v0;
  for (int k = 0;; ++k) {
    MatrixD q = induce_q(mdp, v);
    std::optional<double> divergence;
    const double eta = step_size(mdp, map, schedule, pi, q, k, false, divergence);
    traj.records.push_back({k, pi, v, q, eta, divergence});
    if (k == T) break;
    pi = detail::prox_all(map, q, pi, eta);
    v = td_eval(mdp, pi, v, scheme);
  }
  return traj;
}

/// Q-TD-PMD: maintains Q^k directly, Q^{k+1} = F^{pi_{k+1}} Q^k.
inline Trajectory q_td_pmd(const Mdp& mdp, MirrorMap map, const StepSchedule& schedule,
                           const MatrixD& q0, const PolicyD& pi0, int T) {
  detail::require_run_preconditions(mdp, map, schedule, pi0, T);
  detail::require_dims(q0.rows() == mdp.num_states() && q0.cols() == mdp.num_actions(), "q_td_pmd",
                       "initial action-value shape");

  Trajectory traj;
  traj.algorithm = Algorithm::QTdPmd;
  traj.map = map;
  traj.schedule = schedule;
  traj.kappa0 = init_shift_q(mdp, pi0, q0);
  traj.records.reserve(static_cast<std::size_t>(T) + 1);

  PolicyD pi = pi0;
  MatrixD q = q0;
  for (int k = 0;; ++k) {
    std::optional<double> divergence;
    const double eta = step_size(mdp, map, schedule, pi, q, k, true, divergence);
    traj.records.push_back({k, pi, VectorD(), q, eta, divergence});
    if (k == T) break;
    pi = detail::prox_all(map, q, pi, eta);
    q = bellman_q(mdp, pi, q);
  }
  return traj;
}

/// Plain PMD with exact evaluation of Q^{pi_k} every iteration.
inline Trajectory pmd_baseline(const Mdp& mdp, MirrorMap map, const StepSchedule& schedule,
                               const PolicyD& pi0, int T) {
  detail::require_run_preconditions(mdp, map, schedule, pi0, T);

  Trajectory traj;
  traj.algorithm = Algorithm::Pmd;
  traj.map = map;
  traj.schedule = schedule;
  traj.records.reserve(static_cast<std::size_t>(T) + 1);

  PolicyD pi = pi0;
  for (int k = 0;; ++k) {
    VectorD v = policy_value_exact(mdp, pi);
    MatrixD q = induce_q(mdp, v);
    std::optional<double> divergence;
    const double eta = step_size(mdp, map, schedule, pi, q, k, false, divergence);
    traj.records.push_back({k, pi, v, q, eta, divergence});
    if (k == T) break;
    pi = detail::prox_all(map, q, pi, eta);
  }
  return traj;
}

}  // namespace tdpmd
