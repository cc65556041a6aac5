#pragma once

#include "tdpmd/algorithms.hpp"
#include "tdpmd/mdp.hpp"

#include <optional>
#include <string>
#include <vector>

namespace tdpmd {

/// Per-iteration convergence metrics of one trajectory.
struct MetricSeries {
  /// ||V* - V^k||_inf, or ||Q* - Q^k||_inf for action-value runs.
  std::vector<double> v_err;
  /// ||V* - V^{pi_k}||_inf, or ||Q* - Q^{pi_k}||_inf for action-value runs.
  std::vector<double> pol_err;
  /// max_s of the policy mass on non-optimal actions.
  std::vector<double> subopt_mass;
  std::vector<double> eta;
  /// max over s and optimal a of |Q^k(s,a) - V*(s)|.
  std::vector<double> advantage_gap;
  /// decay^k * kappa_0, the part of the value error owed to a bad initialization.
  std::vector<double> kappa_term;
  bool action_values = false;

  std::size_t size() const { return v_err.size(); }
};

MetricSeries compute_metrics(const Mdp& mdp, const OptimalityData<double>& opt, const Trajectory& traj);

enum class CheckStatus { Pass, Fail, NotApplicable };

std::string_view to_string(CheckStatus status);

/**
 * Outcome of one check. worst_violation is the largest (lhs - bound) seen;
 * the check fails iff it exceeds tolerance.
 */
struct CheckReport {
  std::string name;
  CheckStatus status = CheckStatus::NotApplicable;
  double worst_violation = -std::numeric_limits<double>::infinity();
  int worst_iteration = -1;
  double tolerance = 0;
  std::string note;

  bool passed() const { return status == CheckStatus::Pass; }
  bool failed() const { return status == CheckStatus::Fail; }
};

/// Monotone chain V* >= V^{pi_{k+1}} >= V^{k+1} >= T^{pi_k} V^k >= V^k (and the Q analogue).
/// Not applicable unless T^{pi_0} V^0 >= V^0 - 1e-10, or for sample-based runs.
CheckReport check_monotone(const Mdp& mdp, const OptimalityData<double>& opt, const Trajectory& traj);

/**
 * Compares a raw run against its kappa-shifted twin: policies equal within
 * 1e-9 and V^k - V~^k = decay^k * kappa within 1e-8. kappa and decay are
 * parameters so a wrong offset can be fed in as a negative control.
 */
CheckReport compare_shifted(const Trajectory& raw, const Trajectory& shifted, double kappa,
                            double decay);

/// Runs td_pmd from (v0, pi0) and from (v0 - kappa_0, pi0) and compares them.
CheckReport check_shift(const Mdp& mdp, MirrorMap map, const StepSchedule& schedule,
                        const EvalScheme& scheme, const VectorD& v0, const PolicyD& pi0, int T);

/// Constant-step bound divided by (T'+1), checked at every T'.
CheckReport check_sublinear(const Mdp& mdp, const OptimalityData<double>& opt, const Trajectory& traj,
                            const MetricSeries& metrics, double eta, double kappa0);
CheckReport check_sublinear(const Mdp& mdp, const OptimalityData<double>& opt, const Trajectory& traj,
                            const MetricSeries& metrics);

/**
 * gamma-rate bounds of the adaptive schedule at every T' >= 1, plus the
 * per-iteration contraction for exact runs. delta adds the inexact terms.
 */
CheckReport check_linear(const Mdp& mdp, const OptimalityData<double>& opt, const Trajectory& traj,
                         const MetricSeries& metrics, double c, std::optional<double> delta = {});

/// Finite-time bound T_0 for Euclidean constant-step runs; nullopt when Delta is absent.
std::optional<double> pqa_finite_time(const Mdp& mdp, const OptimalityData<double>& opt,
                                      const VectorD& v0, const PolicyD& pi0, double eta, double kappa0);

/// Suboptimal mass is exactly zero and pol_err <= 2 vi_tolerance for all T_0 <= k <= T.
/// Not applicable when T < T_0.
CheckReport check_pqa_finite(const Mdp& mdp, const OptimalityData<double>& opt, const Trajectory& traj,
                             const MetricSeries& metrics, double eta, double kappa0);
CheckReport check_pqa_finite(const Mdp& mdp, const OptimalityData<double>& opt, const Trajectory& traj,
                             const MetricSeries& metrics);

/// First k after which subopt_mass stays exactly zero, if any.
std::optional<int> zero_mass_from(const MetricSeries& metrics);

/// subopt_mass(k) <= pol_err(k) / Delta + 1e-8 at every k.
CheckReport check_subopt_bound(const OptimalityData<double>& opt, const MetricSeries& metrics);

/// Negative-entropy runs: the subopt bound, and optionally final mass <= final_mass.
CheckReport check_npg_policy_convergence(const OptimalityData<double>& opt, const Trajectory& traj,
                                         const MetricSeries& metrics,
                                         std::optional<double> final_mass = {});

/// Three-point inequality of every update against pi_k, the greedy policy and pi*.
CheckReport check_three_point(const Mdp& mdp, const OptimalityData<double>& opt, const Trajectory& traj);

/// pol_err(T) <= (v_err(T) + v_err(T-1)) / (1-gamma) + 4 vi_tolerance for exact one-step runs.
CheckReport check_error_link(const Mdp& mdp, const OptimalityData<double>& opt, const Trajectory& traj,
                             const MetricSeries& metrics);

}  // namespace tdpmd
