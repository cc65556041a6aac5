#include "tdpmd/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace tdpmd {

namespace {

bool is_sampled(Algorithm algo) {
  return algo == Algorithm::SampleTdPmd || algo == Algorithm::SampleQTdPmd;
}

/// True when every step is one exact application of the evaluation operator.
bool exact_one_step(const Trajectory& traj) {
  if (traj.algorithm == Algorithm::QTdPmd) return true;
  return traj.algorithm == Algorithm::TdPmd && std::holds_alternative<OneStep>(traj.scheme);
}

double value_decay(const Trajectory& traj, double gamma) {
  if (traj.algorithm == Algorithm::TdPmd) return shift_decay(traj.scheme, gamma);
  return gamma;
}

double sup(const Eigen::Ref<const MatrixD>& m) { return m.cwiseAbs().maxCoeff(); }

void require_same_mdp(const Mdp& mdp, const Trajectory& traj, const char* op) {
  if (traj.records.empty()) throw std::invalid_argument(std::string(op) + ": empty trajectory");
  const auto& first = traj.records.front();
  detail::require_dims(first.policy.num_states() == mdp.num_states() &&
                           first.policy.num_actions() == mdp.num_actions(),
                       op, "trajectory does not belong to this MDP");
}

/// Accumulates the worst (lhs - bound) and finalizes a report.
class Tracker {
public:
  Tracker(std::string name, double tolerance) {
    report_.name = std::move(name);
    report_.tolerance = tolerance;
  }

  void observe(double violation, int k) {
    if (std::isnan(violation)) violation = std::numeric_limits<double>::infinity();
    if (report_.worst_iteration < 0 || violation > report_.worst_violation) {
      report_.worst_violation = violation;
      report_.worst_iteration = k;
    }
  }

  CheckReport finish(std::string note = {}) {
    report_.status = report_.worst_violation > report_.tolerance ? CheckStatus::Fail : CheckStatus::Pass;
    report_.note = std::move(note);
    return report_;
  }

  CheckReport not_applicable(std::string why) {
    report_.status = CheckStatus::NotApplicable;
    report_.worst_violation = -std::numeric_limits<double>::infinity();
    report_.worst_iteration = -1;
    report_.note = std::move(why);
    return report_;
  }

private:
  CheckReport report_;
};

MatrixD policy_q(const Mdp& mdp, const PolicyD& pi) {
  return induce_q(mdp, policy_value_exact(mdp, pi));
}

template <typename... Args>
std::string note(const Args&... args) {
  return detail::concat(args...);
}

}  // namespace

std::string_view to_string(CheckStatus status) {
  switch (status) {
    case CheckStatus::Pass: return "pass";
    case CheckStatus::Fail: return "fail";
    case CheckStatus::NotApplicable: return "not_applicable";
  }
  return "unknown";
}

MetricSeries compute_metrics(const Mdp& mdp, const OptimalityData<double>& opt, const Trajectory& traj) {
  require_same_mdp(mdp, traj, "compute_metrics");
  const bool q_run = tracks_action_values(traj.algorithm);
  const double decay = value_decay(traj, mdp.gamma());

  MetricSeries out;
  out.action_values = q_run;
  for (const auto& rec : traj.records) {
    const VectorD v_pi = policy_value_exact(mdp, rec.policy);
    if (q_run) {
      out.v_err.push_back(sup(opt.q_star - rec.q));
      out.pol_err.push_back(sup(opt.q_star - induce_q(mdp, v_pi)));
    } else {
      out.v_err.push_back(sup(opt.v_star - rec.v));
      out.pol_err.push_back(sup(opt.v_star - v_pi));
    }

    double mass = 0;
    double gap = 0;
    for (Eigen::Index s = 0; s < mdp.num_states(); ++s) {
      double row_mass = 0;
      for (Eigen::Index a = 0; a < mdp.num_actions(); ++a) {
        if (opt.is_optimal(s, a))
          gap = std::max(gap, std::abs(rec.q(s, a) - opt.v_star(s)));
        else
          row_mass += rec.policy(s, a);
      }
      mass = std::max(mass, row_mass);
    }
    out.subopt_mass.push_back(mass);
    out.advantage_gap.push_back(gap);
    out.eta.push_back(rec.eta);
    out.kappa_term.push_back(std::pow(decay, rec.k) * traj.kappa0);
  }
  return out;
}

CheckReport check_monotone(const Mdp& mdp, const OptimalityData<double>& opt, const Trajectory& traj) {
  require_same_mdp(mdp, traj, "check_monotone");
  Tracker tracker("monotone", 1e-8);
  if (is_sampled(traj.algorithm)) return tracker.not_applicable("sample-based trajectory");

  const bool q_run = tracks_action_values(traj.algorithm);
  const auto& first = traj.records.front();
  const double init_excess =
      q_run ? (first.q - bellman_q(mdp, first.policy, first.q)).maxCoeff()
            : (first.v - bellman_pi(mdp, first.policy, first.v)).maxCoeff();
  if (init_excess > 1e-10)
    return tracker.not_applicable(note("initialization violates T^pi0 V0 >= V0 by ", init_excess));

  const double star_slack = opt.vi_tolerance;
  for (std::size_t i = 0; i + 1 < traj.records.size(); ++i) {
    const auto& cur = traj.records[i];
    const auto& next = traj.records[i + 1];
    const int k = cur.k;
    if (q_run) {
      const MatrixD backed = bellman_q(mdp, cur.policy, cur.q);
      const MatrixD q_pi = policy_q(mdp, next.policy);
      tracker.observe((cur.q - backed).maxCoeff(), k);
      tracker.observe((backed - next.q).maxCoeff(), k + 1);
      tracker.observe((next.q - q_pi).maxCoeff(), k + 1);
      tracker.observe((q_pi - opt.q_star).maxCoeff() - star_slack, k + 1);
    } else {
      const VectorD backed = bellman_pi(mdp, cur.policy, cur.v);
      const VectorD v_pi = policy_value_exact(mdp, next.policy);
      tracker.observe((cur.v - backed).maxCoeff(), k);
      tracker.observe((backed - next.v).maxCoeff(), k + 1);
      tracker.observe((next.v - v_pi).maxCoeff(), k + 1);
      tracker.observe((v_pi - opt.v_star).maxCoeff() - star_slack, k + 1);
    }
  }
  return tracker.finish();
}

CheckReport compare_shifted(const Trajectory& raw, const Trajectory& shifted, double kappa,
                            double decay) {
  // Policy and value tolerances differ; both are folded into one excess with tolerance 0.
  constexpr double policy_tol = 1e-9;
  constexpr double value_tol = 1e-8;
  Tracker tracker("shift", 0.0);
  if (raw.records.size() != shifted.records.size())
    throw std::invalid_argument("compare_shifted: trajectories differ in length");

  double worst_policy = 0;
  double worst_value = 0;
  for (std::size_t i = 0; i < raw.records.size(); ++i) {
    const auto& a = raw.records[i];
    const auto& b = shifted.records[i];
    const double pdiff = sup(a.policy.probs() - b.policy.probs());
    const double offset = std::pow(decay, a.k) * kappa;
    const double vdiff = a.v.size() > 0 ? ((a.v - b.v).array() - offset).abs().maxCoeff()
                                        : ((a.q - b.q).array() - offset).abs().maxCoeff();
    worst_policy = std::max(worst_policy, pdiff);
    worst_value = std::max(worst_value, vdiff);
    tracker.observe(std::max(pdiff - policy_tol, vdiff - value_tol), a.k);
  }
  return tracker.finish(note("max policy diff ", worst_policy, ", max value offset error ", worst_value));
}

CheckReport check_shift(const Mdp& mdp, MirrorMap map, const StepSchedule& schedule,
                        const EvalScheme& scheme, const VectorD& v0, const PolicyD& pi0, int T) {
  const auto [kappa0, shifted_v0] = init_shift(mdp, pi0, v0);
  const Trajectory raw = td_pmd(mdp, map, schedule, scheme, v0, pi0, T);
  const Trajectory shifted = td_pmd(mdp, map, schedule, scheme, shifted_v0, pi0, T);
  auto report = compare_shifted(raw, shifted, kappa0, shift_decay(scheme, mdp.gamma()));
  report.note += note(", kappa0 ", kappa0);
  return report;
}

CheckReport check_sublinear(const Mdp& mdp, const OptimalityData<double>& opt, const Trajectory& traj,
                            const MetricSeries& metrics, double eta, double kappa0) {
  require_same_mdp(mdp, traj, "check_sublinear");
  Tracker tracker("sublinear", 2 * opt.vi_tolerance);
  if (is_sampled(traj.algorithm)) return tracker.not_applicable("sample-based trajectory");
  if (!(eta > 0)) throw std::invalid_argument("check_sublinear: eta must be positive");

  const double gamma = mdp.gamma();
  const auto& first = traj.records.front();
  const PolicyD pi_star = canonical_optimal_policy(opt);
  double init_norm = 0;
  double div_term = 0;
  if (tracks_action_values(traj.algorithm)) {
    init_norm = sup(first.q);
    div_term = gamma * expected_divergence(mdp, traj.map, pi_star, first.policy).maxCoeff();
  } else {
    init_norm = sup(first.v);
    div_term = max_divergence(traj.map, pi_star, first.policy);
  }
  if (std::isinf(div_term)) return tracker.not_applicable("optimal policy not in the support of pi_0");

  const double scale = 1 / ((1 - gamma) * (1 - gamma)) + (init_norm + kappa0) / (1 - gamma) +
                       div_term / (eta * (1 - gamma));
  const double decay = value_decay(traj, gamma);
  for (std::size_t k = 0; k < metrics.size(); ++k) {
    const double bound = scale / static_cast<double>(k + 1);
    tracker.observe(metrics.pol_err[k] - bound, static_cast<int>(k));
    tracker.observe(metrics.v_err[k] - bound - std::pow(decay, static_cast<double>(k)) * kappa0,
                    static_cast<int>(k));
  }
  return tracker.finish(note("bound numerator ", scale));
}

CheckReport check_sublinear(const Mdp& mdp, const OptimalityData<double>& opt, const Trajectory& traj,
                            const MetricSeries& metrics) {
  const auto* constant = std::get_if<ConstantStep>(&traj.schedule);
  if (!constant) {
    CheckReport report;
    report.name = "sublinear";
    report.tolerance = 2 * opt.vi_tolerance;
    report.note = "adaptive schedule";
    return report;
  }
  return check_sublinear(mdp, opt, traj, metrics, constant->eta, traj.kappa0);
}

CheckReport check_linear(const Mdp& mdp, const OptimalityData<double>& opt, const Trajectory& traj,
                         const MetricSeries& metrics, double c, std::optional<double> delta) {
  require_same_mdp(mdp, traj, "check_linear");
  Tracker tracker("linear", 4 * opt.vi_tolerance);
  if (!std::holds_alternative<AdaptiveStep>(traj.schedule))
    return tracker.not_applicable("constant schedule");
  if (traj.algorithm == Algorithm::TdPmd && !std::holds_alternative<OneStep>(traj.scheme))
    return tracker.not_applicable("multi-step evaluation");
  if (!(c > 0)) throw std::invalid_argument("check_linear: c must be positive");

  const double gamma = mdp.gamma();
  const bool q_run = tracks_action_values(traj.algorithm);
  const double d = delta.value_or(0.0);
  const double value_noise = q_run ? d / (1 - gamma) : 3 * d / (1 - gamma);
  const double policy_noise = (q_run ? 3 * d : 7 * d) / ((1 - gamma) * (1 - gamma));
  const double base = metrics.v_err.front() + c / (1 - gamma);

  for (std::size_t t = 1; t < metrics.size(); ++t) {
    const double T = static_cast<double>(t);
    tracker.observe(metrics.v_err[t] - (std::pow(gamma, T) * base + value_noise), static_cast<int>(t));
    tracker.observe(metrics.pol_err[t] -
                        (2 * std::pow(gamma, T - 1) / (1 - gamma) * base + policy_noise),
                    static_cast<int>(t));
  }

  // Per-step contraction; sampled runs only satisfy it up to estimation error.
  if (!is_sampled(traj.algorithm)) {
    for (std::size_t k = 0; k + 1 < metrics.size(); ++k) {
      const auto& rec = traj.records[k];
      if (!rec.divergence) continue;
      const double slack = *rec.divergence / rec.eta;
      // Allowed slack here is 2 vi_tolerance against the report's 4; shift accordingly.
      tracker.observe(metrics.v_err[k + 1] - (gamma * metrics.v_err[k] + slack) +
                          2 * opt.vi_tolerance,
                      static_cast<int>(k + 1));
    }
  }
  return tracker.finish(note("c ", c, ", delta ", d));
}

std::optional<double> pqa_finite_time(const Mdp& mdp, const OptimalityData<double>& opt,
                                      const VectorD& v0, const PolicyD& pi0, double eta, double kappa0) {
  if (!opt.delta) return std::nullopt;
  const double gamma = mdp.gamma();
  if (!(gamma > 0)) return std::nullopt;
  const double delta = *opt.delta;
  const double eps = eta * gamma * delta * delta / (2 * eta * gamma * delta + 2);
  const double d_star = max_divergence(MirrorMap::Euclidean, canonical_optimal_policy(opt), pi0);
  const double first = (2 * gamma / eps) *
                       (1 / ((1 - gamma) * (1 - gamma)) + (sup(v0) + kappa0) / (1 - gamma) +
                        d_star / (eta * (1 - gamma)));
  if (kappa0 > 0) {
    const double second =
        (std::log(eps) - std::log(2 * gamma) - std::log(kappa0)) / std::log(gamma);
    return std::ceil(std::max(first, second));
  }
  return std::ceil(first);
}

std::optional<int> zero_mass_from(const MetricSeries& metrics) {
  const int n = static_cast<int>(metrics.subopt_mass.size());
  int start = n;
  while (start > 0 && metrics.subopt_mass[static_cast<std::size_t>(start - 1)] == 0.0) --start;
  if (start == n) return std::nullopt;
  return start;
}

CheckReport check_pqa_finite(const Mdp& mdp, const OptimalityData<double>& opt, const Trajectory& traj,
                             const MetricSeries& metrics, double eta, double kappa0) {
  require_same_mdp(mdp, traj, "check_pqa_finite");
  Tracker tracker("pqa_finite", 0.0);
  if (traj.map != MirrorMap::Euclidean) return tracker.not_applicable("negative-entropy map");
  if (traj.algorithm != Algorithm::TdPmd || !std::holds_alternative<OneStep>(traj.scheme))
    return tracker.not_applicable("not an exact one-step TD-PMD run");
  const auto& first = traj.records.front();
  const auto t0 = pqa_finite_time(mdp, opt, first.v, first.policy, eta, kappa0);
  if (!t0) return tracker.not_applicable("optimal action gap absent");

  const int T = traj.iterations();
  const auto k_star = zero_mass_from(metrics);
  const std::string found = k_star ? std::to_string(*k_star) : std::string("never");
  // The theorem is silent before T_0; a shorter horizon has nothing to check.
  if (*t0 > static_cast<double>(T))
    return tracker.not_applicable(note("horizon ", T, " below T0 ", *t0, ", zero mass from ", found));
  for (int k = static_cast<int>(*t0); k <= T; ++k) {
    const auto i = static_cast<std::size_t>(k);
    tracker.observe(std::max(metrics.subopt_mass[i], metrics.pol_err[i] - 2 * opt.vi_tolerance), k);
  }
  return tracker.finish(note("T0 ", *t0, ", zero mass from ", found));
}

CheckReport check_pqa_finite(const Mdp& mdp, const OptimalityData<double>& opt, const Trajectory& traj,
                             const MetricSeries& metrics) {
  const auto* constant = std::get_if<ConstantStep>(&traj.schedule);
  if (!constant) {
    CheckReport report;
    report.name = "pqa_finite";
    report.note = "adaptive schedule";
    return report;
  }
  return check_pqa_finite(mdp, opt, traj, metrics, constant->eta, traj.kappa0);
}

CheckReport check_subopt_bound(const OptimalityData<double>& opt, const MetricSeries& metrics) {
  Tracker tracker("subopt_bound", 1e-8);
  if (!opt.delta) return tracker.not_applicable("optimal action gap absent");
  for (std::size_t k = 0; k < metrics.size(); ++k)
    tracker.observe(metrics.subopt_mass[k] - metrics.pol_err[k] / *opt.delta, static_cast<int>(k));
  return tracker.finish();
}

CheckReport check_npg_policy_convergence(const OptimalityData<double>& opt, const Trajectory& traj,
                                         const MetricSeries& metrics, std::optional<double> final_mass) {
  if (traj.map != MirrorMap::NegEntropy) {
    CheckReport report;
    report.name = "npg_policy";
    report.note = "euclidean map";
    return report;
  }
  auto report = check_subopt_bound(opt, metrics);
  report.name = "npg_policy";
  if (report.status == CheckStatus::NotApplicable || !final_mass) return report;
  const double last = metrics.subopt_mass.back();
  report.note = note("final subopt mass ", last, ", threshold ", *final_mass);
  if (last > *final_mass) {
    report.status = CheckStatus::Fail;
    // Record the final-mass failure as the worst point when it is the only one.
    if (report.worst_violation <= report.tolerance) {
      report.worst_violation = last - *final_mass + report.tolerance;
      report.worst_iteration = static_cast<int>(metrics.size()) - 1;
    }
  }
  return report;
}

CheckReport check_three_point(const Mdp& mdp, const OptimalityData<double>& opt, const Trajectory& traj) {
  require_same_mdp(mdp, traj, "check_three_point");
  // Residuals are differences of terms of size eta*|q|, so the floor scales with it.
  Tracker tracker("three_point", 0.0);
  const PolicyD pi_star = canonical_optimal_policy(opt);
  double worst_ratio = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < traj.records.size(); ++i) {
    const auto& cur = traj.records[i];
    const auto& next = traj.records[i + 1];
    const PolicyD greedy = greedy_policy(cur.q, &cur.policy);
    for (Eigen::Index s = 0; s < mdp.num_states(); ++s) {
      const VectorD q_row = cur.q.row(s).transpose();
      const VectorD p_old = cur.policy.row(s).transpose();
      const VectorD p_new = next.policy.row(s).transpose();
      const double tol = 1e-9 * std::max(1.0, cur.eta * q_row.cwiseAbs().maxCoeff());
      for (const PolicyD* ref : {&cur.policy, &greedy, &pi_star}) {
        const VectorD p_ref = ref->row(s).transpose();
        const double residual = three_point_residual(traj.map, q_row, p_old, p_new, p_ref, cur.eta);
        const double excess = -residual - tol;
        worst_ratio = std::max(worst_ratio, -residual / tol);
        tracker.observe(excess, cur.k);
      }
    }
  }
  return tracker.finish(note("worst residual relative to its floor ", worst_ratio));
}

CheckReport check_error_link(const Mdp& mdp, const OptimalityData<double>& opt, const Trajectory& traj,
                             const MetricSeries& metrics) {
  require_same_mdp(mdp, traj, "check_error_link");
  Tracker tracker("error_link", 4 * opt.vi_tolerance);
  if (!exact_one_step(traj)) return tracker.not_applicable("not an exact one-step run");
  const double gamma = mdp.gamma();
  for (std::size_t t = 1; t < metrics.size(); ++t)
    tracker.observe(metrics.pol_err[t] - (metrics.v_err[t] + metrics.v_err[t - 1]) / (1 - gamma),
                    static_cast<int>(t));
  return tracker.finish();
}

}  // namespace tdpmd
