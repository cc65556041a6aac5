#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

namespace tdpmd {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// State values V, one entry per state.
template <typename Scalar>
using StateValue = Vector<Scalar>;

/// Action values Q, |S| x |A|.
template <typename Scalar>
using ActionValue = Matrix<Scalar>;

inline constexpr double kRowSumTolerance = 1e-12;

class dimension_error : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

namespace detail {

template <typename... Args>
std::string concat(const Args&... args) {
  std::ostringstream os;
  (os << ... << args);
  return os.str();
}

inline void require_dims(bool ok, const char* op, const std::string& what) {
  if (!ok) throw dimension_error(concat(op, ": dimension mismatch (", what, ")"));
}

}  // namespace detail

/**
 * Finite discounted MDP.
 *
 * Transitions are stored as a (|S||A|) x |S| matrix whose row s*|A| + a is
 * the distribution P(.|s,a). This keeps every Bellman backup a single
 * matrix-vector product.
 */
template <typename Scalar = double>
class TabularMdp {
public:
  TabularMdp(Matrix<Scalar> rewards, Matrix<Scalar> transitions, Scalar gamma)
      : rewards_(std::move(rewards)), transitions_(std::move(transitions)), gamma_(gamma) {
    validate();
  }

  Eigen::Index num_states() const { return rewards_.rows(); }
  Eigen::Index num_actions() const { return rewards_.cols(); }
  Scalar gamma() const { return gamma_; }
  const Matrix<Scalar>& rewards() const { return rewards_; }
  const Matrix<Scalar>& transitions() const { return transitions_; }

  /// P(.|s,a) as a row expression.
  auto transition_row(Eigen::Index s, Eigen::Index a) const {
    return transitions_.row(s * num_actions() + a);
  }

  bool operator==(const TabularMdp& other) const {
    return gamma_ == other.gamma_ && rewards_ == other.rewards_ &&
           transitions_ == other.transitions_;
  }

private:
  void validate() const {
    using detail::concat;
    const auto S = rewards_.rows();
    const auto A = rewards_.cols();
    if (S < 1 || A < 1) throw std::invalid_argument("mdp: num_states and num_actions must be >= 1");
    if (!(gamma_ >= Scalar(0) && gamma_ < Scalar(1)))
      throw std::invalid_argument(concat("mdp: gamma must lie in [0,1), got ", gamma_));
    if (transitions_.rows() != S * A || transitions_.cols() != S)
      throw std::invalid_argument(concat("mdp: transitions must be ", S * A, "x", S, ", got ",
                                         transitions_.rows(), "x", transitions_.cols()));
    for (Eigen::Index s = 0; s < S; ++s) {
      for (Eigen::Index a = 0; a < A; ++a) {
        const Scalar r = rewards_(s, a);
        if (!(r >= Scalar(0) && r <= Scalar(1)))
          throw std::invalid_argument(
              concat("mdp: reward at state ", s, ", action ", a, " is ", r, ", outside [0,1]"));
        const auto row = transitions_.row(s * A + a);
        for (Eigen::Index t = 0; t < S; ++t) {
          if (!(row(t) >= Scalar(0)))
            throw std::invalid_argument(concat("mdp: transition P(", t, "|", s, ",", a,
                                               ") = ", row(t), " is negative or not finite"));
        }
        const Scalar sum = row.sum();
        if (std::abs(sum - Scalar(1)) > Scalar(kRowSumTolerance))
          throw std::invalid_argument(
              concat("mdp: transition row for state ", s, ", action ", a, " sums to ", sum));
      }
    }
  }

  Matrix<Scalar> rewards_;
  Matrix<Scalar> transitions_;
  Scalar gamma_;
};

/// Row-stochastic |S| x |A| matrix; row s is pi(.|s).
template <typename Scalar = double>
class Policy {
public:
  explicit Policy(Matrix<Scalar> probs) : probs_(std::move(probs)) {
    using detail::concat;
    if (probs_.rows() < 1 || probs_.cols() < 1) throw std::invalid_argument("policy: empty matrix");
    for (Eigen::Index s = 0; s < probs_.rows(); ++s) {
      for (Eigen::Index a = 0; a < probs_.cols(); ++a)
        if (!(probs_(s, a) >= Scalar(0)))
          throw std::invalid_argument(
              concat("policy: entry (", s, ",", a, ") = ", probs_(s, a), " is negative"));
      const Scalar sum = probs_.row(s).sum();
      if (std::abs(sum - Scalar(1)) > Scalar(kRowSumTolerance))
        throw std::invalid_argument(concat("policy: row ", s, " sums to ", sum));
    }
  }

  static Policy uniform(Eigen::Index num_states, Eigen::Index num_actions) {
    return Policy(Matrix<Scalar>::Constant(num_states, num_actions,
                                           Scalar(1) / Scalar(num_actions)));
  }

  /// Deterministic policy from one action index per state.
  static Policy deterministic(const std::vector<Eigen::Index>& actions, Eigen::Index num_actions) {
    Matrix<Scalar> p = Matrix<Scalar>::Zero(static_cast<Eigen::Index>(actions.size()), num_actions);
    for (std::size_t s = 0; s < actions.size(); ++s) p(static_cast<Eigen::Index>(s), actions[s]) = 1;
    return Policy(std::move(p));
  }

  Eigen::Index num_states() const { return probs_.rows(); }
  Eigen::Index num_actions() const { return probs_.cols(); }
  const Matrix<Scalar>& probs() const { return probs_; }
  auto row(Eigen::Index s) const { return probs_.row(s); }
  Scalar operator()(Eigen::Index s, Eigen::Index a) const { return probs_(s, a); }

private:
  Matrix<Scalar> probs_;
};

template <typename Scalar>
void require_policy_dims(const TabularMdp<Scalar>& mdp, const Policy<Scalar>& pi, const char* op) {
  detail::require_dims(pi.num_states() == mdp.num_states() && pi.num_actions() == mdp.num_actions(),
                       op, "policy shape differs from MDP");
}

/// Lets Eigen expressions convert to the parameter type; Scalar is deduced from the MDP.
template <typename T>
using NonDeduced = std::type_identity_t<T>;

namespace detail {

/// One-step lookahead r + gamma * K v for an arbitrary (|S||A|) x |S| kernel K.
template <typename Scalar>
ActionValue<Scalar> lookahead(const Matrix<Scalar>& rewards, const Matrix<Scalar>& kernel,
                              Scalar gamma, const StateValue<Scalar>& v) {
  const Vector<Scalar> expected = kernel * v;
  using RowMajor = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const RowMajor> next(expected.data(), rewards.rows(), rewards.cols());
  return rewards + gamma * next;
}

}  // namespace detail

/// Q(s,a) = r(s,a) + gamma * sum_s' P(s'|s,a) v(s').
template <typename Scalar>
ActionValue<Scalar> induce_q(const TabularMdp<Scalar>& mdp, const NonDeduced<StateValue<Scalar>>& v) {
  detail::require_dims(v.size() == mdp.num_states(), "induce_q", "value length");
  return detail::lookahead(mdp.rewards(), mdp.transitions(), mdp.gamma(), v);
}

/// (T^pi v)(s) = <pi(.|s), Q(s,.)> with Q induced from v.
template <typename Scalar>
StateValue<Scalar> bellman_pi(const TabularMdp<Scalar>& mdp, const Policy<Scalar>& pi,
                              const NonDeduced<StateValue<Scalar>>& v) {
  require_policy_dims(mdp, pi, "bellman_pi");
  return pi.probs().cwiseProduct(induce_q(mdp, v)).rowwise().sum();
}

template <typename Scalar>
StateValue<Scalar> bellman_opt(const TabularMdp<Scalar>& mdp, const NonDeduced<StateValue<Scalar>>& v) {
  return induce_q(mdp, v).rowwise().maxCoeff();
}

/// (F^pi Q)(s,a) = r(s,a) + gamma * E_{s'} E_{a'~pi} Q(s',a').
template <typename Scalar>
ActionValue<Scalar> bellman_q(const TabularMdp<Scalar>& mdp, const Policy<Scalar>& pi,
                              const NonDeduced<ActionValue<Scalar>>& q) {
  require_policy_dims(mdp, pi, "bellman_q");
  detail::require_dims(q.rows() == mdp.num_states() && q.cols() == mdp.num_actions(), "bellman_q",
                       "action-value shape");
  const StateValue<Scalar> next = pi.probs().cwiseProduct(q).rowwise().sum();
  return induce_q(mdp, next);
}

/// State-to-state kernel P^pi(s,s') = sum_a pi(a|s) P(s'|s,a).
template <typename Scalar>
Matrix<Scalar> policy_transition(const TabularMdp<Scalar>& mdp, const Policy<Scalar>& pi) {
  require_policy_dims(mdp, pi, "policy_transition");
  const auto S = mdp.num_states();
  const auto A = mdp.num_actions();
  Matrix<Scalar> out = Matrix<Scalar>::Zero(S, S);
  for (Eigen::Index s = 0; s < S; ++s)
    for (Eigen::Index a = 0; a < A; ++a) out.row(s) += pi(s, a) * mdp.transition_row(s, a);
  return out;
}

template <typename Scalar>
Vector<Scalar> policy_reward(const TabularMdp<Scalar>& mdp, const Policy<Scalar>& pi) {
  require_policy_dims(mdp, pi, "policy_reward");
  return pi.probs().cwiseProduct(mdp.rewards()).rowwise().sum();
}

/// Exact V^pi via a dense LU solve of (I - gamma P^pi) V = r^pi.
template <typename Scalar>
StateValue<Scalar> policy_value_exact(const TabularMdp<Scalar>& mdp, const Policy<Scalar>& pi) {
  const auto S = mdp.num_states();
  const Matrix<Scalar> system =
      Matrix<Scalar>::Identity(S, S) - mdp.gamma() * policy_transition(mdp, pi);
  Eigen::PartialPivLU<Matrix<Scalar>> lu(system);
  const Vector<Scalar> r = policy_reward(mdp, pi);
  StateValue<Scalar> v = lu.solve(r);
  // One step of iterative refinement keeps the fixed-point residual near
  // machine precision for gamma close to 1.
  v += lu.solve(r - system * v);
  if (!v.allFinite()) throw std::runtime_error("policy_value_exact: linear solve failed");
  return v;
}

template <typename Scalar>
void require_distribution(const Vector<Scalar>& d, Eigen::Index n, const char* op) {
  if (d.size() != n) throw dimension_error(detail::concat(op, ": distribution length ", d.size(),
                                                          ", expected ", n));
  if ((d.array() < Scalar(0)).any() || !d.allFinite() ||
      std::abs(d.sum() - Scalar(1)) > Scalar(1e-10))
    throw std::invalid_argument(detail::concat(op, ": not a probability vector"));
}

/// d^pi_mu = (1-gamma) mu^T (I - gamma P^pi)^{-1}.
template <typename Scalar>
Vector<Scalar> visitation_measure(const TabularMdp<Scalar>& mdp, const Policy<Scalar>& pi,
                                  const NonDeduced<Vector<Scalar>>& mu) {
  require_distribution(mu, mdp.num_states(), "visitation_measure");
  const auto S = mdp.num_states();
  const Matrix<Scalar> system =
      Matrix<Scalar>::Identity(S, S) - mdp.gamma() * policy_transition(mdp, pi).transpose();
  return (Scalar(1) - mdp.gamma()) * system.partialPivLu().solve(mu);
}

/// Discounted state-action occupancy nu^pi_rho, flattened as index s*|A| + a.
template <typename Scalar>
Vector<Scalar> visitation_measure_sa(const TabularMdp<Scalar>& mdp, const Policy<Scalar>& pi,
                                     const NonDeduced<Vector<Scalar>>& rho) {
  require_policy_dims(mdp, pi, "visitation_measure_sa");
  const auto S = mdp.num_states();
  const auto A = mdp.num_actions();
  require_distribution(rho, S * A, "visitation_measure_sa");
  // M[(s,a),(s',a')] = P(s'|s,a) pi(a'|s')
  Matrix<Scalar> m(S * A, S * A);
  for (Eigen::Index sa = 0; sa < S * A; ++sa)
    for (Eigen::Index t = 0; t < S; ++t)
      m.block(sa, t * A, 1, A) = mdp.transitions()(sa, t) * pi.row(t);
  const Matrix<Scalar> system = Matrix<Scalar>::Identity(S * A, S * A) - mdp.gamma() * m.transpose();
  return (Scalar(1) - mdp.gamma()) * system.partialPivLu().solve(rho);
}

template <typename Scalar = double>
struct OptimalityData {
  StateValue<Scalar> v_star;
  ActionValue<Scalar> q_star;
  std::vector<std::vector<Eigen::Index>> optimal_actions;
  /// Minimum optimal-action gap; empty when every action is optimal everywhere.
  std::optional<Scalar> delta;
  /// Certified bound on ||v_star - V*||_inf.
  Scalar vi_tolerance;

  bool is_optimal(Eigen::Index s, Eigen::Index a) const {
    const auto& set = optimal_actions[static_cast<std::size_t>(s)];
    return std::find(set.begin(), set.end(), a) != set.end();
  }
};

/**
 * Value iteration from zero, stopped when ||TV - V|| <= tol (1-gamma)/(2 gamma)
 * so that the returned TV is within tol/2 of V*. Optimal actions are those
 * within opt_tol of the row maximum of Q*.
 */
template <typename Scalar>
OptimalityData<Scalar> optimal_values(const TabularMdp<Scalar>& mdp, Scalar tol = Scalar(1e-9),
                                      Scalar opt_tol = Scalar(1e-6)) {
  if (!(tol > 0) || !(opt_tol > 0))
    throw std::invalid_argument("optimal_values: tolerances must be positive");
  const Scalar gamma = mdp.gamma();
  StateValue<Scalar> v = StateValue<Scalar>::Zero(mdp.num_states());
  if (gamma == Scalar(0)) {
    v = bellman_opt(mdp, v);
  } else {
    const Scalar threshold = tol * (Scalar(1) - gamma) / (Scalar(2) * gamma);
    // The threshold can sit below the rounding floor of the backup; stop once
    // the residual stops shrinking and report the accuracy actually certified.
    Scalar certified = tol;
    for (;;) {
      StateValue<Scalar> next = bellman_opt(mdp, v);
      const Scalar residual = (next - v).cwiseAbs().maxCoeff();
      v = std::move(next);
      if (residual <= threshold) break;
      const Scalar floor = Scalar(64) * std::numeric_limits<Scalar>::epsilon() *
                           std::max(Scalar(1), v.cwiseAbs().maxCoeff());
      if (residual <= floor) {
        certified = std::max(tol, Scalar(2) * gamma * residual / (Scalar(1) - gamma));
        break;
      }
    }
    tol = certified;
  }

  OptimalityData<Scalar> out;
  out.v_star = v;
  out.q_star = induce_q(mdp, v);
  out.vi_tolerance = tol;
  out.optimal_actions.resize(static_cast<std::size_t>(mdp.num_states()));
  std::optional<Scalar> delta;
  for (Eigen::Index s = 0; s < mdp.num_states(); ++s) {
    const Scalar best = out.q_star.row(s).maxCoeff();
    auto& set = out.optimal_actions[static_cast<std::size_t>(s)];
    for (Eigen::Index a = 0; a < mdp.num_actions(); ++a) {
      const Scalar gap = best - out.q_star(s, a);
      if (gap <= opt_tol) {
        set.push_back(a);
      } else if (!delta || gap < *delta) {
        delta = gap;
      }
    }
  }
  out.delta = delta;
  return out;
}

/// Policy placing all mass on the first optimal action of each state.
template <typename Scalar>
Policy<Scalar> canonical_optimal_policy(const OptimalityData<Scalar>& opt) {
  std::vector<Eigen::Index> actions;
  actions.reserve(opt.optimal_actions.size());
  for (const auto& set : opt.optimal_actions) actions.push_back(set.front());
  return Policy<Scalar>::deterministic(actions, opt.q_star.cols());
}

using Mdp = TabularMdp<double>;
using PolicyD = Policy<double>;
using VectorD = Vector<double>;
using MatrixD = Matrix<double>;

}  // namespace tdpmd
