#include "helpers.hpp"
#include "oracles.hpp"
#include "tdpmd/diagnostics.hpp"
#include "tdpmd/sampling.hpp"

#include <doctest.h>

using namespace tdpmd;
using namespace testing;

namespace {

Mdp two_state_stochastic(double gamma) {
  MatrixD r(2, 2);
  r << 0.1, 0.9, 0.6, 0.3;
  MatrixD p(4, 2);
  p << 0.3, 0.7, 0.8, 0.2, 0.5, 0.5, 0.1, 0.9;
  return Mdp(r, p, gamma);
}

bool one_hot(const PolicyD& pi) {
  for (long s = 0; s < pi.num_states(); ++s)
    if (pi.row(s).maxCoeff() != 1.0) return false;
  return true;
}

}  // namespace

TEST_CASE("splitmix64 and substream seeds") {
  // Published first output of SplitMix64 seeded with 0.
  CHECK(splitmix64(0) == 0xe220a8397b1dcdafULL);
  CHECK(substream_seed(1, 2, 3, 4) == substream_seed(1, 2, 3, 4));
  CHECK(substream_seed(1, 2, 3, 4) != substream_seed(1, 2, 4, 3));
  CHECK(substream_seed(1, 0, 0, 0) != substream_seed(2, 0, 0, 0));
  const std::uint64_t h = splitmix64(splitmix64(splitmix64(splitmix64(7) ^ splitmix64(1)) ^ splitmix64(2)) ^
                                     splitmix64(3));
  CHECK(substream_seed(7, 1, 2, 3) == h);
}

TEST_CASE("uniform01 and inverse-cdf draws") {
  std::mt19937_64 gen(1);
  for (int i = 0; i < 1000; ++i) {
    const double u = uniform01(gen);
    CHECK(u >= 0);
    CHECK(u < 1);
  }
  VectorD cdf(4);
  cdf << 0.25, 0.25, 0.75, 1.0 - 1e-16;
  CHECK(sample_from_cdf(cdf, 0.0) == 0);
  CHECK(sample_from_cdf(cdf, 0.25) == 2);
  CHECK(sample_from_cdf(cdf, 0.8) == 3);
  VectorD short_cdf(3);
  short_cdf << 0.5, 0.9999999999999, 0.9999999999999;
  CHECK(sample_from_cdf(short_cdf, 0.99999999999999) == 1);
}

TEST_CASE("next-state draws follow the kernel") {
  const Mdp m = two_state_stochastic(0.9);
  const GenerativeModel gm(m, 5);
  auto gen = gm.stream(0, 1, 1);
  const int n = 200000;
  int hits = 0;
  for (int i = 0; i < n; ++i) hits += gm.next_state(1, 1, gen) == 1;
  const double p = 0.9, se = std::sqrt(p * (1 - p) / n);
  CHECK(std::abs(hits / static_cast<double>(n) - p) <= 5 * se);
}

TEST_CASE("hoeffding_sizes") {
  const auto s = hoeffding_sizes(10, 2, 2, 0.5, 0.1, 0.1);
  CHECK(s.m_q == 1476);
  CHECK(s.m_q == static_cast<long>(std::ceil(200 * std::log(1600.0))));
  CHECK(s.m_v == static_cast<long>(std::ceil(200 * std::log(800.0))));
  const auto single = hoeffding_sizes(10, 2, 1, 0.5, 0.1, 0.1);
  CHECK(single.m_q == single.m_v);
  const auto halved = hoeffding_sizes(10, 2, 2, 0.5, 0.05, 0.1);
  CHECK(halved.m_q <= 4 * s.m_q);
  CHECK(halved.m_q >= 4 * s.m_q - 3);
  CHECK(halved.m_v <= 4 * s.m_v);
  CHECK(halved.m_v >= 4 * s.m_v - 3);
  const auto q = hoeffding_sizes(10, 2, 2, 0.5, 0.1, 0.1, true);
  CHECK(q.m_q == static_cast<long>(std::ceil(200 * std::log(800.0))));
  CHECK(q.m_v == 0);
  CHECK_THROWS(hoeffding_sizes(10, 2, 2, 1.0, 0.1, 0.1));
  CHECK_THROWS(hoeffding_sizes(10, 2, 2, 0.5, 0.0, 0.1));
  CHECK_THROWS(hoeffding_sizes(10, 2, 2, 0.5, 0.1, 1.0));
  CHECK_THROWS(hoeffding_sizes(0, 2, 2, 0.5, 0.1, 0.1));
}

TEST_CASE("resolve_sizes fills only missing counts") {
  const Mdp m = random_mdp(1, 2, 2, 0.5);
  SampleConfig cfg;
  cfg.T = 10;
  cfg.m_q = 7;
  const auto out = resolve_sizes(cfg, m, false);
  CHECK(out.m_q == 7);
  CHECK(out.m_v == hoeffding_sizes(10, 2, 2, 0.5, 0.1, 0.1).m_v);
  CHECK(resolve_sizes(cfg, m, true).m_q == 7);
}

TEST_CASE("sample_q_hat") {
  SUBCASE("deterministic transitions are exact") {
    const Mdp m = deterministic_mdp(2, 4, 3, 0.8);
    GenerativeModel gm(m, 3);
    const VectorD v = VectorD::LinSpaced(4, 0, 4);
    CHECK(sample_q_hat(gm, v, 1) == induce_q(m, v));
    CHECK(sample_q_hat(gm, v, 17) == induce_q(m, v));
    CHECK(gm.epoch() == 2);
  }
  SUBCASE("gamma zero gives rewards") {
    const Mdp m = random_mdp(3, 3, 2, 0.0);
    GenerativeModel gm(m, 4);
    CHECK(sample_q_hat(gm, VectorD::Constant(3, 0.5), 5) == m.rewards());
  }
  SUBCASE("concentrates at large sample counts") {
    const Mdp m = two_state_stochastic(0.9);
    GenerativeModel gm(m, 5);
    VectorD v(2);
    v << 0, 10;
    CHECK(sup(sample_q_hat(gm, v, 100000) - induce_q(m, v)) <= 0.02);
  }
  SUBCASE("preconditions") {
    const Mdp m = two_state_stochastic(0.5);
    GenerativeModel gm(m, 5);
    CHECK_THROWS(sample_q_hat(gm, VectorD::Constant(2, 2.5), 10));
    CHECK_THROWS(sample_q_hat(gm, VectorD::Zero(2), 0));
    CHECK_THROWS(sample_q_hat(gm, VectorD::Zero(3), 10));
  }
}

TEST_CASE("sample_td_hat") {
  SUBCASE("deterministic policy and transitions are exact") {
    const Mdp m = deterministic_mdp(6, 4, 3, 0.8);
    GenerativeModel gm(m, 7);
    const PolicyD pi = PolicyD::deterministic({0, 2, 1, 1}, 3);
    const VectorD v = VectorD::LinSpaced(4, 0, 4);
    CHECK(sample_td_hat(gm, pi, v, 3) == bellman_pi(m, pi, v));
  }
  SUBCASE("gamma zero with a deterministic policy gives the reward") {
    const Mdp m = random_mdp(8, 3, 3, 0.0);
    GenerativeModel gm(m, 9);
    const PolicyD pi = PolicyD::deterministic({2, 0, 1}, 3);
    const VectorD out = sample_td_hat(gm, pi, VectorD::Constant(3, 1.0), 4);
    for (long s = 0; s < 3; ++s) CHECK(out(s) == m.rewards()(s, s == 0 ? 2 : s == 1 ? 0 : 1));
  }
  SUBCASE("concentrates at large sample counts") {
    const Mdp m = two_state_stochastic(0.9);
    GenerativeModel gm(m, 10);
    VectorD v(2);
    v << 0, 10;
    const PolicyD pi = PolicyD::uniform(2, 2);
    // Hoeffding 3-sigma margin: range 1 + 10 gamma = 10, m = 1e5.
    CHECK((sample_td_hat(gm, pi, v, 100000) - bellman_pi(m, pi, v)).cwiseAbs().maxCoeff() <= 3 * 10.0 / std::sqrt(1e5));
  }
}

TEST_CASE("sample_q_hat is unbiased") {
  const Mdp m = two_state_stochastic(0.9);
  VectorD v(2);
  v << 1, 9;
  const MatrixD exact = induce_q(m, v);
  const int reps = 10000;
  const long m_q = 4;
  MatrixD mean = MatrixD::Zero(2, 2);
  for (int i = 0; i < reps; ++i) {
    GenerativeModel gm(m, 1000 + static_cast<std::uint64_t>(i));
    mean += sample_q_hat(gm, v, m_q);
  }
  mean /= reps;
  for (long s = 0; s < 2; ++s)
    for (long a = 0; a < 2; ++a) {
      const double p1 = m.transition_row(s, a)(1);
      const double sd = m.gamma() * (v(1) - v(0)) * std::sqrt(p1 * (1 - p1));
      const double se = sd / std::sqrt(static_cast<double>(reps * m_q));
      CHECK(std::abs(mean(s, a) - exact(s, a)) <= 5 * se);
    }
}

TEST_CASE("sample_bellman_q") {
  SUBCASE("deterministic MDP and policy match the exact chain") {
    const Mdp m = deterministic_mdp(11, 3, 2, 0.7);
    GenerativeModel gm(m, 12);
    const PolicyD pi = PolicyD::deterministic({1, 0, 1}, 2);
    MatrixD q = MatrixD::Constant(3, 2, 1.0), exact = q;
    for (int k = 0; k < 5; ++k) {
      q = sample_bellman_q(gm, pi, q, 3);
      exact = bellman_q(m, pi, exact);
      CHECK(sup(q - exact) <= 1e-13);
    }
  }
  SUBCASE("concentrates at large sample counts") {
    const Mdp m = two_state_stochastic(0.8);
    GenerativeModel gm(m, 13);
    MatrixD q(2, 2);
    q << 0, 1, 3, 5;
    const PolicyD pi = PolicyD::uniform(2, 2);
    CHECK(sup(sample_bellman_q(gm, pi, q, 100000) - oracle::bellman_q(m, pi, q)) <= 3 * 0.8 * 5 / std::sqrt(1e5));
  }
}

TEST_CASE("sample_td_pmd") {
  SUBCASE("deterministic MDP reproduces the exact run bit for bit") {
    const Mdp m = deterministic_mdp(14, 4, 3, 0.8);
    const PolicyD pi0 = PolicyD::deterministic({0, 1, 2, 0}, 3);
    const VectorD v0 = VectorD::Zero(4);
    SampleConfig cfg;
    cfg.T = 15;
    cfg.m_q = 3;
    cfg.m_v = 3;
    GenerativeModel gm(m, 15);
    const auto sampled = sample_td_pmd(gm, MirrorMap::Euclidean, ConstantStep{50.0}, cfg, v0, pi0);
    const auto exact = td_pmd(m, MirrorMap::Euclidean, ConstantStep{50.0}, OneStep{}, v0, pi0, 15);
    for (int k = 0; k <= 15; ++k) {
      REQUIRE(one_hot(exact.records[k].policy));
      CHECK(sampled.records[k].policy.probs() == exact.records[k].policy.probs());
      CHECK(sampled.records[k].v == exact.records[k].v);
      CHECK(sampled.records[k].q == exact.records[k].q);
    }
    CHECK(sampled.variant() == "sample_td_pmd/euclidean");
  }
  SUBCASE("replay is identical") {
    const Mdp m = random_mdp(16, 3, 2, 0.7);
    SampleConfig cfg;
    cfg.T = 1;
    GenerativeModel a(m, 17), b(m, 17);
    const auto ra = sample_td_pmd(a, MirrorMap::NegEntropy, AdaptiveStep{}, cfg, VectorD::Zero(3), PolicyD::uniform(3, 2));
    const auto rb = sample_td_pmd(b, MirrorMap::NegEntropy, AdaptiveStep{}, cfg, VectorD::Zero(3), PolicyD::uniform(3, 2));
    for (int k = 0; k <= 1; ++k) {
      CHECK(ra.records[k].v == rb.records[k].v);
      CHECK(ra.records[k].q == rb.records[k].q);
      CHECK(ra.records[k].policy.probs() == rb.records[k].policy.probs());
    }
    GenerativeModel c(m, 18);
    const auto rc = sample_td_pmd(c, MirrorMap::NegEntropy, AdaptiveStep{}, cfg, VectorD::Zero(3), PolicyD::uniform(3, 2));
    CHECK(rc.records[1].q != ra.records[1].q);
  }
  SUBCASE("iterates stay bounded") {
    const Mdp m = random_mdp(19, 4, 3, 0.75);
    SampleConfig cfg;
    cfg.T = 20;
    cfg.m_q = 5;
    cfg.m_v = 5;
    GenerativeModel gm(m, 20);
    const auto traj = sample_td_pmd(gm, MirrorMap::Euclidean, ConstantStep{1.0}, cfg,
                                    VectorD::Constant(4, 1 / (1 - 0.75)), PolicyD::uniform(4, 3));
    for (const auto& rec : traj.records) CHECK(rec.v.cwiseAbs().maxCoeff() <= 1 / (1 - 0.75) + 1e-12);
  }
  SUBCASE("rejects an unbounded start") {
    const Mdp m = random_mdp(19, 4, 3, 0.5);
    SampleConfig cfg;
    GenerativeModel gm(m, 20);
    CHECK_THROWS(sample_td_pmd(gm, MirrorMap::Euclidean, ConstantStep{1.0}, cfg, VectorD::Constant(4, 2.5),
                               PolicyD::uniform(4, 3)));
  }
}

TEST_CASE("estimation error events stay below the failure budget") {
  const Mdp m = random_mdp(21, 3, 2, 0.6);
  SampleConfig cfg;
  cfg.T = 10;
  cfg.delta = 0.1;
  cfg.alpha = 0.1;
  long violations = 0, total = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    GenerativeModel gm(m, seed);
    const auto traj = sample_td_pmd(gm, MirrorMap::NegEntropy, AdaptiveStep{}, cfg, VectorD::Zero(3),
                                    PolicyD::uniform(3, 2));
    for (const auto& rec : traj.records) {
      const MatrixD err = (rec.q - induce_q(m, rec.v)).cwiseAbs();
      violations += (err.array() > cfg.delta).count();
      total += err.size();
    }
  }
  CHECK(static_cast<double>(violations) / static_cast<double>(total) <= cfg.alpha + 0.05);
}

TEST_CASE("sampled runs meet the high-probability bound") {
  const Mdp m = random_mdp(22, 3, 2, 0.5);
  const auto opt = optimal_values(m);
  SampleConfig cfg;
  cfg.T = 10;
  cfg.delta = 0.05;
  cfg.alpha = 0.05;
  const double c = 1.0, g = m.gamma();
  const double v_bound = (2 * (2 + c) * std::pow(g, cfg.T - 1) + 7 * cfg.delta) / ((1 - g) * (1 - g));
  const double q_bound = (2 * (2 + c) * std::pow(g, cfg.T - 1) + 3 * cfg.delta) / ((1 - g) * (1 - g));
  int v_ok = 0, q_ok = 0;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    GenerativeModel gm(m, seed);
    const auto v_run = sample_td_pmd(gm, MirrorMap::NegEntropy, AdaptiveStep{c, 1e-3}, cfg, VectorD::Zero(3),
                                     PolicyD::uniform(3, 2));
    v_ok += compute_metrics(m, opt, v_run).pol_err.back() <= v_bound;
    GenerativeModel gq(m, seed);
    const auto q_run = sample_q_td_pmd(gq, MirrorMap::NegEntropy, AdaptiveStep{c, 1e-3}, cfg,
                                       MatrixD::Zero(3, 2), PolicyD::uniform(3, 2));
    q_ok += compute_metrics(m, opt, q_run).pol_err.back() <= q_bound;
  }
  CHECK(v_ok >= 38);
  CHECK(q_ok >= 38);
}

TEST_CASE("sample_q_td_pmd") {
  SUBCASE("deterministic MDP and policy give the exact chain") {
    const Mdp m = deterministic_mdp(23, 3, 2, 0.7);
    const PolicyD pi0 = PolicyD::deterministic({0, 1, 1}, 2);
    const MatrixD q0 = MatrixD::Constant(3, 2, 0.5);
    SampleConfig cfg;
    cfg.T = 10;
    cfg.m_q = 2;
    GenerativeModel gm(m, 24);
    const auto sampled = sample_q_td_pmd(gm, MirrorMap::Euclidean, ConstantStep{50.0}, cfg, q0, pi0);
    const auto exact = q_td_pmd(m, MirrorMap::Euclidean, ConstantStep{50.0}, q0, pi0, 10);
    for (int k = 0; k <= 10; ++k) {
      REQUIRE(one_hot(exact.records[k].policy));
      CHECK(sampled.records[k].policy.probs() == exact.records[k].policy.probs());
      CHECK(sup(sampled.records[k].q - exact.records[k].q) <= 1e-13);
    }
  }
  SUBCASE("gamma zero gives rewards after the first step") {
    const Mdp m = random_mdp(25, 3, 3, 0.0);
    SampleConfig cfg;
    cfg.T = 5;
    cfg.m_q = 3;
    GenerativeModel gm(m, 26);
    const auto traj = sample_q_td_pmd(gm, MirrorMap::NegEntropy, ConstantStep{1.0}, cfg,
                                      MatrixD::Constant(3, 3, 0.5), PolicyD::uniform(3, 3));
    for (int k = 1; k <= 5; ++k) CHECK(traj.records[k].q == m.rewards());
  }
  SUBCASE("iterates stay bounded") {
    const Mdp m = random_mdp(27, 3, 2, 0.8);
    SampleConfig cfg;
    cfg.T = 15;
    cfg.m_q = 3;
    GenerativeModel gm(m, 28);
    const auto traj = sample_q_td_pmd(gm, MirrorMap::NegEntropy, ConstantStep{1.0}, cfg,
                                      MatrixD::Constant(3, 2, 5.0), PolicyD::uniform(3, 2));
    for (const auto& rec : traj.records) CHECK(sup(rec.q) <= 5.0 + 1e-12);
  }
}
