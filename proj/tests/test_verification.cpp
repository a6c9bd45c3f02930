#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "nadamw/harness.hpp"
#include "nadamw/prescribe.hpp"
#include "nadamw/problems.hpp"
#include "nadamw/verification.hpp"

using nadamw::audit_lemma3;
using nadamw::audit_lemma3_on_trajectory;
using nadamw::audit_lemma4;
using nadamw::CheckpointCollector;
using nadamw::FrozenStep;
using nadamw::HyperParams;
using nadamw::Lemma2Monitor;
using nadamw::Lemma4Accumulator;
using nadamw::mc_gaussian_ratio;
using nadamw::RunConfig;
using nadamw::Variant;

namespace {

std::unique_ptr<nadamw::Problem> unit_quadratic(std::size_t d, double sigma) {
  nadamw::NoisyQuadraticParams p;
  p.curvatures.assign(d, 1.0);
  p.x_star.assign(d, 0.0);
  p.sigma.assign(d, sigma);
  return nadamw::make_noisy_quadratic(std::move(p));
}

HyperParams admissible_hp() {
  HyperParams hp;
  hp.eta = 1e-3;
  hp.theta = 0.81;
  hp.beta = 0.9;
  hp.tau = 1.0;
  hp.lambda = 0.01;
  hp.eps = 1e-6;
  return hp;
}

RunConfig prescribed_run(const nadamw::Problem& problem, const std::vector<double>& x1,
                         std::uint64_t K, std::uint64_t seed) {
  const auto c = problem.constants();
  nadamw::PrescriptionInputs in;
  in.K = K;
  in.d = problem.dim();
  in.L = c.L;
  in.delta = problem.full_loss(x1) - c.f_star;
  in.sigma_s_sq = c.sigma_s_sq;
  in.gamma = 1.0;
  const auto p = nadamw::prescribe(in, Variant::adamw);
  RunConfig cfg;
  cfg.problem = &problem;
  cfg.x1 = x1;
  cfg.hp = p.canonical_hp();
  cfg.K = K;
  cfg.seed = seed;
  cfg.log_every = K;
  return cfg;
}

}  // namespace

TEST_CASE("second-moment monitor applicability") {
  HyperParams hp = admissible_hp();
  CHECK(Lemma2Monitor::applicable(hp));
  CHECK_NOTHROW(Lemma2Monitor{hp});

  SUBCASE("beta above sqrt(theta)") {
    hp.beta = 0.95;  // sqrt(0.81) = 0.9
    CHECK_FALSE(Lemma2Monitor::applicable(hp));
    CHECK_THROWS_AS(Lemma2Monitor{hp}, std::invalid_argument);
  }
  SUBCASE("beta below theta") {
    hp.beta = 0.5;
    CHECK_FALSE(Lemma2Monitor::applicable(hp));
  }
  SUBCASE("tau below theta") {
    hp.tau = 0.5;
    CHECK_FALSE(Lemma2Monitor::applicable(hp));
  }
  SUBCASE("beta exactly at the endpoints") {
    hp.beta = 0.81;
    CHECK(Lemma2Monitor::applicable(hp));
    hp.beta = 0.9;
    CHECK(Lemma2Monitor::applicable(hp));
  }
}

TEST_CASE("second-moment monitor passes on an admissible run") {
  const auto prob = unit_quadratic(3, 0.5);
  Lemma2Monitor monitor(admissible_hp());
  RunConfig cfg;
  cfg.problem = prob.get();
  cfg.x1 = {2.0, -1.0, 0.5};
  cfg.hp = admissible_hp();
  cfg.K = 500;
  cfg.log_every = 100;
  cfg.seed = 5;
  cfg.observer = &monitor;

  const auto t = nadamw::run_experiment(cfg);
  REQUIRE_FALSE(t.summary.diverged);
  const auto r = monitor.report();
  CHECK(r.lemma == "lemma2");
  CHECK(r.trials == 1000);  // ratio row + envelope row per step
  CHECK(r.violations == 0);
  CHECK(r.pass);
  CHECK(r.worst_margin <= 0.0);
}

TEST_CASE("monitor without decay only audits the ratio") {
  const auto prob = unit_quadratic(2, 0.5);
  HyperParams hp = admissible_hp();
  hp.lambda = 0.0;
  Lemma2Monitor monitor(hp);
  RunConfig cfg;
  cfg.problem = prob.get();
  cfg.x1 = {1.0, 1.0};
  cfg.hp = hp;
  cfg.K = 200;
  cfg.seed = 6;
  cfg.observer = &monitor;
  (void)nadamw::run_experiment(cfg);
  const auto r = monitor.report();
  CHECK(r.trials == 200);
  CHECK(r.pass);
}

TEST_CASE("monitor refuses to start mid-run") {
  Lemma2Monitor monitor(admissible_hp());
  const auto state = nadamw::init_state(1, {0.5});
  nadamw::StepRecord rec;
  rec.m_tilde = {0.1};
  rec.update = {-0.01};
  const std::vector<double> x{1.0}, g{1.0};
  CHECK_THROWS_AS(monitor.on_step(2, x, state, rec, g, g), std::logic_error);
}

TEST_CASE("randomized ratio stress finds no counterexample") {
  nadamw::Lemma2StressSpec spec;
  spec.triples = 10;
  spec.steps_per_triple = 2000;
  spec.d = 3;
  spec.seed = 12;
  const auto r = nadamw::run_lemma2_stress(spec);
  CHECK(r.lemma == "lemma2");
  CHECK(r.trials > 0);
  CHECK(r.violations == 0);
  CHECK(r.pass);
  CHECK(r.worst_margin <= 0.0);

  SUBCASE("spec validation") {
    spec.triples = 0;
    CHECK_THROWS_AS(nadamw::run_lemma2_stress(spec), std::invalid_argument);
  }
}

TEST_CASE("checkpoint collector freezes the right step data") {
  const auto prob = unit_quadratic(2, 0.3);
  CheckpointCollector collector({2, 5});
  RunConfig cfg;
  cfg.problem = prob.get();
  cfg.x1 = {1.0, -1.0};
  cfg.hp = admissible_hp();
  cfg.K = 8;
  cfg.seed = 9;
  cfg.observer = &collector;
  (void)nadamw::run_experiment(cfg);

  const auto& cps = collector.checkpoints();
  REQUIRE(cps.size() == 2);
  CHECK(cps[0].k == 2);
  CHECK(cps[1].k == 5);

  // replay the deterministic trajectory to validate the frozen contents
  nadamw::Rng rng(9, 0, nadamw::StreamPurpose::training);
  auto state = nadamw::init_state(2, {1.0, -1.0});
  nadamw::StepRecord rec;
  std::vector<double> g(2);
  std::size_t ci = 0;
  for (std::uint64_t k = 1; k <= 8 && ci < cps.size(); ++k) {
    const auto x_before = state.x;
    prob->stoch_grad(state.x, rng, g);
    nadamw::nadamw_step_inplace(state, cfg.hp, g, &rec);
    if (k == cps[ci].k) {
      CHECK(cps[ci].x_prev == x_before);
      CHECK(cps[ci].m_prev == state.m);
      CHECK(cps[ci].v_prev == state.v);
      CHECK(cps[ci].m_tilde_prev == rec.m_tilde);
      CHECK(cps[ci].x_next == state.x);
      ci += 1;
    }
  }
  CHECK(ci == 2);

  SUBCASE("capture steps must increase strictly") {
    CHECK_THROWS_AS(CheckpointCollector({3, 3}), std::invalid_argument);
    CHECK_THROWS_AS(CheckpointCollector({5, 2}), std::invalid_argument);
  }
}

TEST_CASE("momentum-error recursion audit") {
  const auto prob = unit_quadratic(2, 1.0);
  const std::vector<double> x1{1.0, -1.0};
  RunConfig cfg = prescribed_run(*prob, x1, 200, 3);

  CheckpointCollector collector({50});
  RunConfig with_obs = cfg;
  with_obs.observer = &collector;
  (void)nadamw::run_experiment(with_obs);
  REQUIRE(collector.checkpoints().size() == 1);
  const FrozenStep& fs = collector.checkpoints()[0];

  nadamw::Rng rng(77, 0, nadamw::StreamPurpose::audit);
  const auto r = audit_lemma3(fs, *prob, cfg.hp, 2000, rng);
  CHECK(r.lemma == "lemma3");
  CHECK(r.trials == 2);
  CHECK(r.violations == 0);
  CHECK(r.pass);
  CHECK(r.worst_margin <= 0.0);

  SUBCASE("sample floor") {
    nadamw::Rng rng2(1, 0, nadamw::StreamPurpose::audit);
    CHECK_THROWS_AS(audit_lemma3(fs, *prob, cfg.hp, 99, rng2), std::invalid_argument);
  }
  SUBCASE("lookahead hypothesis") {
    auto hp = cfg.hp;
    hp.tau = hp.theta / 2.0;
    nadamw::Rng rng2(1, 0, nadamw::StreamPurpose::audit);
    CHECK_THROWS_AS(audit_lemma3(fs, *prob, hp, 2000, rng2), std::invalid_argument);
  }
  SUBCASE("dimension guard") {
    FrozenStep bad = fs;
    bad.m_prev.pop_back();
    nadamw::Rng rng2(1, 0, nadamw::StreamPurpose::audit);
    CHECK_THROWS_AS(audit_lemma3(bad, *prob, cfg.hp, 2000, rng2), std::invalid_argument);
  }
}

TEST_CASE("trajectory-level recursion audit") {
  const auto prob = unit_quadratic(2, 1.0);
  const std::vector<double> x1{1.0, 1.0};
  const RunConfig cfg = prescribed_run(*prob, x1, 100, 4);

  const auto r = audit_lemma3_on_trajectory(cfg, 5, 500, 21);
  CHECK(r.lemma == "lemma3");
  CHECK(r.trials == 5);
  CHECK(r.pass);

  SUBCASE("deterministic in the audit seed") {
    const auto r2 = audit_lemma3_on_trajectory(cfg, 5, 500, 21);
    CHECK(r.worst_margin == r2.worst_margin);
    CHECK(r.violations == r2.violations);
  }
  SUBCASE("every step can be audited") {
    const auto all = audit_lemma3_on_trajectory(cfg, 100, 200, 21);
    CHECK(all.trials == 100);
    CHECK(all.pass);
  }
  SUBCASE("argument guards") {
    CHECK_THROWS_AS(audit_lemma3_on_trajectory(cfg, 0, 500, 21), std::invalid_argument);
    CHECK_THROWS_AS(audit_lemma3_on_trajectory(cfg, 101, 500, 21), std::invalid_argument);
    RunConfig busy = cfg;
    CheckpointCollector other({1});
    busy.observer = &other;
    CHECK_THROWS_AS(audit_lemma3_on_trajectory(busy, 5, 500, 21), std::invalid_argument);
  }
}

TEST_CASE("volume accumulator matches a hand recurrence") {
  const auto prob = unit_quadratic(2, 0.0);  // deterministic, so two runs coincide
  RunConfig cfg;
  cfg.problem = prob.get();
  cfg.x1 = {1.5, -0.5};
  cfg.hp = admissible_hp();
  cfg.K = 6;
  cfg.seed = 1;

  struct Capture final : nadamw::StepObserver {
    std::vector<std::vector<double>> gfull, v_after;
    void on_step(std::uint64_t, std::span<const double>, const nadamw::OptimizerState& after,
                 const nadamw::StepRecord&, std::span<const double>,
                 std::span<const double> gf) override {
      gfull.emplace_back(gf.begin(), gf.end());
      v_after.push_back(after.v);
    }
  } capture;
  RunConfig first = cfg;
  first.observer = &capture;
  (void)nadamw::run_experiment(first);

  Lemma4Accumulator acc(*prob, cfg.hp);
  RunConfig second = cfg;
  second.observer = &acc;
  (void)nadamw::run_experiment(second);

  double lhs = 0.0, grad_term = 0.0;
  std::vector<double> v_prev(2, 0.0);
  for (std::size_t k = 0; k < capture.gfull.size(); ++k) {
    for (std::size_t i = 0; i < 2; ++i) {
      const double gsq = capture.gfull[k][i] * capture.gfull[k][i];
      const double vt = cfg.hp.beta * v_prev[i] + (1.0 - cfg.hp.beta) * gsq;
      lhs += std::sqrt(vt + cfg.hp.eps);
      grad_term += gsq / std::sqrt(vt + cfg.hp.eps);
    }
    v_prev = capture.v_after[k];
  }
  const double rhs = 6.0 * 2.0 * std::sqrt(cfg.hp.eps) + 2.0 * grad_term;
  CHECK(acc.lhs() == doctest::Approx(lhs).epsilon(1e-15));
  CHECK(acc.rhs() == doctest::Approx(rhs).epsilon(1e-15));

  SUBCASE("state-dependent noise is rejected") {
    const auto toy = nadamw::make_toy1d({});
    CHECK_THROWS_AS(Lemma4Accumulator(*toy, cfg.hp), std::invalid_argument);
  }
}

TEST_CASE("volume audit across replicates") {
  const auto prob = unit_quadratic(4, 1.0);
  const std::vector<double> x1(4, 1.0);
  const RunConfig cfg = prescribed_run(*prob, x1, 200, 0);
  std::vector<std::uint64_t> seeds;
  for (std::uint64_t s = 1; s <= 12; ++s) seeds.push_back(s);

  const auto r = audit_lemma4(cfg, seeds);
  CHECK(r.lemma == "lemma4");
  CHECK(r.trials == 12);
  CHECK(r.pass);
  CHECK(r.worst_margin <= 0.0);

  SUBCASE("replicate floor") {
    seeds.resize(9);
    CHECK_THROWS_AS(audit_lemma4(cfg, seeds), std::invalid_argument);
  }
}

TEST_CASE("gaussian norm-ratio comparison") {
  SUBCASE("one dimension collapses to ratio 1") {
    const auto r = mc_gaussian_ratio(1, 10000, 2);
    CHECK(r.ratio == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.pass);  // sqrt(2/pi) < 1
    CHECK(r.oracle_ratio == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("closed-form oracles, d = 4") {
    const auto r = mc_gaussian_ratio(4, 10000, 2);
    CHECK(r.oracle_mean_l2 == doctest::Approx(1.879971205973250).epsilon(1e-12));
    CHECK(r.oracle_ratio == doctest::Approx(1.697652726313550).epsilon(1e-12));
    CHECK(r.bound == doctest::Approx(1.595769121605731).epsilon(1e-12));
    CHECK(r.ratio == doctest::Approx(r.oracle_ratio).epsilon(0.02));
    CHECK(r.pass);
  }
  SUBCASE("closed-form oracles, d = 100") {
    const auto r = mc_gaussian_ratio(100, 10000, 2);
    CHECK(r.oracle_mean_l1 == doctest::Approx(79.78845608028654).epsilon(1e-12));
    CHECK(r.oracle_mean_l2 == doctest::Approx(9.975031639551051).epsilon(1e-12));
    CHECK(r.oracle_ratio == doctest::Approx(7.998817343488406).epsilon(1e-12));
    CHECK(r.bound == doctest::Approx(7.978845608028654).epsilon(1e-12));
    CHECK(r.mean_l1 == doctest::Approx(r.oracle_mean_l1).epsilon(0.01));
    CHECK(r.pass);
  }
  SUBCASE("estimates carry standard errors") {
    const auto r = mc_gaussian_ratio(10, 20000, 3);
    CHECK(r.mean_l1_stderr > 0.0);
    CHECK(r.mean_l2_stderr > 0.0);
    CHECK(std::abs(r.mean_l1 - r.oracle_mean_l1) < 5.0 * r.mean_l1_stderr);
    CHECK(std::abs(r.mean_l2 - r.oracle_mean_l2) < 5.0 * r.mean_l2_stderr);
  }
  SUBCASE("argument guards") {
    CHECK_THROWS_AS(mc_gaussian_ratio(0, 10000, 0), std::invalid_argument);
    CHECK_THROWS_AS(mc_gaussian_ratio(4, 9999, 0), std::invalid_argument);
  }
}
