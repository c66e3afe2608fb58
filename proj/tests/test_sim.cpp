#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "overthink/sim.hpp"

using namespace overthink;

namespace {

SimConfig cfg(int k, double p, long trials, uint64_t seed = 42, int horizon = 10000) {
  SimConfig c;
  c.difficulty = k;
  c.advance_p = p;
  c.horizon = horizon;
  c.trials = trials;
  c.seed = seed;
  return c;
}

}  // namespace

TEST_CASE("deterministic dynamics at p = 1") {
  const int k = 5;
  const auto r = simulate(advance_m_then_stop(k), cfg(k, 1.0, 500));
  CHECK(r.success_rate == 1.0);
  CHECK(r.mean_stop_time == static_cast<double>(k));  // T counts emitted steps exactly
  CHECK(r.mean_rho_on_success == 0.0);                // no waste: rho = 1 - K/K
  CHECK(r.horizon_truncations == 0);
}

TEST_CASE("advance-M success matches the closed form within 3 sigma") {
  for (int m : {1, 2, 4, 8}) {
    const auto r = simulate(advance_m_then_stop(m), cfg(1, 0.5, 100000, 7));
    const double expected = 1.0 - std::pow(0.5, m);  // oracle: 1 - (1-p)^M
    CHECK(std::abs(r.success_rate - expected) <= 3.0 * std::max(r.success_se, 1e-9));
    CHECK(r.mean_stop_time == static_cast<double>(m));
  }
  // a second grid point: p = 0.3, K = 2, M = 6
  const auto r = simulate(advance_m_then_stop(6), cfg(2, 0.3, 100000, 8));
  CHECK(std::abs(r.success_rate - analytic_success(6, 2, 0.3)) <= 3.0 * r.success_se);
}

TEST_CASE("never-stop policy approaches certain success") {
  const auto r = simulate(never_stop(), cfg(2, 0.5, 2000, 5, 10000));
  CHECK(r.success_rate >= 0.999);
  CHECK(r.horizon_truncations == 2000);  // it never stops by itself
  CHECK(r.mean_stop_time == 10000.0);
}

TEST_CASE("simulation is deterministic under a fixed seed") {
  const auto a = simulate(advance_m_then_stop(3), cfg(1, 0.4, 5000, 11));
  const auto b = simulate(advance_m_then_stop(3), cfg(1, 0.4, 5000, 11));
  const auto c = simulate(advance_m_then_stop(3), cfg(1, 0.4, 5000, 12));
  CHECK(a.success_rate == b.success_rate);
  CHECK(a.mean_stop_time == b.mean_stop_time);
  CHECK(a.mean_rho_on_success == b.mean_rho_on_success);
  CHECK(a.success_rate != c.success_rate);
}

TEST_CASE("rho identity holds in every successful episode") {
  // solve-then-stop: T = attempts to K-th success, so rho = 1 - K/T exactly;
  // verified here against an independent episode replay
  const SimConfig c = cfg(2, 0.6, 400, 21);
  const auto r = simulate(solve_then_stop(2), c);
  double rho_sum = 0.0;
  long n_success = 0;
  for (long trial = 0; trial < c.trials; ++trial) {
    Rng rng(Rng::derive(c.seed, static_cast<uint64_t>(trial)));
    // replay: count Bernoulli draws until 2 successes
    int t = 0, succ = 0;
    while (succ < 2 && t < c.horizon) {
      ++t;
      if (rng.bernoulli(c.advance_p)) ++succ;
    }
    if (succ >= 2) {
      rho_sum += 1.0 - 2.0 / t;
      ++n_success;
    }
  }
  CHECK(r.success_rate == Catch::Approx(static_cast<double>(n_success) / c.trials));
  CHECK(r.mean_rho_on_success == Catch::Approx(rho_sum / n_success).epsilon(1e-12));
}

TEST_CASE("analytic success probability") {
  SECTION("closed forms") {
    CHECK(analytic_success(2, 1, 0.5) == Catch::Approx(0.75).epsilon(1e-15));
    // oracle: direct power computation
    CHECK(analytic_success(10, 1, 0.3) == Catch::Approx(1.0 - std::pow(0.7, 10)).epsilon(1e-13));
    CHECK(analytic_success(10, 1, 0.3) == Catch::Approx(0.9717524751).epsilon(1e-10));
  }

  SECTION("boundary cases") {
    CHECK(analytic_success(5, 0, 0.5) == 1.0);   // K <= 0 always succeeds
    CHECK(analytic_success(3, 4, 0.5) == 0.0);   // K > M cannot succeed
    CHECK(analytic_success(4, 4, 1.0) == 1.0);   // p -> 1 with M >= K
    CHECK(analytic_success(3, 4, 1.0) == 0.0);
    CHECK(analytic_success(0, 1, 0.5) == 0.0);
    CHECK(analytic_success(4, 2, 0.0) == 0.0);
  }

  SECTION("matches a brute-force pmf sum") {
    // oracle: direct sum of C(m,j) p^j (1-p)^(m-j) using exact binomials
    const auto brute = [](int m, int k, double p) {
      double total = 0.0;
      for (int j = k; j <= m; ++j) {
        double c = 1.0;
        for (int i = 0; i < j; ++i) c = c * (m - i) / (i + 1);
        total += c * std::pow(p, j) * std::pow(1 - p, m - j);
      }
      return total;
    };
    for (int m : {3, 10, 25}) {
      for (int k = 1; k <= m; k += 3) {
        for (double p : {0.2, 0.5, 0.9}) {
          CHECK(analytic_success(m, k, p) == Catch::Approx(brute(m, k, p)).epsilon(1e-10));
        }
      }
    }
  }

  SECTION("simulation agrees with the closed form across a grid") {
    for (int m : {2, 5, 9}) {
      for (int k : {1, 2}) {
        for (double p : {0.3, 0.7}) {
          const auto r = simulate(advance_m_then_stop(m), cfg(k, p, 40000, 97));
          const double expected = analytic_success(m, k, p);
          CHECK(std::abs(r.success_rate - expected) <= 3.0 * std::max(r.success_se, 1e-9) + 1e-9);
        }
      }
    }
  }
}

TEST_CASE("failure lower bound") {
  SECTION("fixed-M policies: the bound is exact in expectation") {
    for (int m : {1, 3, 6}) {
      const auto fb = failure_lower_bound(advance_m_then_stop(m), cfg(1, 0.5, 50000, 3));
      const double exact = std::pow(0.5, m);
      CHECK(fb.bound == Catch::Approx(exact).epsilon(1e-12));  // M is deterministic
      const double se = std::sqrt(exact * (1 - exact) / 50000);
      CHECK(std::abs(fb.empirical_failure - exact) <= 3 * se + 1e-9);
      CHECK(fb.empirical_failure >= fb.bound - 3 * se);
    }
  }

  SECTION("success-observing policies violate the success-blind bound") {
    // solve-then-stop conditions M on the successes, so E[(1-p)^M] is not a
    // failure lower bound for it: for K = 1, p = 0.5 the closed form is
    // E[q^M] = q/(1+q) = 1/3 while the policy never fails.
    const auto fb = failure_lower_bound(solve_then_stop(1), cfg(1, 0.5, 50000, 5));
    CHECK(fb.empirical_failure == 0.0);
    CHECK(fb.bound == Catch::Approx(1.0 / 3).margin(0.01));
  }

  SECTION("p -> 1 limit sends both sides to zero") {
    const auto fb = failure_lower_bound(advance_m_then_stop(4), cfg(1, 0.999, 20000, 9));
    CHECK(fb.empirical_failure <= 1e-3);
    CHECK(fb.bound == Catch::Approx(std::pow(0.001, 4)).epsilon(1e-9));
  }

  SECTION("policies that never stop raise HorizonExceeded") {
    CHECK_THROWS_AS(failure_lower_bound(never_stop(), cfg(1, 0.5, 10, 1, 100)), HorizonExceeded);
  }
}

TEST_CASE("idle padding under a length penalty") {
  SimConfig base = cfg(2, 0.5, 20000, 31);
  base.length_penalty = 0.001;
  double prev_j = 1.0;
  double prev_t = -1.0;
  for (int idle : {0, 5, 10, 20}) {
    const auto r = simulate(idle_then_solve(idle, 2), base);
    CHECK(r.success_rate == 1.0);  // success is unchanged by idling
    CHECK(r.mean_stop_time > prev_t);
    CHECK(r.j_lambda < prev_j);  // J_lambda strictly decreases as T grows
    prev_j = r.j_lambda;
    prev_t = r.mean_stop_time;
  }
}

TEST_CASE("mean rho of an idle-then-solve policy tracks 1 - K/(K/p + I)") {
  const int k = 2, idle = 10;
  const double p = 0.5;
  const auto r = simulate(idle_then_solve(idle, k), cfg(k, p, 200000, 13));
  const double trend = 1.0 - k / (k / p + idle);
  // Wald-type oracle: T = I + NegBin(K, p) trials, E[T] = I + K/p; the rho
  // mean is only trendwise equal (Jensen gap), so allow a wide band.
  CHECK(std::abs(r.mean_rho_on_success - trend) < 0.02);
  CHECK(r.mean_stop_time == Catch::Approx(idle + k / p).epsilon(0.01));
}

TEST_CASE("theorem-1 desk-scale report") {
  SimConfig base = cfg(1, 0.5, 30000, 123);
  const auto rep = stopping_theorem_report(base, {1, 2, 4, 8}, {10, 100, 1000}, {5, 10});

  REQUIRE(rep.finite_rows.size() == 4);
  REQUIRE(rep.never_stop_rows.size() == 3);

  SECTION("finite policies match 1 - (1-p)^M and stay bounded away from 1") {
    for (size_t i = 0; i < rep.finite_rows.size(); ++i) {
      const auto& row = rep.finite_rows[i];
      CHECK(std::abs(row.j0 - row.analytic) <= 3.0 * std::max(row.std_err, 1e-9));
      CHECK(row.j0 <= 1.0 - row.failure_gap + 3.0 * row.std_err);
    }
    CHECK(rep.finite_policies_bounded_away);
  }

  SECTION("J0 is nondecreasing in M and the never-stop policy dominates") {
    CHECK(rep.j0_nondecreasing_in_m);
    for (size_t i = 1; i < rep.finite_rows.size(); ++i) {
      CHECK(rep.finite_rows[i].j0 > rep.finite_rows[i - 1].j0);
    }
    CHECK(rep.never_stop_dominates);
    CHECK(rep.never_stop_rows.back().j0 > rep.finite_rows.back().j0);
  }

  SECTION("never-stop J0 grows toward 1 with the horizon") {
    for (size_t i = 1; i < rep.never_stop_rows.size(); ++i) {
      CHECK(rep.never_stop_rows[i].j0 >= rep.never_stop_rows[i - 1].j0);
    }
    CHECK(rep.never_stop_rows.back().j0 >= 0.999);
  }
}
