#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "overthink/rng.hpp"

namespace overthink {

struct HorizonExceeded : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Action { Advance, Idle, Stop };

// Observable episode state offered to a policy before its t-th action.
struct EpisodeState {
  int t = 1;          // 1-based index of the action about to be chosen
  int successes = 0;  // n_A so far
  int advances = 0;   // Advance actions so far (successful or not)
  int idles = 0;
};

// Decision rule; stochastic policies draw from the supplied per-episode rng.
using Policy = std::function<Action(const EpisodeState&, Rng&)>;

struct SimConfig {
  int difficulty = 1;        // K: successful advances required
  double advance_p = 0.5;    // p: per-attempt success probability
  double length_penalty = 0; // lambda
  int horizon = 10000;       // hard cap on actions per episode
  long trials = 10000;
  uint64_t seed = 42;

  void validate() const {
    if (difficulty < 1) throw std::invalid_argument("sim: K must be >= 1");
    if (!(advance_p > 0.0 && advance_p < 1.0) && advance_p != 1.0) {
      throw std::invalid_argument("sim: p must be in (0,1]");
    }
    if (length_penalty < 0) throw std::invalid_argument("sim: lambda must be >= 0");
    if (horizon < 1) throw std::invalid_argument("sim: horizon must be >= 1");
    if (trials < 1) throw std::invalid_argument("sim: trials must be >= 1");
  }
};

// Monte-Carlo estimates. The stop time T counts emitted (non-Stop) actions,
// so a policy that advances K times and stops has T = K and rho = 0.
struct SimResult {
  double success_rate = 0.0;          // Pr[n_A >= K]
  double success_se = 0.0;            // binomial standard error of success_rate
  double mean_stop_time = 0.0;        // E[T]
  double j_lambda = 0.0;              // success_rate - lambda * mean_T
  double mean_rho_on_success = 0.0;   // mean of 1 - K/T over successful episodes
  long horizon_truncations = 0;       // episodes cut at the horizon without Stop
  long trials = 0;
};

namespace detail {

struct Episode {
  int stop_time = 0;
  int successes = 0;
  int advances = 0;
  bool truncated = false;
};

inline Episode run_episode(const Policy& policy, const SimConfig& cfg, Rng& rng) {
  Episode ep;
  EpisodeState state;
  while (state.t <= cfg.horizon) {
    const Action a = policy(state, rng);
    if (a == Action::Stop) {
      ep.stop_time = state.t - 1;
      ep.successes = state.successes;
      ep.advances = state.advances;
      return ep;
    }
    if (a == Action::Advance) {
      ++state.advances;
      if (rng.bernoulli(cfg.advance_p)) ++state.successes;
    } else {
      ++state.idles;
    }
    ++state.t;
  }
  ep.stop_time = cfg.horizon;
  ep.successes = state.successes;
  ep.advances = state.advances;
  ep.truncated = true;
  return ep;
}

}  // namespace detail

// Runs independent episodes with per-trial derived seeds; reduction is over
// integer counters so the result is independent of any execution order.
inline SimResult simulate(const Policy& policy, const SimConfig& cfg) {
  cfg.validate();
  long successes = 0, truncations = 0;
  long long stop_time_sum = 0;
  double rho_sum = 0.0;
  long rho_n = 0;
  for (long trial = 0; trial < cfg.trials; ++trial) {
    Rng rng(Rng::derive(cfg.seed, static_cast<uint64_t>(trial)));
    const detail::Episode ep = detail::run_episode(policy, cfg, rng);
    stop_time_sum += ep.stop_time;
    truncations += ep.truncated ? 1 : 0;
    if (ep.successes >= cfg.difficulty) {
      ++successes;
      rho_sum += 1.0 - static_cast<double>(cfg.difficulty) / ep.stop_time;
      ++rho_n;
    }
  }
  SimResult r;
  r.trials = cfg.trials;
  r.success_rate = static_cast<double>(successes) / cfg.trials;
  r.success_se = std::sqrt(r.success_rate * (1.0 - r.success_rate) / cfg.trials);
  r.mean_stop_time = static_cast<double>(stop_time_sum) / cfg.trials;
  r.j_lambda = r.success_rate - cfg.length_penalty * r.mean_stop_time;
  r.mean_rho_on_success = rho_n > 0 ? rho_sum / rho_n : 0.0;
  r.horizon_truncations = truncations;
  return r;
}

// ---------------------------------------------------------------------------
// Built-in policy family
// ---------------------------------------------------------------------------

// Advance m times, then stop regardless of progress.
inline Policy advance_m_then_stop(int m) {
  return [m](const EpisodeState& s, Rng&) { return s.advances < m ? Action::Advance : Action::Stop; };
}

// Advance until K successes, then stop (finite stopping time a.s.).
inline Policy solve_then_stop(int k) {
  return [k](const EpisodeState& s, Rng&) { return s.successes < k ? Action::Advance : Action::Stop; };
}

// Emit idle_steps of non-advancing content first, then solve and stop.
inline Policy idle_then_solve(int idle_steps, int k) {
  return [idle_steps, k](const EpisodeState& s, Rng&) {
    if (s.idles < idle_steps && s.successes < k) return Action::Idle;
    return s.successes < k ? Action::Advance : Action::Stop;
  };
}

// Never stops; episodes run to the horizon.
inline Policy never_stop() {
  return [](const EpisodeState&, Rng&) { return Action::Advance; };
}

// ---------------------------------------------------------------------------
// Closed forms and the Theorem-1 inequality
// ---------------------------------------------------------------------------

// Pr[Bin(m, p) >= k] = 1 - BinomialCDF(k-1; m, p). Sums whichever tail is
// shorter with a long-double pmf recurrence.
inline double analytic_success(int m, int k, double p) {
  if (m < 0) throw std::invalid_argument("analytic_success: M must be >= 0");
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("analytic_success: p must be in [0,1]");
  if (k <= 0) return 1.0;
  if (k > m) return 0.0;
  if (p == 1.0) return 1.0;
  if (p == 0.0) return 0.0;

  const long double q = 1.0L - static_cast<long double>(p);
  const long double ratio = static_cast<long double>(p) / q;
  if (k - 1 <= m - k) {
    // CDF side: j = 0 .. k-1
    long double pmf = std::pow(q, static_cast<long double>(m));
    long double cdf = pmf;
    for (int j = 0; j < k - 1; ++j) {
      pmf *= ratio * static_cast<long double>(m - j) / static_cast<long double>(j + 1);
      cdf += pmf;
    }
    return static_cast<double>(1.0L - cdf);
  }
  // tail side: j = m .. k
  long double pmf = std::pow(static_cast<long double>(p), static_cast<long double>(m));
  long double tail = pmf;
  for (int j = m; j > k; --j) {
    pmf *= static_cast<long double>(j) / (ratio * static_cast<long double>(m - j + 1));
    tail += pmf;
  }
  return static_cast<double>(tail);
}

struct FailureBound {
  double empirical_failure = 0.0;  // Pr[n_A < K] from simulation
  double bound = 0.0;              // E[(1-p)^M], the all-attempts-fail lower bound
  long trials = 0;
};

// Estimates both sides of Pr[n_A < K] >= E[(1-p)^M] from the same episodes.
// Only defined for policies that stop within the horizon; a truncated episode
// means the policy is not finite-stopping and raises HorizonExceeded.
inline FailureBound failure_lower_bound(const Policy& policy, const SimConfig& cfg) {
  cfg.validate();
  long failures = 0;
  long double bound_sum = 0.0L;
  const long double q = 1.0L - static_cast<long double>(cfg.advance_p);
  for (long trial = 0; trial < cfg.trials; ++trial) {
    Rng rng(Rng::derive(cfg.seed, static_cast<uint64_t>(trial)));
    const detail::Episode ep = detail::run_episode(policy, cfg, rng);
    if (ep.truncated) {
      throw HorizonExceeded("failure_lower_bound: episode hit the horizon; policy is not finite-stopping");
    }
    if (ep.successes < cfg.difficulty) ++failures;
    bound_sum += std::pow(q, static_cast<long double>(ep.advances));
  }
  FailureBound out;
  out.trials = cfg.trials;
  out.empirical_failure = static_cast<double>(failures) / cfg.trials;
  out.bound = static_cast<double>(bound_sum / cfg.trials);
  return out;
}

// ---------------------------------------------------------------------------
// Theorem-1 desk-scale verification table
// ---------------------------------------------------------------------------

struct TheoremRow {
  std::string policy;
  double j0 = 0.0;                 // success rate (J at lambda = 0)
  double analytic = -1.0;          // closed form where available, else -1
  double std_err = 0.0;
  double failure_gap = 0.0;        // (1-p)^M lower bound on failure, fixed-M rows
  double mean_stop_time = 0.0;
  double mean_rho_on_success = 0.0;
  double j_lambda = 0.0;
  long horizon_truncations = 0;
};

struct TheoremReport {
  int difficulty = 0;
  double advance_p = 0.0;
  double lambda = 0.0;
  long trials = 0;
  uint64_t seed = 0;
  std::vector<TheoremRow> finite_rows;      // advance-M-then-stop, increasing M
  std::vector<TheoremRow> never_stop_rows;  // horizon-truncated, increasing H
  std::vector<TheoremRow> idle_rows;        // idle padding under lambda > 0
  bool j0_nondecreasing_in_m = false;
  bool finite_policies_bounded_away = false;  // J0 <= 1 - (1-p)^M + 3 SE for each M
  bool never_stop_dominates = false;          // last never-stop J0 > every finite J0
};

// The desk-scale counterpart of the theorem: every finite-M policy leaves a
// success gap of at least (1-p)^M, the gap shrinks as M grows, and the
// never-stop policy approaches J0 = 1 as the horizon grows.
inline TheoremReport stopping_theorem_report(const SimConfig& base, const std::vector<int>& ms,
                                     const std::vector<int>& horizons, const std::vector<int>& idle_steps = {}) {
  TheoremReport rep;
  rep.difficulty = base.difficulty;
  rep.advance_p = base.advance_p;
  rep.lambda = base.length_penalty;
  rep.trials = base.trials;
  rep.seed = base.seed;

  const double q = 1.0 - base.advance_p;
  rep.j0_nondecreasing_in_m = true;
  rep.finite_policies_bounded_away = true;
  double prev_j0 = -1.0, prev_se = 0.0;
  for (int m : ms) {
    SimConfig cfg = base;
    cfg.seed = Rng::derive(base.seed, "advance-m-" + std::to_string(m));
    const SimResult r = simulate(advance_m_then_stop(m), cfg);
    TheoremRow row;
    row.policy = "advance-" + std::to_string(m) + "-then-stop";
    row.j0 = r.success_rate;
    row.analytic = analytic_success(m, base.difficulty, base.advance_p);
    row.std_err = r.success_se;
    row.failure_gap = std::pow(q, m);
    row.mean_stop_time = r.mean_stop_time;
    row.mean_rho_on_success = r.mean_rho_on_success;
    row.j_lambda = r.j_lambda;
    row.horizon_truncations = r.horizon_truncations;
    // monotonicity across independent seeds, at 3-sigma tolerance
    if (row.j0 < prev_j0 - 3.0 * (row.std_err + prev_se)) rep.j0_nondecreasing_in_m = false;
    if (row.j0 > 1.0 - row.failure_gap + 3.0 * std::max(row.std_err, 1e-12)) {
      rep.finite_policies_bounded_away = false;
    }
    prev_j0 = row.j0;
    prev_se = row.std_err;
    rep.finite_rows.push_back(row);
  }

  for (int h : horizons) {
    SimConfig cfg = base;
    cfg.horizon = h;
    cfg.seed = Rng::derive(base.seed, "never-stop-h" + std::to_string(h));
    const SimResult r = simulate(never_stop(), cfg);
    TheoremRow row;
    row.policy = "never-stop (H=" + std::to_string(h) + ")";
    row.j0 = r.success_rate;
    row.std_err = r.success_se;
    row.mean_stop_time = r.mean_stop_time;
    row.mean_rho_on_success = r.mean_rho_on_success;
    row.j_lambda = r.j_lambda;
    row.horizon_truncations = r.horizon_truncations;
    rep.never_stop_rows.push_back(row);
  }
  if (!rep.never_stop_rows.empty()) {
    const double ns = rep.never_stop_rows.back().j0;
    rep.never_stop_dominates = true;
    for (const auto& row : rep.finite_rows) {
      if (row.j0 >= ns) rep.never_stop_dominates = false;
    }
  }

  for (int idle : idle_steps) {
    SimConfig cfg = base;
    cfg.seed = Rng::derive(base.seed, "idle-" + std::to_string(idle));
    const SimResult r = simulate(idle_then_solve(idle, base.difficulty), cfg);
    TheoremRow row;
    row.policy = "idle-" + std::to_string(idle) + "-then-solve";
    row.j0 = r.success_rate;
    row.std_err = r.success_se;
    row.mean_stop_time = r.mean_stop_time;
    row.mean_rho_on_success = r.mean_rho_on_success;
    row.j_lambda = r.j_lambda;
    row.horizon_truncations = r.horizon_truncations;
    rep.idle_rows.push_back(row);
  }
  return rep;
}

}  // namespace overthink
