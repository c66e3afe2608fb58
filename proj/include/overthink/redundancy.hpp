#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "overthink/prober.hpp"
#include "overthink/rng.hpp"
#include "overthink/segmenter.hpp"

namespace overthink {

// Per-trace critical-point measurement. k_star is absent when no probed
// prefix recovered the answer; such traces are excluded from rho aggregates
// and counted separately.
struct RedundancyRecord {
  std::string problem_id;
  int sample_index = 0;
  Judge judge = Judge::Self;
  std::optional<int> k_star;
  std::optional<double> rho_step;
  std::optional<double> rho_word;
  int n_steps = 0;
  std::vector<int> probed_ks;  // ascending, contains 1 and N
  bool sub_sampled = false;
};

struct LooRecord {
  std::string problem_id;
  int sample_index = 0;
  Judge judge = Judge::Self;
  std::vector<bool> critical_flags;  // flags[i]: removing step i+1 flips the verdict
};

struct PrefixAblationRecord {
  std::string problem_id;
  int sample_index = 0;
  Judge judge = Judge::Self;
  std::vector<double> fractions;
  // forced-answer correctness (0/1) per fraction, per strategy
  std::vector<double> first, last, middle, random;
};

inline const std::vector<std::string>& prefix_strategies() {
  static const std::vector<std::string> s = {"first", "last", "middle", "random"};
  return s;
}

inline std::vector<double> default_prefix_fractions() {
  std::vector<double> f;
  for (int i = 0; i < 10; ++i) f.push_back(0.05 + 0.10 * i);
  return f;
}

// Truncation grid: every k when N fits under the cap, otherwise the
// approximately-even grid round(j*N/cap) with 1 and N forced in. The grid
// bounds the sub-sampling bias on rho by 1/cap.
inline std::vector<int> truncation_points(int n, int cap = 30) {
  if (n < 1) throw std::invalid_argument("truncation_points: N must be >= 1");
  if (cap < 2) throw std::invalid_argument("truncation_points: cap must be >= 2");
  std::vector<int> ks;
  if (n <= cap) {
    ks.resize(static_cast<size_t>(n));
    std::iota(ks.begin(), ks.end(), 1);
    return ks;
  }
  std::set<int> grid = {1, n};
  for (int j = 1; j <= cap; ++j) {
    grid.insert(static_cast<int>(std::lround(static_cast<double>(j) * n / cap)));
  }
  return {grid.begin(), grid.end()};
}

inline double rho_step(int k_star, int n) {
  if (k_star < 1 || n < 1 || k_star > n) throw std::domain_error("rho_step: need 1 <= k_star <= N");
  return 1.0 - static_cast<double>(k_star) / n;
}

inline double rho_word(int prefix_words, int total_words) {
  if (prefix_words < 1 || prefix_words > total_words) {
    throw std::domain_error("rho_word: need 1 <= prefix_words <= total_words");
  }
  return 1.0 - static_cast<double>(prefix_words) / total_words;
}

namespace detail {

inline void require_correct(const SegmentedTrace& st, const char* op) {
  if (!st.trace.correct) {
    throw std::invalid_argument(std::string(op) + ": redundancy is defined on correct traces only (" +
                                st.trace.problem_id + ")");
  }
}

inline std::vector<int> iota_steps(int from, int count) {
  std::vector<int> v(static_cast<size_t>(count));
  std::iota(v.begin(), v.end(), from);
  return v;
}

}  // namespace detail

// Progressive first-k truncation. All grid points are probed (correctness in
// k is not assumed monotone); k* is the smallest probed k whose forced answer
// is correct, and unprobed k below it count as redundant-by-extrapolation.
inline RedundancyRecord critical_point(const Problem& problem, const SegmentedTrace& st, Prober& prober,
                                       Judge judge, int cap = 30, const std::string& protocol_tag = "truncate") {
  detail::require_correct(st, "critical_point");
  const int n = st.n_steps();

  RedundancyRecord rec;
  rec.problem_id = st.trace.problem_id;
  rec.sample_index = st.trace.sample_index;
  rec.judge = judge;
  rec.n_steps = n;
  rec.probed_ks = truncation_points(n, cap);
  rec.sub_sampled = n > cap;

  std::vector<ProbeTask> tasks;
  tasks.reserve(rec.probed_ks.size());
  for (int k : rec.probed_ks) {
    tasks.push_back({&problem, &st, detail::iota_steps(1, k), protocol_tag, judge, k, false});
  }
  const std::vector<ProbeRecord> probes = prober.run(tasks);

  std::optional<int> k_star;
  for (const auto& p : probes) {
    if (p.correct && (!k_star || p.key.index < *k_star)) k_star = p.key.index;
  }
  if (k_star) {
    rec.k_star = k_star;
    rec.rho_step = rho_step(*k_star, n);
    int prefix_words = 0;
    for (int i = 0; i < *k_star; ++i) prefix_words += st.steps[static_cast<size_t>(i)].word_count;
    rec.rho_word = rho_word(prefix_words, st.trace.total_words);
  }
  return rec;
}

// Leave-one-out ablation: probe the trace with each single step deleted (the
// prompt carries the removal note); a step is critical iff the verdict flips.
inline LooRecord loo_ablation(const Problem& problem, const SegmentedTrace& st, Prober& prober, Judge judge) {
  detail::require_correct(st, "loo_ablation");
  const int n = st.n_steps();
  if (n < 2) throw std::invalid_argument("loo_ablation: need at least 2 steps");

  std::vector<ProbeTask> tasks;
  tasks.reserve(static_cast<size_t>(n));
  for (int drop = 1; drop <= n; ++drop) {
    std::vector<int> keep;
    keep.reserve(static_cast<size_t>(n - 1));
    for (int i = 1; i <= n; ++i) {
      if (i != drop) keep.push_back(i);
    }
    tasks.push_back({&problem, &st, std::move(keep), "loo", judge, drop, true});
  }
  const std::vector<ProbeRecord> probes = prober.run(tasks);

  LooRecord rec;
  rec.problem_id = st.trace.problem_id;
  rec.sample_index = st.trace.sample_index;
  rec.judge = judge;
  rec.critical_flags.assign(static_cast<size_t>(n), false);
  for (const auto& p : probes) {
    rec.critical_flags[static_cast<size_t>(p.key.index - 1)] = !p.correct;
  }
  return rec;
}

// Step selections for the four prefix-position strategies at prefix size k.
inline std::vector<int> prefix_selection(const std::string& strategy, int n, int k, Rng& rng) {
  if (strategy == "first") return detail::iota_steps(1, k);
  if (strategy == "last") return detail::iota_steps(n - k + 1, k);
  if (strategy == "middle") return detail::iota_steps((n - k) / 2 + 1, k);
  if (strategy == "random") {
    std::vector<int> picks = rng.sample_without_replacement(n, k);
    for (int& p : picks) ++p;  // to 1-based
    return picks;
  }
  throw std::invalid_argument("unknown prefix strategy: " + strategy);
}

// Prefix-position ablation: same relative prefix length under first-/last-/
// middle-/random-k selection. The random picks derive from (seed, problem,
// sample, fraction) so reruns are bit-identical.
inline PrefixAblationRecord prefix_position_ablation(const Problem& problem, const SegmentedTrace& st,
                                                     Prober& prober, const std::vector<double>& fractions,
                                                     uint64_t seed, Judge judge = Judge::Self) {
  detail::require_correct(st, "prefix_position_ablation");
  for (double f : fractions) {
    if (!(f > 0.0 && f <= 1.0)) throw std::invalid_argument("prefix fractions must lie in (0,1]");
  }
  const int n = st.n_steps();

  PrefixAblationRecord rec;
  rec.problem_id = st.trace.problem_id;
  rec.sample_index = st.trace.sample_index;
  rec.judge = judge;
  rec.fractions = fractions;

  std::vector<ProbeTask> tasks;
  for (size_t fi = 0; fi < fractions.size(); ++fi) {
    const int k = std::max(1, static_cast<int>(std::lround(fractions[fi] * n)));
    const int pct = static_cast<int>(std::lround(fractions[fi] * 100));
    uint64_t trace_seed = Rng::derive(seed, st.trace.problem_id + "#" + std::to_string(st.trace.sample_index));
    Rng rng(Rng::derive(trace_seed, fi));
    for (const auto& strategy : prefix_strategies()) {
      tasks.push_back({&problem, &st, prefix_selection(strategy, n, k, rng), "prefix-" + strategy, judge,
                       pct, false});
    }
  }
  const std::vector<ProbeRecord> probes = prober.run(tasks);

  std::map<std::pair<std::string, int>, double> outcome;
  for (const auto& p : probes) outcome[{p.key.protocol, p.key.index}] = p.correct ? 1.0 : 0.0;
  for (size_t fi = 0; fi < fractions.size(); ++fi) {
    const int pct = static_cast<int>(std::lround(fractions[fi] * 100));
    rec.first.push_back(outcome[{"prefix-first", pct}]);
    rec.last.push_back(outcome[{"prefix-last", pct}]);
    rec.middle.push_back(outcome[{"prefix-middle", pct}]);
    rec.random.push_back(outcome[{"prefix-random", pct}]);
  }
  return rec;
}

// ---------------------------------------------------------------------------
// Segmentation-robustness sweep: re-segment at each merge threshold and
// re-measure mean rho over the corpus. Probe failures on a trace drop that
// trace from the row instead of aborting the sweep.
// ---------------------------------------------------------------------------

struct RobustnessRow {
  int threshold = 0;
  double mean_rho = 0.0;
  int n_traces = 0;   // traces entering the mean (k* found)
  int n_failed = 0;   // traces dropped by probe errors or missing k*
};

template <typename ProberFactory>
std::vector<RobustnessRow> robustness_sweep(const std::vector<RawTrace>& traces, const ProblemIndex& problems,
                                            const std::vector<int>& thresholds, ProberFactory&& make_prober,
                                            Judge judge = Judge::Self, int cap = 30) {
  if (thresholds.empty()) throw std::invalid_argument("robustness_sweep: thresholds must be non-empty");
  std::vector<RobustnessRow> rows;
  if (traces.empty()) return rows;
  for (int t : thresholds) {
    SegmenterConfig cfg;
    cfg.merge_threshold = t;
    RobustnessRow row;
    row.threshold = t;
    const std::string tag = "truncate@t" + std::to_string(t);
    Prober& prober = make_prober(t);
    double sum = 0.0;
    for (const auto& raw : traces) {
      if (!raw.correct) continue;
      try {
        const SegmentedTrace st = segment(raw, cfg);
        const RedundancyRecord rec = critical_point(problems.at(raw.problem_id), st, prober, judge, cap, tag);
        if (rec.rho_step) {
          sum += *rec.rho_step;
          ++row.n_traces;
        } else {
          ++row.n_failed;
        }
      } catch (const BackendError&) {
        ++row.n_failed;
      } catch (const EmptyTrace&) {
        ++row.n_failed;
      }
    }
    row.mean_rho = row.n_traces > 0 ? sum / row.n_traces : 0.0;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace overthink
