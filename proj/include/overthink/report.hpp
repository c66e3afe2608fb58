#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "overthink/budget.hpp"
#include "overthink/redundancy.hpp"
#include "overthink/sim.hpp"
#include "overthink/stats.hpp"

namespace overthink {

// Fixed float formatting keeps artifacts byte-stable: percentages at one
// decimal, ratios at four.
inline std::string fm(double v, int decimals) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
  return buf;
}

inline std::string fmt_pct(double ratio) { return fm(ratio * 100.0, 1); }
inline std::string fmt_ratio(double v) { return fm(v, 4); }

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, uint64_t seed) : out_(path, std::ios::trunc) {
    if (!out_) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out_ << "# seed=" << seed << "\n";
  }

  void comment(const std::string& line) { out_ << "# " << line << "\n"; }

  void row(const std::vector<std::string>& cells) {
    for (size_t i = 0; i < cells.size(); ++i) {
      if (i) out_ << ',';
      out_ << cells[i];
    }
    out_ << '\n';
  }

 private:
  std::ofstream out_;
};

// ---------------------------------------------------------------------------
// CSV emitters, one per table shape
// ---------------------------------------------------------------------------

inline void write_condition_csv(const std::filesystem::path& path,
                                const std::vector<std::pair<std::string, ConditionSummary>>& rows,
                                uint64_t seed) {
  CsvWriter w(path, seed);
  w.row({"model", "benchmark", "judge", "rho_pct", "ci_low_pct", "ci_high_pct", "rho_word_pct",
         "mean_n_steps", "mean_k_star", "median_k_star", "n_correct", "n_not_found", "ci_method"});
  for (const auto& [judge, s] : rows) {
    w.row({s.model, s.benchmark, judge, fmt_pct(s.rho_mean), fmt_pct(s.ci_low), fmt_pct(s.ci_high),
           fmt_pct(s.rho_word_mean), fm(s.mean_n_steps, 1), fm(s.mean_k_star, 1), fm(s.median_k_star, 1),
           std::to_string(s.n_correct), std::to_string(s.n_not_found), s.ci_method});
  }
}

inline void write_stratum_csv(const std::filesystem::path& path, const std::string& label_name,
                              const std::vector<StratumSummary>& strata, uint64_t seed,
                              std::optional<double> rho_length_spearman = std::nullopt) {
  CsvWriter w(path, seed);
  w.row({label_name, "rho_pct", "ci_low_pct", "ci_high_pct", "mean_k_star", "mean_length", "n", "ci_method"});
  for (const auto& s : strata) {
    w.row({s.label, fmt_pct(s.rho_mean), fmt_pct(s.ci_low), fmt_pct(s.ci_high), fm(s.mean_k_star, 1),
           fm(s.mean_length, 1), std::to_string(s.n), s.ci_method});
  }
  if (rho_length_spearman) w.comment("spearman_rho_vs_mean_length=" + fmt_ratio(*rho_length_spearman));
}

inline void write_decile_csv(const std::filesystem::path& path, const std::vector<DecileRow>& rows,
                             uint64_t seed) {
  CsvWriter w(path, seed);
  w.row({"decile", "mean_length", "accuracy_pct", "n"});
  for (size_t i = 0; i < rows.size(); ++i) {
    w.row({"D" + std::to_string(i + 1), fm(rows[i].mean_length, 1), fmt_pct(rows[i].accuracy),
           std::to_string(rows[i].n)});
  }
}

inline void write_variance_csv(const std::filesystem::path& path,
                               const std::vector<std::pair<std::string, VarianceSummary>>& rows,
                               uint64_t seed) {
  CsvWriter w(path, seed);
  w.row({"judge", "n_problems", "mean_sigma_rho", "mean_range"});
  for (const auto& [judge, v] : rows) {
    w.row({judge, std::to_string(v.n_problems), fmt_ratio(v.mean_sigma), fmt_ratio(v.mean_range)});
  }
}

inline void write_ecdf_csv(const std::filesystem::path& path, const Ecdf& ecdf, uint64_t seed) {
  CsvWriter w(path, seed);
  w.comment("p50=" + fmt_ratio(ecdf.p50()) + " p90=" + fmt_ratio(ecdf.p90()));
  w.row({"value", "cumulative_fraction"});
  const auto& sorted = ecdf.sorted_values();
  for (size_t i = 0; i < sorted.size(); ++i) {
    if (i + 1 < sorted.size() && sorted[i + 1] == sorted[i]) continue;  // one row per distinct value
    w.row({fmt_ratio(sorted[i]), fmt_ratio(static_cast<double>(i + 1) / static_cast<double>(sorted.size()))});
  }
}

inline void write_positional_csv(const std::filesystem::path& path,
                                 const std::vector<std::pair<std::string, std::vector<PositionalBin>>>& curves,
                                 uint64_t seed) {
  CsvWriter w(path, seed);
  w.row({"stratum", "bin_low", "bin_high", "redundancy_rate", "n_steps"});
  for (const auto& [stratum, bins] : curves) {
    for (const auto& b : bins) {
      w.row({stratum, fm(b.lo, 2), fm(b.hi, 2), fmt_ratio(b.rate), std::to_string(b.n_steps)});
    }
  }
}

struct LooSummary {
  std::string judge;
  long total_steps = 0;
  long critical_steps = 0;
  double critical_fraction() const {
    return total_steps > 0 ? static_cast<double>(critical_steps) / total_steps : 0.0;
  }
};

inline LooSummary summarize_loo(const std::vector<LooRecord>& records, const std::string& judge) {
  LooSummary s;
  s.judge = judge;
  for (const auto& r : records) {
    for (bool f : r.critical_flags) {
      ++s.total_steps;
      s.critical_steps += f ? 1 : 0;
    }
  }
  return s;
}

inline void write_loo_csv(const std::filesystem::path& path, const std::vector<LooSummary>& rows,
                          uint64_t seed) {
  CsvWriter w(path, seed);
  w.row({"judge", "total_steps", "critical_steps", "critical_fraction_pct"});
  for (const auto& s : rows) {
    w.row({s.judge, std::to_string(s.total_steps), std::to_string(s.critical_steps),
           fmt_pct(s.critical_fraction())});
  }
}

// Mean forced-answer accuracy per (fraction, strategy) over ablation records.
struct PrefixCurves {
  std::vector<double> fractions;
  std::vector<double> first, last, middle, random;
  int n = 0;
};

inline PrefixCurves summarize_prefix(const std::vector<PrefixAblationRecord>& records) {
  PrefixCurves c;
  if (records.empty()) return c;
  c.fractions = records[0].fractions;
  const size_t nf = c.fractions.size();
  c.first.assign(nf, 0.0);
  c.last.assign(nf, 0.0);
  c.middle.assign(nf, 0.0);
  c.random.assign(nf, 0.0);
  for (const auto& r : records) {
    for (size_t i = 0; i < nf; ++i) {
      c.first[i] += r.first[i];
      c.last[i] += r.last[i];
      c.middle[i] += r.middle[i];
      c.random[i] += r.random[i];
    }
  }
  c.n = static_cast<int>(records.size());
  for (size_t i = 0; i < nf; ++i) {
    c.first[i] /= c.n;
    c.last[i] /= c.n;
    c.middle[i] /= c.n;
    c.random[i] /= c.n;
  }
  return c;
}

inline void write_prefix_csv(const std::filesystem::path& path, const PrefixCurves& c, uint64_t seed) {
  CsvWriter w(path, seed);
  w.comment("n_traces=" + std::to_string(c.n));
  w.row({"fraction", "first_pct", "last_pct", "middle_pct", "random_pct"});
  for (size_t i = 0; i < c.fractions.size(); ++i) {
    w.row({fm(c.fractions[i], 2), fmt_pct(c.first[i]), fmt_pct(c.last[i]), fmt_pct(c.middle[i]),
           fmt_pct(c.random[i])});
  }
}

struct JudgeGapRow {
  std::string benchmark;
  double rho_self = 0.0;
  double rho_ext = 0.0;
  double gap() const { return rho_self - rho_ext; }
};

inline void write_judge_csv(const std::filesystem::path& path, const JudgeAgreement& a,
                            const std::vector<JudgeGapRow>& gaps, uint64_t seed) {
  CsvWriter w(path, seed);
  w.row({"n", "exact_pct", "within1_pct", "pi_earlier_pct", "mean_delta_k"});
  w.row({std::to_string(a.n), fm(a.exact_pct, 1), fm(a.within1_pct, 1), fm(a.pi_earlier_pct, 1),
         fm(a.mean_delta, 2)});
  w.row({});
  w.row({"benchmark", "rho_self_pct", "rho_ext_pct", "gap_pts"});
  for (const auto& g : gaps) {
    w.row({g.benchmark, fmt_pct(g.rho_self), fmt_pct(g.rho_ext), fm(g.gap() * 100.0, 1)});
  }
}

inline void write_budget_csv(const std::filesystem::path& path, const std::vector<BudgetSweepRow>& rows,
                             uint64_t seed) {
  CsvWriter w(path, seed);
  w.row({"alpha", "retained_accuracy_pct", "avg_tokens", "retained_n"});
  for (const auto& r : rows) {
    w.row({fm(r.alpha, 2), fmt_pct(r.retained_accuracy), fm(r.avg_tokens, 1), std::to_string(r.retained_n)});
  }
}

inline void write_shortest_csv(const std::filesystem::path& path, const std::vector<ShortestOfMResult>& rows,
                               uint64_t seed) {
  CsvWriter w(path, seed);
  w.row({"M", "n_groups", "random_acc", "shortest_acc", "random_len", "shortest_len", "reduction_pct"});
  for (const auto& r : rows) {
    w.row({std::to_string(r.m), std::to_string(r.n_groups), fm(r.random_acc, 3), fm(r.shortest_acc, 3),
           fm(r.random_len, 1), fm(r.shortest_len, 1), fmt_pct(r.reduction)});
  }
}

struct EarlyStopSummary {
  int n = 0;
  int n_stopped = 0;
  double mean_words_before = 0.0;
  double mean_words_after = 0.0;
  double acc_before = 0.0;
  double acc_after = 0.0;
  double word_reduction() const {
    return mean_words_before > 0 ? 1.0 - mean_words_after / mean_words_before : 0.0;
  }
};

inline void write_earlystop_csv(const std::filesystem::path& path, const EarlyStopSummary& s, uint64_t seed) {
  CsvWriter w(path, seed);
  w.row({"n", "n_stopped", "mean_words_before", "mean_words_after", "word_reduction_pct", "acc_before_pct",
         "acc_after_pct", "acc_delta_pts"});
  w.row({std::to_string(s.n), std::to_string(s.n_stopped), fm(s.mean_words_before, 1),
         fm(s.mean_words_after, 1), fmt_pct(s.word_reduction()), fmt_pct(s.acc_before), fmt_pct(s.acc_after),
         fm((s.acc_after - s.acc_before) * 100.0, 1)});
}

inline void write_robustness_csv(const std::filesystem::path& path, const std::vector<RobustnessRow>& rows,
                                 uint64_t seed) {
  CsvWriter w(path, seed);
  w.row({"merge_threshold", "mean_rho_pct", "n_traces", "n_failed"});
  for (const auto& r : rows) {
    w.row({std::to_string(r.threshold), fmt_pct(r.mean_rho), std::to_string(r.n_traces),
           std::to_string(r.n_failed)});
  }
}

inline void write_sim_csv(const std::filesystem::path& path, const SimConfig& cfg,
                          const std::vector<std::pair<std::string, SimResult>>& rows, uint64_t seed) {
  CsvWriter w(path, seed);
  w.row({"policy", "K", "p", "lambda", "horizon", "trials", "success_rate", "success_se", "mean_T",
         "j_lambda", "mean_rho_on_success", "horizon_truncations"});
  for (const auto& [policy, r] : rows) {
    w.row({policy, std::to_string(cfg.difficulty), fm(cfg.advance_p, 4), fm(cfg.length_penalty, 6),
           std::to_string(cfg.horizon), std::to_string(r.trials), fm(r.success_rate, 6),
           fm(r.success_se, 6), fm(r.mean_stop_time, 2), fm(r.j_lambda, 6), fm(r.mean_rho_on_success, 4),
           std::to_string(r.horizon_truncations)});
  }
}

// ---------------------------------------------------------------------------
// Markdown
// ---------------------------------------------------------------------------

class MarkdownWriter {
 public:
  explicit MarkdownWriter(const std::filesystem::path& path) : out_(path, std::ios::trunc) {
    if (!out_) throw std::runtime_error("cannot open " + path.string() + " for writing");
  }

  void line(const std::string& s = "") { out_ << s << '\n'; }

  void table(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
    out_ << '|';
    for (const auto& h : header) out_ << ' ' << h << " |";
    out_ << "\n|";
    for (size_t i = 0; i < header.size(); ++i) out_ << "---|";
    out_ << '\n';
    for (const auto& r : rows) {
      out_ << '|';
      for (const auto& c : r) out_ << ' ' << c << " |";
      out_ << '\n';
    }
    out_ << '\n';
  }

 private:
  std::ofstream out_;
};

inline void write_theorem_md(const std::filesystem::path& path, const TheoremReport& rep) {
  MarkdownWriter md(path);
  md.line("# Optimal-stopping verification");
  md.line();
  md.line("Setting: K = " + std::to_string(rep.difficulty) + ", p = " + fm(rep.advance_p, 2) +
          ", lambda = " + fm(rep.lambda, 4) + ", trials = " + std::to_string(rep.trials) +
          ", seed = " + std::to_string(rep.seed) + ".");
  md.line();
  md.line("Every policy that stops after a bounded number of advance attempts leaves a success gap of");
  md.line("at least (1-p)^M, so its objective is bounded away from 1; the gap shrinks as M grows, and");
  md.line("the never-stop policy approaches certain success as the horizon grows. No finite-stopping");
  md.line("policy can match it under the length-agnostic objective.");
  md.line();
  md.line("## Finite-stopping policies");
  md.line();
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : rep.finite_rows) {
    rows.push_back({r.policy, fm(r.j0, 5), fm(r.analytic, 5), fm(r.std_err, 5), fm(r.failure_gap, 5),
                    fm(r.mean_stop_time, 1), fm(r.j_lambda, 5)});
  }
  MarkdownWriter& m = md;
  m.table({"policy", "J0 (sim)", "J0 (closed form)", "std err", "failure gap (1-p)^M", "mean T", "J_lambda"},
          rows);
  md.line(std::string("- J0 nondecreasing in M: ") + (rep.j0_nondecreasing_in_m ? "yes" : "NO"));
  md.line(std::string("- every finite-M policy bounded away from 1 by (1-p)^M: ") +
          (rep.finite_policies_bounded_away ? "yes" : "NO"));
  md.line();
  md.line("## Never-stop policy across horizons");
  md.line();
  rows.clear();
  for (const auto& r : rep.never_stop_rows) {
    rows.push_back({r.policy, fm(r.j0, 5), fm(r.mean_stop_time, 1), fm(r.mean_rho_on_success, 4),
                    std::to_string(r.horizon_truncations)});
  }
  m.table({"policy", "J0 (sim)", "mean T", "mean rho on success", "truncated episodes"}, rows);
  md.line(std::string("- never-stop dominates every finite-M policy: ") +
          (rep.never_stop_dominates ? "yes" : "NO"));
  if (!rep.idle_rows.empty()) {
    md.line();
    md.line("## Idle padding under a length penalty");
    md.line();
    rows.clear();
    for (const auto& r : rep.idle_rows) {
      rows.push_back({r.policy, fm(r.j0, 5), fm(r.mean_stop_time, 1), fm(r.j_lambda, 5),
                      fm(r.mean_rho_on_success, 4)});
    }
    m.table({"policy", "J0 (sim)", "mean T", "J_lambda", "mean rho on success"}, rows);
    md.line("Idling leaves success untouched and strictly lowers J_lambda once lambda > 0.");
  }
}

}  // namespace overthink
