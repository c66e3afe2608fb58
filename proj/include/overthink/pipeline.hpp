#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "overthink/backend.hpp"
#include "overthink/budget.hpp"
#include "overthink/checkpoint.hpp"
#include "overthink/http_backend.hpp"
#include "overthink/jsonl.hpp"
#include "overthink/prober.hpp"
#include "overthink/records_io.hpp"
#include "overthink/redundancy.hpp"
#include "overthink/report.hpp"
#include "overthink/segmenter.hpp"
#include "overthink/stats.hpp"
#include "overthink/trace.hpp"

namespace overthink {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Run configuration; a JSON file with the same field names, every CLI flag
// overriding its config counterpart. Stages communicate only through the
// files below, so any stage can be re-run on its own.
struct RunConfig {
  std::filesystem::path dataset;
  std::filesystem::path traces;
  std::string model_label = "model";
  Benchmark benchmark = Benchmark::Custom;

  BackendSpec backend;                          // decoder for the self judge
  std::optional<BackendSpec> external_backend;  // required when judges include external

  SegmenterConfig segmenter;
  std::vector<std::string> protocols = {"truncate"};  // truncate | loo | prefix
  std::vector<Judge> judges = {Judge::Self};

  int concurrency = 8;
  int max_retries = 3;
  std::filesystem::path checkpoint_dir = "checkpoints";
  std::filesystem::path output_dir = "out";
  uint64_t seed = 42;
  int truncation_cap = 30;
  int bootstrap_b = 10000;
  std::vector<double> fractions = default_prefix_fractions();
  std::filesystem::path record_fixtures;  // when set, append every live completion here

  // Test injection points; never serialized.
  Backend* self_backend_override = nullptr;
  Backend* external_backend_override = nullptr;

  std::filesystem::path segmented_path() const { return output_dir / "segmented.jsonl"; }
  std::filesystem::path records_dir() const { return output_dir / "records"; }
  std::filesystem::path tables_dir() const { return output_dir / "tables"; }
  std::filesystem::path report_path() const { return output_dir / "report.md"; }
  std::filesystem::path record_path(const std::string& protocol, Judge j) const {
    return records_dir() / (protocol + "_" + to_string(j) + ".jsonl");
  }
  std::filesystem::path checkpoint_path(const std::string& protocol, Judge j) const {
    return checkpoint_dir / (protocol + "_" + to_string(j) + ".jsonl");
  }

  void validate() const {
    if (dataset.empty() || traces.empty()) throw ConfigError("dataset and traces paths are required");
    if (concurrency < 1) throw ConfigError("concurrency must be >= 1");
    for (const auto& p : protocols) {
      if (p != "truncate" && p != "loo" && p != "prefix") throw ConfigError("unknown protocol: " + p);
    }
    const bool wants_external =
        std::find(judges.begin(), judges.end(), Judge::External) != judges.end();
    if (wants_external && !external_backend && !external_backend_override) {
      throw ConfigError("external judge selected but no external_backend configured");
    }
    backend.validate();
    if (external_backend) external_backend->validate();
  }
};

namespace detail {

inline BackendSpec backend_spec_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  BackendSpec s;
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "mock") {
    s.kind = BackendKind::Mock;
    s.script_path = (base_dir / j.at("script").get<std::string>()).string();
  } else if (kind == "fixture-replay") {
    s.kind = BackendKind::FixtureReplay;
    s.fixture_path = (base_dir / j.at("fixtures").get<std::string>()).string();
  } else if (kind == "http-chat") {
    s.kind = BackendKind::HttpChat;
    s.endpoint = j.at("endpoint").get<std::string>();
    s.model_name = j.at("model_name").get<std::string>();
  } else {
    throw ConfigError("unknown backend kind: " + kind);
  }
  if (j.contains("end_of_thinking")) s.end_of_thinking = j["end_of_thinking"].get<std::string>();
  if (j.contains("max_tokens")) s.max_tokens = j["max_tokens"].get<int>();
  if (j.contains("temperature")) s.temperature = j["temperature"].get<double>();
  if (j.contains("api_key_env")) s.api_key_env = j["api_key_env"].get<std::string>();
  return s;
}

}  // namespace detail

inline RunConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = ".") {
  RunConfig c;
  try {
    c.dataset = base_dir / j.at("dataset").get<std::string>();
    c.traces = base_dir / j.at("traces").get<std::string>();
    if (j.contains("model_label")) c.model_label = j["model_label"].get<std::string>();
    if (j.contains("benchmark")) c.benchmark = benchmark_from_string(j["benchmark"].get<std::string>());
    c.backend = detail::backend_spec_from_json(j.at("backend"), base_dir);
    if (j.contains("external_backend")) {
      c.external_backend = detail::backend_spec_from_json(j["external_backend"], base_dir);
    }
    if (j.contains("segmenter")) {
      const auto& s = j["segmenter"];
      if (s.contains("merge_threshold")) c.segmenter.merge_threshold = s["merge_threshold"].get<int>();
      if (s.contains("markers")) c.segmenter.markers = s["markers"].get<std::vector<std::string>>();
      if (s.contains("case_sensitive")) c.segmenter.case_sensitive = s["case_sensitive"].get<bool>();
    }
    if (j.contains("protocols")) c.protocols = j["protocols"].get<std::vector<std::string>>();
    if (j.contains("judges")) {
      c.judges.clear();
      for (const auto& s : j["judges"]) c.judges.push_back(judge_from_string(s.get<std::string>()));
    }
    if (j.contains("concurrency")) c.concurrency = j["concurrency"].get<int>();
    if (j.contains("max_retries")) c.max_retries = j["max_retries"].get<int>();
    if (j.contains("checkpoint_dir")) c.checkpoint_dir = base_dir / j["checkpoint_dir"].get<std::string>();
    if (j.contains("output_dir")) c.output_dir = base_dir / j["output_dir"].get<std::string>();
    if (j.contains("seed")) c.seed = j["seed"].get<uint64_t>();
    if (j.contains("truncation_cap")) c.truncation_cap = j["truncation_cap"].get<int>();
    if (j.contains("bootstrap_b")) c.bootstrap_b = j["bootstrap_b"].get<int>();
    if (j.contains("fractions")) c.fractions = j["fractions"].get<std::vector<double>>();
    if (j.contains("record_fixtures")) c.record_fixtures = base_dir / j["record_fixtures"].get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad config: ") + e.what());
  }
  return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return config_from_json(j, path.parent_path());
}

inline std::unique_ptr<Backend> make_backend(const BackendSpec& spec) {
  spec.validate();
  switch (spec.kind) {
    case BackendKind::Mock:
      return std::make_unique<MockBackend>(MockModelScript::load(spec.script_path));
    case BackendKind::FixtureReplay:
      return std::make_unique<FixtureBackend>(spec.fixture_path);
    case BackendKind::HttpChat:
      return std::make_unique<HttpChatBackend>(spec);
  }
  throw ConfigError("unreachable backend kind");
}

// ---------------------------------------------------------------------------
// Corpus loading shared by the stages
// ---------------------------------------------------------------------------

struct Corpus {
  std::vector<Problem> problems;
  ProblemIndex index;
  std::vector<RawTrace> traces;
};

inline Corpus load_corpus(const RunConfig& cfg) {
  Corpus c;
  c.problems = load_problems(cfg.dataset, cfg.benchmark);
  c.index = index_problems(c.problems);
  c.traces = load_traces(cfg.traces, c.index);
  return c;
}

// ---------------------------------------------------------------------------
// Stage 1: segmentation
// ---------------------------------------------------------------------------

inline int run_segment_stage(const RunConfig& cfg) {
  cfg.validate();
  const Corpus corpus = load_corpus(cfg);
  std::filesystem::create_directories(cfg.output_dir);
  JsonlWriter out(cfg.segmented_path());
  int written = 0;
  for (const auto& raw : corpus.traces) {
    try {
      out.write(to_json(segment(raw, cfg.segmenter)));
      ++written;
    } catch (const EmptyTrace&) {
      std::fprintf(stderr, "[segment] skipping empty trace %s#%d\n", raw.problem_id.c_str(),
                   raw.sample_index);
    }
  }
  return written;
}

inline std::map<std::pair<std::string, int>, SegmentedTrace> load_segmented(const RunConfig& cfg,
                                                                            const Corpus& corpus) {
  std::map<std::pair<std::string, int>, const RawTrace*> raw;
  for (const auto& t : corpus.traces) raw[{t.problem_id, t.sample_index}] = &t;
  std::map<std::pair<std::string, int>, SegmentedTrace> out;
  for (const auto& j : read_jsonl(cfg.segmented_path())) {
    const std::string pid = j.at("problem_id").get<std::string>();
    const int sample = j.at("sample_index").get<int>();
    const auto it = raw.find({pid, sample});
    if (it == raw.end()) throw DatasetError("segmented trace " + pid + " has no raw trace");
    out.emplace(std::make_pair(pid, sample), segmented_trace_from_json(j, *it->second));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Stage 2: probing
// ---------------------------------------------------------------------------

struct ProbeStageResult {
  int probed_traces = 0;
  int skipped_incorrect = 0;
};

inline ProbeStageResult run_probe_stage(const RunConfig& cfg) {
  cfg.validate();
  const Corpus corpus = load_corpus(cfg);
  const auto segmented = load_segmented(cfg, corpus);
  std::filesystem::create_directories(cfg.records_dir());
  std::filesystem::create_directories(cfg.checkpoint_dir);

  std::unique_ptr<Backend> self_owned, ext_owned;
  Backend* self_backend = cfg.self_backend_override;
  if (!self_backend) {
    self_owned = make_backend(cfg.backend);
    if (!cfg.record_fixtures.empty()) {
      self_owned = std::make_unique<RecordingBackend>(std::move(self_owned), cfg.record_fixtures);
    }
    self_backend = self_owned.get();
  }
  Backend* ext_backend = cfg.external_backend_override;
  if (!ext_backend && cfg.external_backend) {
    ext_owned = make_backend(*cfg.external_backend);
    ext_backend = ext_owned.get();
  }

  ProbeStageResult result;
  const uint64_t latex_flags_before = unparsed_latex_flags().load();
  const ProberConfig prober_cfg{cfg.concurrency, cfg.max_retries, std::chrono::milliseconds(250)};

  for (const auto& protocol : cfg.protocols) {
    for (Judge judge : cfg.judges) {
      Backend* backend = judge == Judge::Self ? self_backend : ext_backend;
      Checkpoint checkpoint(cfg.checkpoint_path(protocol, judge));
      Prober prober(*backend, checkpoint, prober_cfg);
      prober.set_end_of_thinking(cfg.backend.end_of_thinking);

      JsonlWriter out(cfg.record_path(protocol, judge));
      for (const auto& [key, st] : segmented) {
        if (!st.trace.correct) {
          if (protocol == cfg.protocols.front() && judge == cfg.judges.front()) ++result.skipped_incorrect;
          continue;
        }
        const Problem& problem = corpus.index.at(st.trace.problem_id);
        if (protocol == "truncate") {
          out.write(to_json(critical_point(problem, st, prober, judge, cfg.truncation_cap)));
        } else if (protocol == "loo") {
          if (st.n_steps() < 2) continue;  // single-step traces have no ablatable step
          out.write(to_json(loo_ablation(problem, st, prober, judge)));
        } else if (protocol == "prefix") {
          out.write(to_json(prefix_position_ablation(problem, st, prober, cfg.fractions, cfg.seed, judge)));
        }
        if (protocol == cfg.protocols.front() && judge == cfg.judges.front()) ++result.probed_traces;
      }
    }
  }
  const uint64_t latex_flags = unparsed_latex_flags().load() - latex_flags_before;
  if (latex_flags > 0) {
    std::fprintf(stderr, "[probe] %llu failed comparisons still contained unparsed LaTeX\n",
                 static_cast<unsigned long long>(latex_flags));
  }
  return result;
}

// ---------------------------------------------------------------------------
// Stage 3: analysis
// ---------------------------------------------------------------------------

namespace detail {

inline bool all_problems_have_level(const Corpus& c) {
  for (const auto& p : c.problems) {
    if (!p.difficulty_level) return false;
  }
  return !c.problems.empty();
}

inline bool all_problems_have_subject(const Corpus& c) {
  for (const auto& p : c.problems) {
    if (!p.subject) return false;
  }
  return !c.problems.empty();
}

inline std::vector<std::vector<std::string>> stratum_md_rows(const std::vector<StratumSummary>& strata) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& s : strata) {
    rows.push_back({s.label, fmt_pct(s.rho_mean),
                    "[" + fmt_pct(s.ci_low) + ", " + fmt_pct(s.ci_high) + "]", fm(s.mean_k_star, 1),
                    fm(s.mean_length, 1), std::to_string(s.n)});
  }
  return rows;
}

}  // namespace detail

inline void run_analyze_stage(const RunConfig& cfg) {
  cfg.validate();
  const Corpus corpus = load_corpus(cfg);
  std::filesystem::create_directories(cfg.tables_dir());

  std::map<std::pair<std::string, int>, double> trace_words;
  for (const auto& t : corpus.traces) trace_words[{t.problem_id, t.sample_index}] = t.total_words;

  // Load whatever record files the probe stage produced.
  std::map<Judge, std::vector<RedundancyRecord>> redundancy;
  std::map<Judge, std::vector<LooRecord>> loo;
  std::map<Judge, std::vector<PrefixAblationRecord>> prefix;
  for (Judge judge : {Judge::Self, Judge::External}) {
    if (std::filesystem::exists(cfg.record_path("truncate", judge))) {
      for (const auto& j : read_jsonl(cfg.record_path("truncate", judge))) {
        redundancy[judge].push_back(redundancy_record_from_json(j));
      }
    }
    if (std::filesystem::exists(cfg.record_path("loo", judge))) {
      for (const auto& j : read_jsonl(cfg.record_path("loo", judge))) {
        loo[judge].push_back(loo_record_from_json(j));
      }
    }
    if (std::filesystem::exists(cfg.record_path("prefix", judge))) {
      for (const auto& j : read_jsonl(cfg.record_path("prefix", judge))) {
        prefix[judge].push_back(prefix_record_from_json(j));
      }
    }
  }

  // Failed probes (retries exhausted, counted incorrect) from the checkpoints.
  long failed_probes = 0;
  for (const auto& protocol : {"truncate", "loo", "prefix", "earlystop"}) {
    for (Judge judge : {Judge::Self, Judge::External}) {
      const auto path = cfg.checkpoint_path(protocol, judge);
      if (!std::filesystem::exists(path)) continue;
      for (const auto& rec : Checkpoint(path).records()) failed_probes += rec.failed ? 1 : 0;
    }
  }

  MarkdownWriter md(cfg.report_path());
  md.line("# Redundancy report: " + cfg.model_label + " on " + to_string(cfg.benchmark));
  md.line();
  md.line("- seed: " + std::to_string(cfg.seed));
  md.line("- traces: " + std::to_string(corpus.traces.size()) + " (" +
          std::to_string(std::count_if(corpus.traces.begin(), corpus.traces.end(),
                                       [](const RawTrace& t) { return t.correct; })) +
          " correct)");
  if (failed_probes > 0) {
    md.line("- backend probes that exhausted retries (counted incorrect): " +
            std::to_string(failed_probes));
  }
  md.line();

  // Condition summary (main-table shape), one row per judge.
  std::vector<std::pair<std::string, ConditionSummary>> condition_rows;
  for (const auto& [judge, records] : redundancy) {
    try {
      condition_rows.emplace_back(
          to_string(judge),
          summarize_condition(records, cfg.model_label, to_string(cfg.benchmark), cfg.bootstrap_b, cfg.seed));
    } catch (const EmptyInput&) {
      // handled below as a no-correct-traces section
    }
  }
  if (!condition_rows.empty()) {
    write_condition_csv(cfg.tables_dir() / "condition_summary.csv", condition_rows, cfg.seed);
    md.line("## Condition summary");
    md.line();
    std::vector<std::vector<std::string>> rows;
    for (const auto& [judge, s] : condition_rows) {
      rows.push_back({s.model, s.benchmark, judge, fmt_pct(s.rho_mean),
                      "[" + fmt_pct(s.ci_low) + ", " + fmt_pct(s.ci_high) + "]", fmt_pct(s.rho_word_mean),
                      fm(s.mean_n_steps, 1), fm(s.mean_k_star, 1), fm(s.median_k_star, 1),
                      std::to_string(s.n_correct), std::to_string(s.n_not_found)});
    }
    md.table({"model", "benchmark", "judge", "rho %", "95% CI", "rho_L %", "mean N", "mean k*", "med k*",
              "n", "k* not found"},
             rows);
    // Step- vs word-level agreement over the emitted rows.
    for (const auto& [judge, s] : condition_rows) {
      md.line("- " + judge + ": |rho - rho_L| = " +
              fm(std::abs(s.rho_mean - s.rho_word_mean) * 100.0, 1) + " points");
    }
    md.line();
  } else {
    md.line("## Condition summary");
    md.line();
    md.line("No correct traces produced a critical point; nothing to aggregate.");
    md.line();
  }

  // Per-judge distribution and variance tables.
  for (const auto& [judge, records] : redundancy) {
    const std::string tag = to_string(judge);
    std::vector<double> rel_positions;
    GroupedSample rho_groups;
    for (const auto& r : records) {
      if (!r.k_star) continue;
      rel_positions.push_back(static_cast<double>(*r.k_star) / r.n_steps);
      rho_groups.add(r.problem_id, *r.rho_step);
    }
    if (!rel_positions.empty()) {
      const Ecdf ecdf(rel_positions);
      write_ecdf_csv(cfg.tables_dir() / ("ecdf_" + tag + ".csv"), ecdf, cfg.seed);
      md.line("## Critical-point position ECDF (" + tag + " judge)");
      md.line();
      md.line("- P50 of k*/N: " + fmt_ratio(ecdf.p50()) + ", P90: " + fmt_ratio(ecdf.p90()) +
              " (series in tables/ecdf_" + tag + ".csv)");
      md.line();
    }
    try {
      const VarianceSummary v = within_problem_variance(rho_groups);
      write_variance_csv(cfg.tables_dir() / ("variance_" + tag + ".csv"), {{tag, v}}, cfg.seed);
      md.line("## Within-problem variance (" + tag + " judge)");
      md.line();
      md.table({"judge", "problems (>=2 samples)", "mean sigma_rho", "mean max-min"},
               {{tag, std::to_string(v.n_problems), fmt_ratio(v.mean_sigma), fmt_ratio(v.mean_range)}});
    } catch (const NoEligibleGroups&) {
      // single-sample corpora have no variance table
    }

    const auto positional = positional_redundancy(records);
    std::vector<std::pair<std::string, std::vector<PositionalBin>>> curves = {{"all", positional}};
    if (detail::all_problems_have_level(corpus)) {
      std::map<int, std::vector<RedundancyRecord>> by_level;
      for (const auto& r : records) {
        by_level[*corpus.index.at(r.problem_id).difficulty_level].push_back(r);
      }
      for (const auto& [level, recs] : by_level) {
        curves.emplace_back("level-" + std::to_string(level), positional_redundancy(recs));
      }
    }
    write_positional_csv(cfg.tables_dir() / ("positional_" + tag + ".csv"), curves, cfg.seed);

    // Difficulty and subject stratification (only when some k* was found).
    if (detail::all_problems_have_level(corpus) && !rel_positions.empty()) {
      const auto strata = stratify(
          records,
          [&](const std::string& pid) {
            return std::make_optional(std::to_string(*corpus.index.at(pid).difficulty_level));
          },
          [&](const std::string& pid, int sample) { return trace_words.at({pid, sample}); },
          cfg.bootstrap_b, cfg.seed);
      write_stratum_csv(cfg.tables_dir() / ("levels_" + tag + ".csv"), "level", strata, cfg.seed);
      md.line("## Redundancy by difficulty level (" + tag + " judge)");
      md.line();
      md.table({"level", "rho %", "95% CI", "mean k*", "mean words", "n"}, detail::stratum_md_rows(strata));
    }
    if (detail::all_problems_have_subject(corpus) && !rel_positions.empty()) {
      const auto strata = stratify(
          records, [&](const std::string& pid) { return corpus.index.at(pid).subject; },
          [&](const std::string& pid, int sample) { return trace_words.at({pid, sample}); },
          cfg.bootstrap_b, cfg.seed);
      std::optional<double> rho_len_spearman;
      if (strata.size() >= 2) {
        std::vector<double> rhos, lens;
        for (const auto& s : strata) {
          rhos.push_back(s.rho_mean);
          lens.push_back(s.mean_length);
        }
        try {
          rho_len_spearman = spearman(rhos, lens);
        } catch (const DegenerateInput&) {
        }
      }
      write_stratum_csv(cfg.tables_dir() / ("subjects_" + tag + ".csv"), "subject", strata, cfg.seed,
                        rho_len_spearman);
      md.line("## Redundancy by subject (" + tag + " judge)");
      md.line();
      md.table({"subject", "rho %", "95% CI", "mean k*", "mean words", "n"}, detail::stratum_md_rows(strata));
      if (rho_len_spearman) {
        md.line("- Spearman(rho, mean length) across subjects: " + fmt_ratio(*rho_len_spearman));
        md.line();
      }
    }
  }

  // Length-accuracy deciles over all traces.
  {
    std::vector<double> lengths;
    std::vector<bool> correct;
    for (const auto& t : corpus.traces) {
      lengths.push_back(t.total_words);
      correct.push_back(t.correct);
    }
    if (lengths.size() >= 10) {
      const auto rows = decile_table(lengths, correct);
      write_decile_csv(cfg.tables_dir() / "deciles.csv", rows, cfg.seed);
      md.line("## Length-accuracy deciles (all traces)");
      md.line();
      std::vector<std::vector<std::string>> mdrows;
      for (size_t i = 0; i < rows.size(); ++i) {
        mdrows.push_back({"D" + std::to_string(i + 1), fm(rows[i].mean_length, 1),
                          fmt_pct(rows[i].accuracy), std::to_string(rows[i].n)});
      }
      md.table({"decile", "mean words", "accuracy %", "n"}, mdrows);
    }
  }

  // Leave-one-out summary.
  std::vector<LooSummary> loo_rows;
  for (const auto& [judge, records] : loo) {
    if (!records.empty()) loo_rows.push_back(summarize_loo(records, to_string(judge)));
  }
  if (!loo_rows.empty()) {
    write_loo_csv(cfg.tables_dir() / "loo_summary.csv", loo_rows, cfg.seed);
    md.line("## Leave-one-out critical steps");
    md.line();
    std::vector<std::vector<std::string>> rows;
    for (const auto& s : loo_rows) {
      rows.push_back({s.judge, std::to_string(s.total_steps), std::to_string(s.critical_steps),
                      fmt_pct(s.critical_fraction())});
    }
    md.table({"judge", "ablated steps", "critical", "fraction %"}, rows);
  }

  // Prefix-position curves.
  for (const auto& [judge, records] : prefix) {
    if (records.empty()) continue;
    const PrefixCurves curves = summarize_prefix(records);
    const std::string tag = to_string(judge);
    write_prefix_csv(cfg.tables_dir() / ("prefix_curves_" + tag + ".csv"), curves, cfg.seed);
    md.line("## Prefix-position ablation (" + tag + " judge, n=" + std::to_string(curves.n) + ")");
    md.line();
    std::vector<std::vector<std::string>> rows;
    for (size_t i = 0; i < curves.fractions.size(); ++i) {
      rows.push_back({fm(curves.fractions[i], 2), fmt_pct(curves.first[i]), fmt_pct(curves.last[i]),
                      fmt_pct(curves.middle[i]), fmt_pct(curves.random[i])});
    }
    md.table({"k/N", "first %", "last %", "middle %", "random %"}, rows);
  }

  // Judge agreement and the self-external gap.
  if (redundancy.count(Judge::Self) && redundancy.count(Judge::External)) {
    try {
      const JudgeAgreement agreement =
          judge_agreement(redundancy.at(Judge::Self), redundancy.at(Judge::External));
      std::vector<JudgeGapRow> gaps;
      JudgeGapRow gap;
      gap.benchmark = to_string(cfg.benchmark);
      for (const auto& [judge, s] : condition_rows) {
        (judge == "self" ? gap.rho_self : gap.rho_ext) = s.rho_mean;
      }
      gaps.push_back(gap);
      write_judge_csv(cfg.tables_dir() / "judge_agreement.csv", agreement, gaps, cfg.seed);
      md.line("## Judge agreement (self vs external)");
      md.line();
      md.table({"n", "exact %", "within 1 %", "self earlier %", "mean delta k*", "rho gap (pts)"},
               {{std::to_string(agreement.n), fm(agreement.exact_pct, 1), fm(agreement.within1_pct, 1),
                 fm(agreement.pi_earlier_pct, 1), fm(agreement.mean_delta, 2),
                 fm(gap.gap() * 100.0, 1)}});
    } catch (const EmptyJoin&) {
      md.line("## Judge agreement (self vs external)");
      md.line();
      md.line("No traces have a critical point under both judges.");
      md.line();
    }
  }
}

// ---------------------------------------------------------------------------
// Full pipeline
// ---------------------------------------------------------------------------

struct PipelineResult {
  int segmented = 0;
  ProbeStageResult probe;
};

inline PipelineResult run_pipeline(const RunConfig& cfg) {
  PipelineResult r;
  r.segmented = run_segment_stage(cfg);
  r.probe = run_probe_stage(cfg);
  run_analyze_stage(cfg);
  return r;
}

// ---------------------------------------------------------------------------
// Early-stop corpus evaluation: truncate each trace at the syntactic
// convergence point and re-probe the forced answer from the truncated prefix,
// scoring what the naive stopping rule would have cost.
// ---------------------------------------------------------------------------

inline EarlyStopSummary early_stop_eval(const RunConfig& cfg) {
  cfg.validate();
  const Corpus corpus = load_corpus(cfg);
  const auto segmented = load_segmented(cfg, corpus);

  std::unique_ptr<Backend> owned;
  Backend* backend = cfg.self_backend_override;
  if (!backend) {
    owned = make_backend(cfg.backend);
    backend = owned.get();
  }
  std::filesystem::create_directories(cfg.checkpoint_dir);
  Checkpoint checkpoint(cfg.checkpoint_path("earlystop", Judge::Self));
  Prober prober(*backend, checkpoint,
                {cfg.concurrency, cfg.max_retries, std::chrono::milliseconds(250)});
  prober.set_end_of_thinking(cfg.backend.end_of_thinking);

  EarlyStopSummary s;
  long words_before = 0, words_after = 0;
  int correct_before = 0, correct_after = 0;
  for (const auto& [key, st] : segmented) {
    ++s.n;
    words_before += st.trace.total_words;
    correct_before += st.trace.correct ? 1 : 0;
    const EarlyStopDecision d = convergence_early_stop(st);
    words_after += d.kept_words;
    if (!d.stop_index || d.kept_steps == st.n_steps()) {
      correct_after += st.trace.correct ? 1 : 0;  // nothing truncated: verdict unchanged
      continue;
    }
    ++s.n_stopped;
    const Problem& problem = corpus.index.at(st.trace.problem_id);
    std::vector<int> steps;
    for (int i = 1; i <= d.kept_steps; ++i) steps.push_back(i);
    const ProbeRecord rec = prober.probe({&problem, &st, steps, "earlystop", Judge::Self, *d.stop_index, false});
    correct_after += rec.correct ? 1 : 0;
  }
  if (s.n > 0) {
    s.mean_words_before = static_cast<double>(words_before) / s.n;
    s.mean_words_after = static_cast<double>(words_after) / s.n;
    s.acc_before = static_cast<double>(correct_before) / s.n;
    s.acc_after = static_cast<double>(correct_after) / s.n;
  }
  std::filesystem::create_directories(cfg.tables_dir());
  write_earlystop_csv(cfg.tables_dir() / "earlystop.csv", s, cfg.seed);
  return s;
}

}  // namespace overthink
