// overthink: measure how much of a reasoning model's chain of thought its own
// decoder actually needs, and verify the optimal-stopping account of why the
// excess exists. Subcommands mirror the pipeline stages; see README.md.

#include <cstdio>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "overthink/budget.hpp"
#include "overthink/pipeline.hpp"
#include "overthink/report.hpp"
#include "overthink/sim.hpp"

using namespace overthink;

namespace {

struct CommonOpts {
  std::string config_path;
  std::string dataset, traces, output_dir, checkpoint_dir;
  std::string backend_kind, backend_script, backend_endpoint, backend_model;
  int concurrency = 0;
  int merge_threshold = 0;
  uint64_t seed = 0;
  bool seed_set = false;
  std::vector<std::string> protocols;
  std::string judge;

  void add_to(CLI::App* cmd, bool with_probe_flags) {
    cmd->add_option("--config", config_path, "run-config JSON file")->required();
    cmd->add_option("--dataset", dataset, "problems JSONL (overrides config)");
    cmd->add_option("--traces", traces, "traces JSONL (overrides config)");
    cmd->add_option("--output-dir", output_dir, "output directory (overrides config)");
    cmd->add_option("--seed", seed, "master seed (overrides config)")->each([this](const std::string&) {
      seed_set = true;
    });
    cmd->add_option("--merge-threshold", merge_threshold, "segmenter merge threshold (overrides config)");
    if (with_probe_flags) {
      cmd->add_option("--checkpoint", checkpoint_dir, "checkpoint directory (overrides config)");
      cmd->add_option("--concurrency", concurrency, "in-flight probe limit (overrides config)");
      cmd->add_option("--protocol", protocols, "protocols to run: truncate, loo, prefix");
      cmd->add_option("--judge", judge, "judge: self, external, or both");
      cmd->add_option("--backend", backend_kind, "backend kind override: mock, fixture-replay, http-chat");
      cmd->add_option("--backend-script", backend_script, "mock script path (with --backend mock)");
      cmd->add_option("--backend-fixtures", backend_script, "fixtures path (with --backend fixture-replay)");
      cmd->add_option("--backend-endpoint", backend_endpoint, "endpoint URL (with --backend http-chat)");
      cmd->add_option("--backend-model", backend_model, "model name (with --backend http-chat)");
    }
  }

  RunConfig resolve() const {
    RunConfig cfg = load_config(config_path);
    if (!dataset.empty()) cfg.dataset = dataset;
    if (!traces.empty()) cfg.traces = traces;
    if (!output_dir.empty()) cfg.output_dir = output_dir;
    if (!checkpoint_dir.empty()) cfg.checkpoint_dir = checkpoint_dir;
    if (concurrency > 0) cfg.concurrency = concurrency;
    if (merge_threshold > 0) cfg.segmenter.merge_threshold = merge_threshold;
    if (seed_set) cfg.seed = seed;
    if (!protocols.empty()) cfg.protocols = protocols;
    if (judge == "both") {
      cfg.judges = {Judge::Self, Judge::External};
    } else if (!judge.empty()) {
      cfg.judges = {judge_from_string(judge)};
    }
    if (!backend_kind.empty()) {
      BackendSpec spec = cfg.backend;
      if (backend_kind == "mock") {
        spec.kind = BackendKind::Mock;
        spec.script_path = backend_script;
      } else if (backend_kind == "fixture-replay") {
        spec.kind = BackendKind::FixtureReplay;
        spec.fixture_path = backend_script;
      } else if (backend_kind == "http-chat") {
        spec.kind = BackendKind::HttpChat;
        spec.endpoint = backend_endpoint;
        spec.model_name = backend_model;
      } else {
        throw ConfigError("unknown backend kind: " + backend_kind);
      }
      cfg.backend = spec;
    }
    return cfg;
  }
};

std::vector<int> parse_int_list(const std::string& csv) {
  std::vector<int> out;
  size_t pos = 0;
  while (pos < csv.size()) {
    const size_t comma = csv.find(',', pos);
    out.push_back(std::stoi(csv.substr(pos, comma - pos)));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

std::vector<double> parse_alpha_list(const std::string& csv) {
  std::vector<double> out;
  size_t pos = 0;
  while (pos < csv.size()) {
    const size_t comma = csv.find(',', pos);
    const std::string tok = csv.substr(pos, comma - pos);
    out.push_back(tok == "inf" ? std::numeric_limits<double>::infinity() : std::stod(tok));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

Policy parse_policy(const std::string& name, int difficulty) {
  const auto colon = name.find(':');
  const std::string head = name.substr(0, colon);
  const int arg = colon == std::string::npos ? 0 : std::stoi(name.substr(colon + 1));
  if (head == "advance-m") return advance_m_then_stop(arg);
  if (head == "never-stop") return never_stop();
  if (head == "solve-then-stop") return solve_then_stop(difficulty);
  if (head == "idle-then-solve") return idle_then_solve(arg, difficulty);
  throw CLI::ValidationError("--policy", "unknown policy " + name +
                                             " (advance-m:M | never-stop | solve-then-stop | idle-then-solve:I)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"reasoning-trace redundancy measurement and optimal-stopping verification"};
  app.require_subcommand(1);

  CommonOpts segment_opts, probe_opts, analyze_opts, run_opts, earlystop_opts, budget_opts, shortest_opts,
      report_opts;

  auto* cmd_segment = app.add_subcommand("segment", "split traces into steps (writes segmented.jsonl)");
  segment_opts.add_to(cmd_segment, false);

  auto* cmd_probe = app.add_subcommand("probe", "run forced-termination protocols against the backend");
  probe_opts.add_to(cmd_probe, true);
  std::string sweep_thresholds, record_fixtures;
  cmd_probe->add_option("--robustness-sweep", sweep_thresholds,
                        "comma-separated merge thresholds: re-segment, re-measure, write robustness.csv");
  cmd_probe->add_option("--record-fixtures", record_fixtures,
                        "record live completions to this file for later fixture-replay");

  auto* cmd_analyze = app.add_subcommand("analyze", "aggregate probe records into tables and report.md");
  analyze_opts.add_to(cmd_analyze, false);

  auto* cmd_run = app.add_subcommand("run", "segment, probe, and analyze in one go");
  run_opts.add_to(cmd_run, true);

  auto* cmd_report = app.add_subcommand("report", "re-emit tables and report.md from existing records");
  report_opts.add_to(cmd_report, false);

  auto* cmd_earlystop = app.add_subcommand("early-stop-eval",
                                           "evaluate the trailing-number convergence stop rule on the corpus");
  earlystop_opts.add_to(cmd_earlystop, true);

  auto* cmd_budget = app.add_subcommand("sweep-budget", "difficulty-aware post-hoc budget sweep");
  budget_opts.add_to(cmd_budget, false);
  std::string alpha_csv = "0.5,0.75,1.0,1.25,1.5,2.0,3.0,inf";
  bool use_tokens = false;
  cmd_budget->add_option("--alphas", alpha_csv, "comma-separated alpha grid (inf allowed)");
  cmd_budget->add_flag("--use-tokens", use_tokens, "use the traces' backend token counts instead of words");

  auto* cmd_shortest = app.add_subcommand("shortest-of-m", "shortest-of-M correct selection analysis");
  shortest_opts.add_to(cmd_shortest, false);
  std::string m_csv = "2,3";
  cmd_shortest->add_option("--m", m_csv, "comma-separated M values");

  auto* cmd_sim = app.add_subcommand("simulate", "Monte-Carlo the Advance/Idle/Stop process");
  int sim_k = 1, sim_horizon = 10000;
  long sim_trials = 100000;
  double sim_p = 0.5, sim_lambda = 0.0;
  uint64_t sim_seed = 42;
  std::vector<std::string> sim_policies = {"advance-m:1", "advance-m:2", "advance-m:4", "advance-m:8",
                                           "never-stop"};
  std::string sim_out = "out";
  std::string theorem_ms = "1,2,4,8", theorem_horizons = "10,100,1000,10000";
  cmd_sim->add_option("--K", sim_k, "difficulty: successful advances required");
  cmd_sim->add_option("--p", sim_p, "advance success probability");
  cmd_sim->add_option("--lambda", sim_lambda, "length penalty");
  cmd_sim->add_option("--horizon", sim_horizon, "hard cap on actions per episode");
  cmd_sim->add_option("--trials", sim_trials, "episodes per policy");
  cmd_sim->add_option("--seed", sim_seed, "master seed");
  cmd_sim->add_option("--policy", sim_policies, "policies to simulate");
  cmd_sim->add_option("--output-dir", sim_out, "output directory");
  cmd_sim->add_option("--theorem-ms", theorem_ms, "M grid for the theorem report");
  cmd_sim->add_option("--theorem-horizons", theorem_horizons, "horizon grid for the theorem report");

  CLI11_PARSE(app, argc, argv);

  try {
    if (cmd_segment->parsed()) {
      const int n = run_segment_stage(segment_opts.resolve());
      std::printf("segmented %d traces\n", n);
    } else if (cmd_probe->parsed()) {
      RunConfig cfg = probe_opts.resolve();
      if (!record_fixtures.empty()) cfg.record_fixtures = record_fixtures;
      if (!sweep_thresholds.empty()) {
        const Corpus corpus = load_corpus(cfg);
        std::unique_ptr<Backend> backend = make_backend(cfg.backend);
        std::map<int, std::unique_ptr<Checkpoint>> checkpoints;
        std::map<int, std::unique_ptr<Prober>> probers;
        auto factory = [&](int t) -> Prober& {
          std::filesystem::create_directories(cfg.checkpoint_dir);
          checkpoints[t] = std::make_unique<Checkpoint>(cfg.checkpoint_dir /
                                                        ("sweep_t" + std::to_string(t) + ".jsonl"));
          probers[t] = std::make_unique<Prober>(
              *backend, *checkpoints[t],
              ProberConfig{cfg.concurrency, cfg.max_retries, std::chrono::milliseconds(250)});
          probers[t]->set_end_of_thinking(cfg.backend.end_of_thinking);
          return *probers[t];
        };
        const auto rows = robustness_sweep(corpus.traces, corpus.index, parse_int_list(sweep_thresholds),
                                           factory, cfg.judges.front(), cfg.truncation_cap);
        std::filesystem::create_directories(cfg.tables_dir());
        write_robustness_csv(cfg.tables_dir() / "robustness.csv", rows, cfg.seed);
        for (const auto& r : rows) {
          std::printf("threshold %2d: mean rho %s over %d traces (%d failed)\n", r.threshold,
                      fmt_pct(r.mean_rho).c_str(), r.n_traces, r.n_failed);
        }
      } else {
        const ProbeStageResult r = run_probe_stage(cfg);
        std::printf("probed %d correct traces (%d incorrect skipped)\n", r.probed_traces,
                    r.skipped_incorrect);
      }
    } else if (cmd_analyze->parsed()) {
      run_analyze_stage(analyze_opts.resolve());
      std::printf("report written\n");
    } else if (cmd_report->parsed()) {
      run_analyze_stage(report_opts.resolve());
      std::printf("report written\n");
    } else if (cmd_run->parsed()) {
      const RunConfig cfg = run_opts.resolve();
      const PipelineResult r = run_pipeline(cfg);
      std::printf("segmented %d traces, probed %d; report at %s\n", r.segmented, r.probe.probed_traces,
                  cfg.report_path().string().c_str());
    } else if (cmd_earlystop->parsed()) {
      const EarlyStopSummary s = early_stop_eval(earlystop_opts.resolve());
      std::printf("early stop fired on %d/%d traces: words %s -> %s, accuracy %s%% -> %s%%\n", s.n_stopped,
                  s.n, fm(s.mean_words_before, 1).c_str(), fm(s.mean_words_after, 1).c_str(),
                  fmt_pct(s.acc_before).c_str(), fmt_pct(s.acc_after).c_str());
    } else if (cmd_budget->parsed()) {
      const RunConfig cfg = budget_opts.resolve();
      const Corpus corpus = load_corpus(cfg);
      std::map<std::pair<std::string, int>, double> tokens;
      if (use_tokens) {
        for (const auto& j : read_jsonl(cfg.traces)) {
          if (!j.contains("tokens")) {
            throw ConfigError("--use-tokens set but a trace record has no tokens field");
          }
          tokens[{j.at("problem_id").get<std::string>(), j.at("sample_index").get<int>()}] =
              j["tokens"].get<double>();
        }
      }
      std::vector<BudgetTrace> budget_traces;
      for (const auto& t : corpus.traces) {
        BudgetTrace bt;
        bt.difficulty = corpus.index.at(t.problem_id).difficulty_level;
        bt.length = use_tokens ? tokens.at({t.problem_id, t.sample_index}) : t.total_words;
        bt.correct = t.correct;
        budget_traces.push_back(bt);
      }
      const auto rows = budget_sweep(budget_traces, parse_alpha_list(alpha_csv));
      std::filesystem::create_directories(cfg.tables_dir());
      write_budget_csv(cfg.tables_dir() / "budget_sweep.csv", rows, cfg.seed);
      for (const auto& r : rows) {
        std::printf("alpha %5s: acc %s%%, avg len %s, n %d\n", fm(r.alpha, 2).c_str(),
                    fmt_pct(r.retained_accuracy).c_str(), fm(r.avg_tokens, 1).c_str(), r.retained_n);
      }
    } else if (cmd_shortest->parsed()) {
      const RunConfig cfg = shortest_opts.resolve();
      const Corpus corpus = load_corpus(cfg);
      std::map<std::string, std::vector<SampleLC>> groups;
      for (const auto& t : corpus.traces) {
        groups[t.problem_id].push_back({static_cast<double>(t.total_words), t.correct});
      }
      std::vector<ShortestOfMResult> rows;
      for (int m : parse_int_list(m_csv)) rows.push_back(shortest_of_m(groups, m));
      std::filesystem::create_directories(cfg.tables_dir());
      write_shortest_csv(cfg.tables_dir() / "shortest_of_m.csv", rows, cfg.seed);
      for (const auto& r : rows) {
        std::printf("M=%d over %d problems: random len %s, shortest len %s, reduction %s%%\n", r.m,
                    r.n_groups, fm(r.random_len, 1).c_str(), fm(r.shortest_len, 1).c_str(),
                    fmt_pct(r.reduction).c_str());
      }
    } else if (cmd_sim->parsed()) {
      SimConfig cfg;
      cfg.difficulty = sim_k;
      cfg.advance_p = sim_p;
      cfg.length_penalty = sim_lambda;
      cfg.horizon = sim_horizon;
      cfg.trials = sim_trials;
      cfg.seed = sim_seed;
      std::vector<std::pair<std::string, SimResult>> rows;
      for (const auto& name : sim_policies) {
        rows.emplace_back(name, simulate(parse_policy(name, cfg.difficulty), cfg));
      }
      std::filesystem::create_directories(sim_out);
      write_sim_csv(std::filesystem::path(sim_out) / "sim.csv", cfg, rows, cfg.seed);
      const TheoremReport rep =
          stopping_theorem_report(cfg, parse_int_list(theorem_ms), parse_int_list(theorem_horizons));
      write_theorem_md(std::filesystem::path(sim_out) / "theorem_report.md", rep);
      for (const auto& [name, r] : rows) {
        std::printf("%-24s success %s  mean T %s  J_lambda %s\n", name.c_str(),
                    fm(r.success_rate, 5).c_str(), fm(r.mean_stop_time, 2).c_str(),
                    fm(r.j_lambda, 5).c_str());
      }
      std::printf("theorem report: %s\n", (std::filesystem::path(sim_out) / "theorem_report.md").c_str());
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
