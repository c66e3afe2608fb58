#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

#include "overthink/backend.hpp"
#include "overthink/checkpoint.hpp"
#include "overthink/prompts.hpp"
#include "overthink/segmenter.hpp"
#include "overthink/trace.hpp"

namespace overthink {

enum class Judge { Self, External };

inline std::string to_string(Judge j) { return j == Judge::Self ? "self" : "external"; }

inline Judge judge_from_string(std::string_view s) {
  if (s == "self") return Judge::Self;
  if (s == "external") return Judge::External;
  throw std::invalid_argument("unknown judge tag: " + std::string(s));
}

struct ProbeTask {
  const Problem* problem = nullptr;
  const SegmentedTrace* trace = nullptr;
  std::vector<int> step_indices;  // 1-based, ascending
  std::string protocol;
  Judge judge = Judge::Self;
  int index = 0;
  bool loo_note = false;
};

struct ProberConfig {
  int concurrency = 8;
  int max_retries = 3;
  std::chrono::milliseconds retry_base_delay{250};  // doubled per attempt
};

// Runs probe batches against a backend with a bounded in-flight pool.
// Completed keys are served from the checkpoint without touching the backend,
// records are appended as soon as each probe lands (so a killed run resumes),
// and results are returned merged in key order so downstream analysis never
// sees completion order.
class Prober {
 public:
  Prober(Backend& backend, Checkpoint& checkpoint, ProberConfig config = {})
      : backend_(backend), checkpoint_(checkpoint), config_(config) {}

  ProbeRecord probe(const ProbeTask& task) {
    const ProbeKey key{task.problem->id, task.trace->trace.sample_index, task.protocol, to_string(task.judge),
                       task.index};
    if (const ProbeRecord* hit = checkpoint_.find(key)) return *hit;

    const std::string prefix = assemble_steps(*task.trace, task.step_indices);
    const std::string prompt = task.judge == Judge::Self
                                   ? build_self_prompt(*task.problem, prefix, end_of_thinking_, task.loo_note)
                                   : build_external_prompt(*task.problem, prefix, task.loo_note);

    ProbeRecord rec;
    rec.key = key;
    rec.prompt_hash = prompt_hash(prompt);
    try {
      rec.raw_completion = complete_with_retries(key, prompt);
      rec.extracted_answer = extract_boxed_answer(rec.raw_completion);
      rec.correct = verify(rec.extracted_answer, task.problem->gold_answer);
    } catch (const TransientBackendError&) {
      rec.failed = true;  // counted as incorrect, surfaced in reports
      rec.correct = false;
    }
    rec.timestamp = utc_timestamp();
    checkpoint_.append(rec);
    return rec;
  }

  std::vector<ProbeRecord> run(const std::vector<ProbeTask>& tasks) {
    std::vector<ProbeRecord> results(tasks.size());
    std::atomic<size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mu;

    const int workers = std::max(1, std::min<int>(config_.concurrency, static_cast<int>(tasks.size())));
    auto work = [&] {
      for (;;) {
        const size_t i = next.fetch_add(1);
        if (i >= tasks.size()) return;
        {
          std::lock_guard lock(error_mu);
          if (first_error) return;
        }
        try {
          results[i] = probe(tasks[i]);
        } catch (...) {
          std::lock_guard lock(error_mu);
          if (!first_error) first_error = std::current_exception();
          return;
        }
      }
    };

    if (workers == 1) {
      work();
    } else {
      std::vector<std::thread> pool;
      pool.reserve(static_cast<size_t>(workers));
      for (int w = 0; w < workers; ++w) pool.emplace_back(work);
      for (auto& t : pool) t.join();
    }
    if (first_error) std::rethrow_exception(first_error);

    std::sort(results.begin(), results.end(),
              [](const ProbeRecord& a, const ProbeRecord& b) { return a.key < b.key; });
    return results;
  }

  void set_end_of_thinking(std::string delim) { end_of_thinking_ = std::move(delim); }
  const std::string& end_of_thinking() const { return end_of_thinking_; }

 private:
  std::string complete_with_retries(const ProbeKey& key, const std::string& prompt) {
    auto delay = config_.retry_base_delay;
    for (int attempt = 0;; ++attempt) {
      try {
        return backend_.complete(key, prompt);
      } catch (const TransientBackendError&) {
        if (attempt >= config_.max_retries) throw;
        if (delay.count() > 0) std::this_thread::sleep_for(delay);
        delay *= 2;
      }
    }
  }

  Backend& backend_;
  Checkpoint& checkpoint_;
  ProberConfig config_;
  std::string end_of_thinking_ = "</think>";
};

}  // namespace overthink
