#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "overthink/backend.hpp"
#include "overthink/rng.hpp"
#include "overthink/segmenter.hpp"
#include "overthink/trace.hpp"

namespace testutil {

// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("overthink_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path file(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline const std::vector<std::string>& lexicon() {
  static const std::vector<std::string> words = {
      "the",  "sum",    "of",     "both",   "terms",  "equals", "value", "we",    "compute", "each",
      "part", "and",    "then",   "add",    "them",   "to",     "get",   "total", "which",   "gives",
      "a",    "number", "after",  "some",   "algebra"};
  return words;
}

// n plain words, no markers, no terminal punctuation.
inline std::string words(overthink::Rng& rng, int n) {
  std::string out;
  for (int i = 0; i < n; ++i) {
    if (i) out += ' ';
    out += lexicon()[rng.below(lexicon().size())];
  }
  return out;
}

inline overthink::Problem make_problem(const std::string& id, const std::string& gold,
                                       std::optional<int> level = std::nullopt,
                                       std::optional<std::string> subject = std::nullopt) {
  overthink::Problem p;
  p.id = id;
  p.statement = "What is the value asked for in problem " + id + "?";
  p.gold_answer = overthink::normalize_answer(gold);
  p.benchmark = overthink::Benchmark::Custom;
  p.difficulty_level = level;
  p.subject = std::move(subject);
  return p;
}

inline overthink::RawTrace make_trace(const std::string& problem_id, int sample, std::string text,
                                      const std::string& answer, bool correct) {
  overthink::RawTrace t;
  t.problem_id = problem_id;
  t.sample_index = sample;
  t.raw_text = std::move(text);
  t.final_answer = answer;
  t.correct = correct;
  t.total_words = overthink::word_count(t.raw_text);
  return t;
}

// A trace of n_paragraphs paragraphs, each comfortably above any merge
// threshold in use, so step count is stable across thresholds <= min_words.
inline overthink::RawTrace synthetic_trace(overthink::Rng& rng, const std::string& problem_id, int sample,
                                           const std::string& answer, int n_paragraphs, int min_words = 26) {
  std::string text;
  for (int p = 0; p < n_paragraphs; ++p) {
    if (p) text += "\n\n";
    text += words(rng, min_words + static_cast<int>(rng.below(8)));
    text += '.';
  }
  return make_trace(problem_id, sample, text, answer, true);
}

// Scripts a correct answer iff k >= k_star for one trace under one protocol tag.
inline void plant(overthink::MockModelScript& script, const overthink::SegmentedTrace& st,
                  const std::string& gold, int k_star, const std::string& protocol = "truncate") {
  script.plant_truncation(st.trace.problem_id, st.trace.sample_index, st.n_steps(), k_star, gold, "999999",
                          protocol);
}

}  // namespace testutil
