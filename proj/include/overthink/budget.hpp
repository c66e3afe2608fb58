#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "overthink/segmenter.hpp"
#include "overthink/stats.hpp"
#include "overthink/trace.hpp"

namespace overthink {

struct MissingDifficulty : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Difficulty-aware budget sweep (post-hoc filtering, not an inference-time
// mitigation): retain traces with L <= alpha * median(L | d) and report the
// retained set's accuracy and mean length per alpha.
// ---------------------------------------------------------------------------

struct BudgetTrace {
  std::optional<int> difficulty;
  double length = 0.0;  // word count by default; callers may supply token counts
  bool correct = false;
};

struct BudgetSweepRow {
  double alpha = 0.0;  // infinity() = unfiltered
  double retained_accuracy = 0.0;
  double avg_tokens = 0.0;
  int retained_n = 0;
};

inline std::vector<double> default_alpha_grid() {
  return {0.5, 0.75, 1.0, 1.25, 1.5, 2.0, 3.0, std::numeric_limits<double>::infinity()};
}

inline std::vector<BudgetSweepRow> budget_sweep(const std::vector<BudgetTrace>& traces,
                                                const std::vector<double>& alphas = default_alpha_grid()) {
  std::map<int, std::vector<double>> lengths_by_level;
  for (const auto& t : traces) {
    if (!t.difficulty) throw MissingDifficulty("budget_sweep: trace lacks a difficulty label");
    lengths_by_level[*t.difficulty].push_back(t.length);
  }
  std::map<int, double> median_by_level;
  for (auto& [level, lengths] : lengths_by_level) median_by_level[level] = median_of(lengths);

  std::vector<BudgetSweepRow> rows;
  for (double alpha : alphas) {
    BudgetSweepRow row;
    row.alpha = alpha;
    double len_sum = 0.0;
    int n_correct = 0;
    for (const auto& t : traces) {
      if (!std::isinf(alpha) && t.length > alpha * median_by_level[*t.difficulty]) continue;
      ++row.retained_n;
      len_sum += t.length;
      n_correct += t.correct ? 1 : 0;
    }
    if (row.retained_n > 0) {
      row.retained_accuracy = static_cast<double>(n_correct) / row.retained_n;
      row.avg_tokens = len_sum / row.retained_n;
    }
    rows.push_back(row);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Shortest-of-M correct analysis
// ---------------------------------------------------------------------------

struct SampleLC {
  double length = 0.0;
  bool correct = false;
};

struct ShortestOfMResult {
  int m = 0;
  int n_groups = 0;  // problems with >= M correct samples
  // Accuracies under mixed selection (the candidate pool is the group's first
  // M samples regardless of correctness): picking uniformly vs picking the
  // shortest. On the correct-only pools used for the length columns both
  // would be 1.0 by construction.
  double random_acc = 0.0;
  double shortest_acc = 0.0;
  // Lengths over the first M *correct* samples per group: mean of per-group
  // means vs mean of per-group minima.
  double random_len = 0.0;
  double shortest_len = 0.0;
  double reduction = 0.0;  // 1 - shortest_len / random_len
};

// groups: per-problem samples in sample-index order. Deterministic by
// construction: the "random" baseline is the per-group mean, never a draw.
inline ShortestOfMResult shortest_of_m(const std::map<std::string, std::vector<SampleLC>>& groups, int m) {
  if (m < 1) throw std::invalid_argument("shortest_of_m: M must be >= 1");
  ShortestOfMResult out;
  out.m = m;
  double rand_len_sum = 0.0, short_len_sum = 0.0, rand_acc_sum = 0.0, short_acc_sum = 0.0;
  for (const auto& [_, samples] : groups) {
    std::vector<double> correct_lengths;
    for (const auto& s : samples) {
      if (s.correct && static_cast<int>(correct_lengths.size()) < m) correct_lengths.push_back(s.length);
    }
    if (static_cast<int>(correct_lengths.size()) < m) continue;
    ++out.n_groups;

    rand_len_sum += std::accumulate(correct_lengths.begin(), correct_lengths.end(), 0.0) / m;
    short_len_sum += *std::min_element(correct_lengths.begin(), correct_lengths.end());

    // mixed-selection pool: the first M samples of the group, any correctness
    const int pool = std::min<int>(m, static_cast<int>(samples.size()));
    int pool_correct = 0;
    double best_len = std::numeric_limits<double>::infinity();
    bool best_correct = false;
    for (int i = 0; i < pool; ++i) {
      pool_correct += samples[static_cast<size_t>(i)].correct ? 1 : 0;
      if (samples[static_cast<size_t>(i)].length < best_len) {
        best_len = samples[static_cast<size_t>(i)].length;
        best_correct = samples[static_cast<size_t>(i)].correct;
      }
    }
    rand_acc_sum += static_cast<double>(pool_correct) / pool;
    short_acc_sum += best_correct ? 1.0 : 0.0;
  }
  if (out.n_groups == 0) throw NoEligibleGroups("shortest_of_m: no group has >= M correct samples");
  out.random_len = rand_len_sum / out.n_groups;
  out.shortest_len = short_len_sum / out.n_groups;
  out.random_acc = rand_acc_sum / out.n_groups;
  out.shortest_acc = short_acc_sum / out.n_groups;
  out.reduction = 1.0 - out.shortest_len / out.random_len;
  return out;
}

// ---------------------------------------------------------------------------
// Convergence-detection early stop: stop at the first step whose trailing
// number equals the previous step's. A deliberately naive syntactic rule,
// kept as a baseline that the corpus evaluator can score.
// ---------------------------------------------------------------------------

// Last maximal numeric token of a step: a digit/comma/period run containing a
// digit, commas stripped, canonicalized numerically where possible.
inline std::optional<std::string> trailing_number(std::string_view text) {
  std::optional<std::string> last;
  size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    if ((c >= '0' && c <= '9') || c == '.' || c == ',') {
      size_t j = i;
      bool has_digit = false;
      while (j < text.size() &&
             ((text[j] >= '0' && text[j] <= '9') || text[j] == '.' || text[j] == ',')) {
        has_digit = has_digit || (text[j] >= '0' && text[j] <= '9');
        ++j;
      }
      if (has_digit) {
        std::string tok(text.substr(i, j - i));
        std::erase(tok, ',');
        while (!tok.empty() && tok.back() == '.') tok.pop_back();
        while (!tok.empty() && tok.front() == '.' && tok.find('.', 1) != std::string::npos) tok.erase(0, 1);
        if (!tok.empty()) {
          if (auto r = detail::parse_rational(tok)) {
            last = detail::rational_to_string(*r);
          } else {
            last = tok;
          }
        }
      }
      i = j;
    } else {
      ++i;
    }
  }
  return last;
}

struct EarlyStopDecision {
  std::optional<int> stop_index;  // first step repeating the previous trailing number; >= 2
  int kept_steps = 0;             // steps in the truncated prefix (stop step included)
  int kept_words = 0;
};

inline EarlyStopDecision convergence_early_stop(const SegmentedTrace& st) {
  EarlyStopDecision out;
  std::optional<std::string> prev;
  for (const auto& step : st.steps) {
    const auto cur = trailing_number(step.text);
    if (cur && prev && *cur == *prev) {
      out.stop_index = step.index;
      break;
    }
    prev = cur;  // comparison is between consecutive steps only
  }
  out.kept_steps = out.stop_index ? *out.stop_index : st.n_steps();
  for (int i = 0; i < out.kept_steps; ++i) out.kept_words += st.steps[static_cast<size_t>(i)].word_count;
  return out;
}

}  // namespace overthink
