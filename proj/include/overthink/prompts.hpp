#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include "overthink/trace.hpp"

namespace overthink {

struct EmptyProblem : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct EmptyPrefix : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr std::string_view kAnswerStem = "The final answer is \\boxed{";
inline constexpr std::string_view kLooNote = "(one step has been removed)";

// Forced-termination prompt for the trace's own model: problem, prefix, the
// end-of-thinking delimiter, then the answer stem the model must continue.
// The leave-one-out variant prepends the removal note.
inline std::string build_self_prompt(const Problem& problem, const std::string& prefix_text,
                                     std::string_view end_of_thinking, bool loo_note = false) {
  if (problem.statement.empty()) throw EmptyProblem(problem.id);
  if (prefix_text.empty()) throw EmptyPrefix(problem.id);
  std::string out;
  if (loo_note) {
    out += kLooNote;
    out += '\n';
  }
  out += problem.statement;
  out += '\n';
  out += prefix_text;
  out += '\n';
  out += end_of_thinking;
  out += '\n';
  out += kAnswerStem;
  return out;
}

// Prompt for the fixed external judge, which sees only the problem and the
// partial reasoning and must answer in \boxed{} form.
inline std::string build_external_prompt(const Problem& problem, const std::string& prefix_text,
                                         bool loo_note = false) {
  if (problem.statement.empty()) throw EmptyProblem(problem.id);
  if (prefix_text.empty()) throw EmptyPrefix(problem.id);
  std::string out;
  if (loo_note) {
    out += kLooNote;
    out += '\n';
  }
  out +=
      "You are evaluating a partial mathematical reasoning trace. Based ONLY on the "
      "reasoning provided below, determine the final answer to the problem.\n\n";
  out += "Problem: ";
  out += problem.statement;
  out += '\n';
  out += "Partial reasoning: ";
  out += prefix_text;
  out += "\n\n";
  out += "Output ONLY the final answer in \\boxed{} format.";
  return out;
}

// Pulls the answer out of a forced completion. Self-judge completions
// continue the "\boxed{" stem, so the answer runs to the first closing brace
// not opened within the completion itself; external-judge completions carry a
// full \boxed{...} span, whose first occurrence wins. Escaped braces ("\}")
// never close. Unparseable completions yield "" (which verifies false).
inline std::string extract_boxed_answer(std::string_view completion) {
  const auto scan_to_close = [](std::string_view s, size_t from) -> std::optional<size_t> {
    int depth = 0;
    for (size_t i = from; i < s.size(); ++i) {
      const char c = s[i];
      if (c == '\\') {
        ++i;
        continue;
      }
      if (c == '{') {
        ++depth;
      } else if (c == '}') {
        if (depth == 0) return i;
        --depth;
      }
    }
    return std::nullopt;
  };

  const size_t box = completion.find("\\boxed{");
  if (box != std::string_view::npos) {
    const size_t start = box + 7;
    if (auto close = scan_to_close(completion, start)) {
      return std::string(completion.substr(start, *close - start));
    }
    return "";
  }
  if (auto close = scan_to_close(completion, 0)) {
    return std::string(completion.substr(0, *close));
  }
  return "";
}

}  // namespace overthink
