#pragma once

#include <atomic>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "overthink/jsonl.hpp"

namespace overthink {

struct DatasetError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Benchmark { Gsm8kStyle, Math500Style, Custom };

inline std::string to_string(Benchmark b) {
  switch (b) {
    case Benchmark::Gsm8kStyle: return "gsm8k-style";
    case Benchmark::Math500Style: return "math500-style";
    default: return "custom";
  }
}

inline Benchmark benchmark_from_string(std::string_view s) {
  if (s == "gsm8k-style") return Benchmark::Gsm8kStyle;
  if (s == "math500-style") return Benchmark::Math500Style;
  if (s == "custom") return Benchmark::Custom;
  throw DatasetError("unknown benchmark tag: " + std::string(s));
}

// One benchmark problem. gold_answer is stored pre-normalized at ingestion so
// verification is a normalize-candidate-and-compare.
struct Problem {
  std::string id;
  std::string statement;
  std::string gold_answer;
  Benchmark benchmark = Benchmark::Custom;
  std::optional<int> difficulty_level;  // 1..5 when present
  std::optional<std::string> subject;
};

// One sampled reasoning trace (thinking text only, delimiters stripped).
// correct is always the verifier's output, never hand-set.
struct RawTrace {
  std::string problem_id;
  int sample_index = 0;
  std::string raw_text;
  std::string final_answer;
  bool correct = false;
  int total_words = 0;
};

struct Step {
  int index = 1;  // 1-based, contiguous within a trace
  std::string text;
  int word_count = 0;
};

// A trace split into steps. separators has n_steps()+1 entries: leading
// whitespace, the inter-step whitespace, and trailing whitespace, so that
// separators[0] + steps[0].text + separators[1] + ... reproduces raw_text
// byte for byte.
struct SegmentedTrace {
  RawTrace trace;
  std::vector<Step> steps;
  std::vector<std::string> separators;

  int n_steps() const { return static_cast<int>(steps.size()); }
};

// ---------------------------------------------------------------------------
// Word counting: a word is a maximal whitespace-delimited token.
// ---------------------------------------------------------------------------

inline int word_count(std::string_view text) {
  int n = 0;
  bool in_word = false;
  for (unsigned char c : text) {
    const bool ws = std::isspace(c) != 0;
    if (!ws && !in_word) ++n;
    in_word = !ws;
  }
  return n;
}

// ---------------------------------------------------------------------------
// Answer normalization
// ---------------------------------------------------------------------------

namespace detail {

inline std::string_view trim_view(std::string_view s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

struct Rational {
  long long num = 0;
  long long den = 1;  // > 0, reduced
};

inline bool mul_ll(long long a, long long b, long long& out) {
  return !__builtin_mul_overflow(a, b, &out);
}

// Parses an unsigned digit run, allowing ','-grouped digits ("1,000").
// Returns false on overflow or if nothing was consumed.
inline bool parse_digits(std::string_view s, size_t& pos, long long& out) {
  long long v = 0;
  bool any = false;
  while (pos < s.size()) {
    const char c = s[pos];
    if (c >= '0' && c <= '9') {
      if (!mul_ll(v, 10, v) || __builtin_add_overflow(v, c - '0', &v)) return false;
      any = true;
      ++pos;
    } else if (c == ',' && any && pos + 1 < s.size() && s[pos + 1] >= '0' && s[pos + 1] <= '9') {
      ++pos;  // thousands separator between digits
    } else {
      break;
    }
  }
  out = v;
  return any;
}

inline Rational reduce(long long num, long long den) {
  if (den < 0) {
    num = -num;
    den = -den;
  }
  const long long g = std::gcd(num < 0 ? -num : num, den);
  if (g > 1) {
    num /= g;
    den /= g;
  }
  if (num == 0) den = 1;
  return {num, den};
}

// Accepts integers ("12", "1,000"), decimals ("0.5", ".5", "5."), slash
// fractions ("3/4"), and \frac{a}{b} / \dfrac / \tfrac with integer parts,
// all with an optional leading sign. Anything else (including overflow)
// yields nullopt and the answer is kept as text.
inline std::optional<Rational> parse_rational(std::string_view raw) {
  std::string_view s = trim_view(raw);
  if (s.empty()) return std::nullopt;

  size_t pos = 0;
  long long sign = 1;
  if (s[pos] == '+' || s[pos] == '-') {
    if (s[pos] == '-') sign = -1;
    ++pos;
  }

  // \frac{a}{b} form
  if (pos < s.size() && s[pos] == '\\') {
    for (std::string_view f : {"\\frac", "\\dfrac", "\\tfrac"}) {
      if (s.substr(pos, f.size()) == f) {
        std::string_view rest = s.substr(pos + f.size());
        size_t p = 0;
        if (p >= rest.size() || rest[p] != '{') return std::nullopt;
        ++p;
        long long a = 0;
        long long asign = 1;
        if (p < rest.size() && (rest[p] == '+' || rest[p] == '-')) {
          if (rest[p] == '-') asign = -1;
          ++p;
        }
        if (!parse_digits(rest, p, a)) return std::nullopt;
        if (p >= rest.size() || rest[p] != '}') return std::nullopt;
        ++p;
        if (p >= rest.size() || rest[p] != '{') return std::nullopt;
        ++p;
        long long b = 0;
        if (!parse_digits(rest, p, b)) return std::nullopt;
        if (p >= rest.size() || rest[p] != '}') return std::nullopt;
        ++p;
        if (p != rest.size() || b == 0) return std::nullopt;
        return reduce(sign * asign * a, b);
      }
    }
    return std::nullopt;
  }

  long long int_part = 0;
  bool have_int = false;
  if (pos < s.size() && s[pos] != '.') {
    have_int = parse_digits(s, pos, int_part);
    if (!have_int) return std::nullopt;
  }

  if (pos < s.size() && s[pos] == '/') {
    if (!have_int) return std::nullopt;
    ++pos;
    long long den = 0;
    if (!parse_digits(s, pos, den) || pos != s.size() || den == 0) return std::nullopt;
    return reduce(sign * int_part, den);
  }

  if (pos < s.size() && s[pos] == '.') {
    ++pos;
    long long frac = 0;
    int ndigits = 0;
    while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') {
      if (ndigits >= 18) return std::nullopt;
      frac = frac * 10 + (s[pos] - '0');
      ++ndigits;
      ++pos;
    }
    if (!have_int && ndigits == 0) return std::nullopt;
    if (pos != s.size()) return std::nullopt;
    long long scale = 1;
    for (int i = 0; i < ndigits; ++i) scale *= 10;
    long long scaled_int = 0;
    if (!mul_ll(int_part, scale, scaled_int)) return std::nullopt;
    long long num = 0;
    if (__builtin_add_overflow(scaled_int, frac, &num)) return std::nullopt;
    return reduce(sign * num, scale);
  }

  if (pos != s.size() || !have_int) return std::nullopt;
  return reduce(sign * int_part, 1);
}

inline std::string rational_to_string(const Rational& r) {
  if (r.den == 1) return std::to_string(r.num);
  return std::to_string(r.num) + "/" + std::to_string(r.den);
}

// Strips one \boxed{...} wrapper if it spans the entire string.
inline std::string strip_boxed(const std::string& s) {
  constexpr std::string_view kBoxed = "\\boxed{";
  if (s.size() < kBoxed.size() + 1 || s.compare(0, kBoxed.size(), kBoxed) != 0) return s;
  int depth = 0;
  for (size_t i = kBoxed.size(); i < s.size(); ++i) {
    const char c = s[i];
    if (c == '\\') {
      ++i;  // escaped char
      continue;
    }
    if (c == '{') {
      ++depth;
    } else if (c == '}') {
      if (depth == 0) {
        if (i + 1 != s.size()) return s;  // wrapper must span the whole string
        return s.substr(kBoxed.size(), i - kBoxed.size());
      }
      --depth;
    }
  }
  return s;
}

}  // namespace detail

// Count of verify() calls that failed while either side still contained an
// unparsed LaTeX command; surfaced in reports instead of guessing at broader
// symbolic equivalence.
inline std::atomic<uint64_t>& unparsed_latex_flags() {
  static std::atomic<uint64_t> count{0};
  return count;
}

// Deterministic canonical form: whitespace/trailing periods stripped, an
// outermost \boxed{} wrapper removed, inline-math dollar signs dropped, and
// parseable rationals/decimals reduced to a canonical numeric string.
// Cleanup runs to a fixpoint so the function is idempotent.
inline std::string normalize_answer(std::string_view raw) {
  std::string s(detail::trim_view(raw));
  for (;;) {
    std::string before = s;
    while (!s.empty() && s.back() == '.') s.pop_back();
    s = detail::strip_boxed(s);
    std::erase(s, '$');
    s = std::string(detail::trim_view(s));
    if (s == before) break;
  }
  if (auto r = detail::parse_rational(s)) return detail::rational_to_string(*r);
  return s;
}

inline bool verify(std::string_view candidate, std::string_view gold) {
  const std::string c = normalize_answer(candidate);
  const std::string g = normalize_answer(gold);
  if (c == g) return true;
  if (c.find('\\') != std::string::npos || g.find('\\') != std::string::npos) {
    unparsed_latex_flags().fetch_add(1, std::memory_order_relaxed);
  }
  return false;
}

// ---------------------------------------------------------------------------
// Dataset ingestion
// ---------------------------------------------------------------------------

using ProblemIndex = std::map<std::string, Problem>;

// Reads {id, problem, answer, level?, subject?} JSONL. Duplicate ids are
// rejected; gold answers are normalized here, once.
inline std::vector<Problem> load_problems(const std::filesystem::path& path,
                                          Benchmark benchmark = Benchmark::Custom) {
  std::vector<Problem> out;
  std::set<std::string> seen;
  for (const auto& j : read_jsonl(path)) {
    Problem p;
    try {
      p.id = j.at("id").get<std::string>();
      p.statement = j.at("problem").get<std::string>();
      p.gold_answer = normalize_answer(j.at("answer").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
      throw DatasetError(path.string() + ": bad problem record: " + e.what());
    }
    if (p.id.empty()) throw DatasetError(path.string() + ": empty problem id");
    if (!seen.insert(p.id).second) throw DatasetError(path.string() + ": duplicate problem id " + p.id);
    p.benchmark = benchmark;
    if (j.contains("level") && !j["level"].is_null()) {
      const int lvl = j["level"].get<int>();
      if (lvl < 1 || lvl > 5) throw DatasetError(path.string() + ": difficulty level out of range for " + p.id);
      p.difficulty_level = lvl;
    }
    if (j.contains("subject") && !j["subject"].is_null()) p.subject = j["subject"].get<std::string>();
    out.push_back(std::move(p));
  }
  return out;
}

inline ProblemIndex index_problems(const std::vector<Problem>& problems) {
  ProblemIndex idx;
  for (const auto& p : problems) idx.emplace(p.id, p);
  return idx;
}

// Reads {problem_id, sample_index, text, final_answer} JSONL. The correct
// flag and word totals are computed here; traces are returned sorted by
// (problem_id, sample_index) so downstream stages are order-independent.
inline std::vector<RawTrace> load_traces(const std::filesystem::path& path, const ProblemIndex& problems) {
  std::vector<RawTrace> out;
  std::set<std::pair<std::string, int>> seen;
  for (const auto& j : read_jsonl(path)) {
    RawTrace t;
    try {
      t.problem_id = j.at("problem_id").get<std::string>();
      t.sample_index = j.at("sample_index").get<int>();
      t.raw_text = j.at("text").get<std::string>();
      t.final_answer = j.at("final_answer").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw DatasetError(path.string() + ": bad trace record: " + e.what());
    }
    const auto it = problems.find(t.problem_id);
    if (it == problems.end()) throw DatasetError(path.string() + ": trace references unknown problem " + t.problem_id);
    if (t.sample_index < 0) throw DatasetError(path.string() + ": negative sample_index for " + t.problem_id);
    if (!seen.insert({t.problem_id, t.sample_index}).second) {
      throw DatasetError(path.string() + ": duplicate trace " + t.problem_id + "#" + std::to_string(t.sample_index));
    }
    t.correct = verify(t.final_answer, it->second.gold_answer);
    t.total_words = word_count(t.raw_text);
    out.push_back(std::move(t));
  }
  std::sort(out.begin(), out.end(), [](const RawTrace& a, const RawTrace& b) {
    return std::tie(a.problem_id, a.sample_index) < std::tie(b.problem_id, b.sample_index);
  });
  return out;
}

}  // namespace overthink
