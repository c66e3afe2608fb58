#include <catch2/catch_amalgamated.hpp>

#include <limits>

#include "helpers.hpp"
#include "overthink/segmenter.hpp"

using namespace overthink;

namespace {

RawTrace trace_of(std::string text) { return testutil::make_trace("p", 0, std::move(text), "1", true); }

// Synthetic corpus mixing paragraphs, marker sentences, and short fragments.
std::vector<RawTrace> marker_corpus(int n_traces, uint64_t seed) {
  Rng rng(seed);
  std::vector<RawTrace> out;
  const auto& markers = default_markers();
  for (int t = 0; t < n_traces; ++t) {
    std::string text;
    const int paragraphs = 1 + static_cast<int>(rng.below(4));
    for (int p = 0; p < paragraphs; ++p) {
      if (p) text += rng.below(2) ? "\n\n" : "\n \n\n";
      const int sentences = 1 + static_cast<int>(rng.below(4));
      for (int s = 0; s < sentences; ++s) {
        if (s) text += rng.below(3) == 0 ? "  " : " ";
        if (rng.below(2)) {
          text += markers[rng.below(markers.size())];
          text += rng.below(2) ? ", " : " ";
        }
        text += testutil::words(rng, 2 + static_cast<int>(rng.below(26)));
        text += '.';
      }
    }
    out.push_back(testutil::make_trace("p" + std::to_string(t), 0, text, "1", true));
  }
  return out;
}

}  // namespace

TEST_CASE("paragraph rule: two long paragraphs give two steps") {
  Rng rng(1);
  const std::string a = testutil::words(rng, 14);
  const std::string b = testutil::words(rng, 15);
  const auto st = segment(trace_of(a + "\n\n" + b));
  REQUIRE(st.n_steps() == 2);
  CHECK(st.steps[0].text == a);
  CHECK(st.steps[1].text == b);
  CHECK(st.separators[1] == "\n\n");
}

TEST_CASE("marker rule: cut before a marker-initial sentence") {
  Rng rng(2);
  const std::string first = testutil::words(rng, 13) + ".";
  const std::string second = "Wait, " + testutil::words(rng, 12) + ".";
  const auto st = segment(trace_of(first + " " + second));
  REQUIRE(st.n_steps() == 2);
  CHECK(st.steps[0].text == first);
  CHECK(st.steps[1].text == second);
}

TEST_CASE("merge rule: short tail merges into the previous step") {
  Rng rng(3);
  const std::string long_para = testutil::words(rng, 20);
  const std::string short_para = testutil::words(rng, 5);
  const auto st = segment(trace_of(long_para + "\n\n" + short_para));
  REQUIRE(st.n_steps() == 1);
  CHECK(st.steps[0].text == long_para + "\n\n" + short_para);
}

TEST_CASE("merge rule: short first segment merges forward") {
  Rng rng(4);
  const std::string short_para = testutil::words(rng, 4);
  const std::string long_para = testutil::words(rng, 18);
  const auto st = segment(trace_of(short_para + "\n\n" + long_para));
  REQUIRE(st.n_steps() == 1);
  CHECK(st.steps[0].text == short_para + "\n\n" + long_para);
}

TEST_CASE("multiword markers cut like single-word ones") {
  Rng rng(9);
  const std::string first = testutil::words(rng, 13) + ".";
  SECTION("with a comma") {
    const std::string second = "Let me, " + testutil::words(rng, 12) + ".";
    const auto st = segment(trace_of(first + " " + second));
    REQUIRE(st.n_steps() == 2);
    CHECK(st.steps[1].text == second);
  }
  SECTION("without a comma") {
    const std::string second = "To verify " + testutil::words(rng, 12) + ".";
    CHECK(segment(trace_of(first + " " + second)).n_steps() == 2);
  }
  SECTION("prefix of a longer word does not match") {
    const std::string second = "To verifying " + testutil::words(rng, 12) + ".";
    CHECK(segment(trace_of(first + " " + second)).n_steps() == 1);
  }
}

TEST_CASE("marker must sit at a word boundary") {
  Rng rng(5);
  const std::string first = testutil::words(rng, 13) + ".";
  const auto st = segment(trace_of(first + " Nowhere " + testutil::words(rng, 12) + "."));
  CHECK(st.n_steps() == 1);  // "Nowhere" does not match marker "Now"
}

TEST_CASE("marker matching respects the case-sensitivity flag") {
  Rng rng(6);
  const std::string first = testutil::words(rng, 13) + ".";
  const std::string second = "wait, " + testutil::words(rng, 12) + ".";
  SegmenterConfig cfg;
  CHECK(segment(trace_of(first + " " + second), cfg).n_steps() == 1);
  cfg.case_sensitive = false;
  CHECK(segment(trace_of(first + " " + second), cfg).n_steps() == 2);
}

TEST_CASE("empty trace is rejected") {
  CHECK_THROWS_AS(segment(trace_of("   \n\n  ")), EmptyTrace);
}

TEST_CASE("whole short trace stays a single short step") {
  const auto st = segment(trace_of("just four small words"));
  REQUIRE(st.n_steps() == 1);
  CHECK(st.steps[0].word_count == 4);
}

TEST_CASE("segmentation invariants on a synthetic corpus") {
  const auto corpus = marker_corpus(50, 99);
  for (const auto& raw : corpus) {
    const auto st = segment(raw);

    // reconstruction is byte-exact
    CHECK(reconstruct(st) == raw.raw_text);

    // word counts add up
    int words = 0;
    for (const auto& s : st.steps) {
      CHECK(s.word_count >= 1);
      words += s.word_count;
    }
    CHECK(words == raw.total_words);

    // contiguous 1-based indices
    for (int i = 0; i < st.n_steps(); ++i) CHECK(st.steps[static_cast<size_t>(i)].index == i + 1);

    // every step except at most one is at or above the merge threshold
    int short_steps = 0;
    for (const auto& s : st.steps) {
      if (s.word_count < 12) ++short_steps;
    }
    if (st.n_steps() > 1) CHECK(short_steps == 0);

    // determinism
    const auto again = segment(raw);
    REQUIRE(again.n_steps() == st.n_steps());
    for (int i = 0; i < st.n_steps(); ++i) {
      CHECK(again.steps[static_cast<size_t>(i)].text == st.steps[static_cast<size_t>(i)].text);
    }
  }
}

TEST_CASE("increasing the merge threshold never increases the step count") {
  const auto corpus = marker_corpus(30, 123);
  for (const auto& raw : corpus) {
    int prev_n = std::numeric_limits<int>::max();
    for (int threshold : {1, 3, 6, 12, 18, 24, 40}) {
      SegmenterConfig cfg;
      cfg.merge_threshold = threshold;
      const int n = segment(raw, cfg).n_steps();
      CHECK(n <= prev_n);
      prev_n = n;
    }
  }
}

TEST_CASE("assemble_steps keeps original separators for contiguous runs") {
  Rng rng(8);
  const std::string a = testutil::words(rng, 14);
  const std::string b = testutil::words(rng, 15);
  const std::string c = testutil::words(rng, 16);
  const auto st = segment(trace_of(a + "\n\n" + b + "\n\n" + c));
  REQUIRE(st.n_steps() == 3);
  CHECK(assemble_steps(st, {1, 2}) == a + "\n\n" + b);
  CHECK(assemble_steps(st, {1, 3}) == a + "\n" + c);
  CHECK(assemble_steps(st, {2}) == b);
}
