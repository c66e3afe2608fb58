#pragma once

#include <cctype>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "overthink/trace.hpp"

namespace overthink {

struct EmptyTrace : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline const std::vector<std::string>& default_markers() {
  static const std::vector<std::string> markers = {
      "So",      "Therefore", "Wait",   "Actually", "Let me", "Hmm",   "Alternatively",
      "However", "To verify", "Going back", "Now",  "First",  "Second", "Finally"};
  return markers;
}

struct SegmenterConfig {
  int merge_threshold = 12;  // segments shorter than this merge into the previous one
  std::vector<std::string> markers = default_markers();
  bool case_sensitive = true;  // markers are capitalized sentence-initial words
};

namespace detail {

// True if text at offset begins with the marker phrase followed by a word
// boundary, so "Now," and "Now" match the marker "Now" but "Nowhere" does not.
inline bool marker_at(std::string_view text, size_t off, std::string_view marker, bool case_sensitive) {
  if (off + marker.size() > text.size()) return false;
  for (size_t i = 0; i < marker.size(); ++i) {
    char a = text[off + i];
    char b = marker[i];
    if (!case_sensitive) {
      a = static_cast<char>(std::tolower(static_cast<unsigned char>(a)));
      b = static_cast<char>(std::tolower(static_cast<unsigned char>(b)));
    }
    if (a != b) return false;
  }
  const size_t end = off + marker.size();
  if (end == text.size()) return true;
  return std::isalnum(static_cast<unsigned char>(text[end])) == 0;
}

inline bool starts_with_marker(std::string_view text, size_t off, const SegmenterConfig& cfg) {
  for (const auto& m : cfg.markers) {
    if (marker_at(text, off, m, cfg.case_sensitive)) return true;
  }
  return false;
}

struct Piece {
  std::string text;
  std::string sep_before;  // whitespace between the previous piece and this one
};

// Sentence starts inside a paragraph: offset 0 plus every position after a
// run of '.', '!' or '?' followed by whitespace.
inline std::vector<size_t> sentence_starts(std::string_view para) {
  std::vector<size_t> starts = {0};
  size_t i = 0;
  while (i < para.size()) {
    const char c = para[i];
    if (c == '.' || c == '!' || c == '?') {
      size_t j = i + 1;
      while (j < para.size() && (para[j] == '.' || para[j] == '!' || para[j] == '?')) ++j;
      if (j < para.size() && std::isspace(static_cast<unsigned char>(para[j]))) {
        size_t k = j;
        while (k < para.size() && std::isspace(static_cast<unsigned char>(para[k]))) ++k;
        if (k < para.size()) starts.push_back(k);
        i = k;
        continue;
      }
      i = j;
      continue;
    }
    ++i;
  }
  return starts;
}

}  // namespace detail

// Splits raw text into steps by the three-rule procedure: (i) cut on
// blank-line paragraph boundaries, (ii) cut before any sentence that opens
// with a reasoning discourse marker, (iii) merge segments shorter than the
// threshold into the previous segment, left to right (a short first segment
// merges forward instead). The exact inter-step whitespace is preserved in
// separators so reconstruction is byte-exact.
inline SegmentedTrace segment(const RawTrace& raw, const SegmenterConfig& cfg = {}) {
  if (cfg.merge_threshold < 1) throw std::invalid_argument("merge_threshold must be >= 1");
  if (cfg.markers.empty()) throw std::invalid_argument("marker list must be non-empty");
  const std::string& text = raw.raw_text;
  if (word_count(text) == 0) throw EmptyTrace("trace has no words: " + raw.problem_id);

  // Pass 1: paragraphs. A boundary is a maximal whitespace run containing at
  // least two newlines; outer whitespace becomes the leading/trailing seps.
  std::vector<detail::Piece> pieces;
  std::string leading, trailing;
  {
    size_t i = 0;
    std::string pending_sep;
    while (i < text.size()) {
      if (std::isspace(static_cast<unsigned char>(text[i]))) {
        size_t j = i;
        while (j < text.size() && std::isspace(static_cast<unsigned char>(text[j]))) ++j;
        pending_sep.append(text, i, j - i);
        i = j;
        continue;
      }
      size_t j = i;
      std::string body;
      while (j < text.size()) {
        if (!std::isspace(static_cast<unsigned char>(text[j]))) {
          body.push_back(text[j]);
          ++j;
          continue;
        }
        size_t k = j;
        int newlines = 0;
        while (k < text.size() && std::isspace(static_cast<unsigned char>(text[k]))) {
          if (text[k] == '\n') ++newlines;
          ++k;
        }
        if (newlines >= 2 || k == text.size()) break;  // paragraph ends here
        body.append(text, j, k - j);
        j = k;
      }
      if (pieces.empty()) {
        leading = pending_sep;
        pieces.push_back({std::move(body), ""});
      } else {
        pieces.push_back({std::move(body), pending_sep});
      }
      pending_sep.clear();
      i = j;
    }
    trailing = pending_sep;
  }

  // Pass 2: within each paragraph, cut before marker-initial sentences.
  std::vector<detail::Piece> cut;
  for (auto& piece : pieces) {
    const std::string& para = piece.text;
    std::vector<size_t> cuts;
    for (size_t start : detail::sentence_starts(para)) {
      if (start == 0) continue;
      if (detail::starts_with_marker(para, start, cfg)) cuts.push_back(start);
    }
    size_t prev = 0;
    std::string sep = piece.sep_before;
    for (size_t c : cuts) {
      // the whitespace just before the sentence start becomes the separator
      size_t text_end = c;
      while (text_end > prev && std::isspace(static_cast<unsigned char>(para[text_end - 1]))) --text_end;
      cut.push_back({para.substr(prev, text_end - prev), sep});
      sep = para.substr(text_end, c - text_end);
      prev = c;
    }
    cut.push_back({para.substr(prev), sep});
  }

  // Pass 3: merge short segments.
  std::vector<detail::Piece> merged;
  for (auto& p : cut) {
    if (!merged.empty() && word_count(p.text) < cfg.merge_threshold) {
      merged.back().text += p.sep_before + p.text;
    } else {
      merged.push_back(std::move(p));
    }
  }
  if (merged.size() >= 2 && word_count(merged.front().text) < cfg.merge_threshold) {
    merged[1].text = merged[0].text + merged[1].sep_before + merged[1].text;
    merged[1].sep_before = merged[0].sep_before;
    merged.erase(merged.begin());
  }

  SegmentedTrace st;
  st.trace = raw;
  st.separators.push_back(leading);
  for (size_t i = 0; i < merged.size(); ++i) {
    Step s;
    s.index = static_cast<int>(i) + 1;
    s.text = std::move(merged[i].text);
    s.word_count = word_count(s.text);
    st.steps.push_back(std::move(s));
    if (i + 1 < merged.size()) st.separators.push_back(merged[i + 1].sep_before);
  }
  st.separators.push_back(trailing);
  return st;
}

// Reassembles the exact original text.
inline std::string reconstruct(const SegmentedTrace& st) {
  std::string out = st.separators.front();
  for (size_t i = 0; i < st.steps.size(); ++i) {
    out += st.steps[i].text;
    out += st.separators[i + 1];
  }
  return out;
}

// Joins a subset of steps (1-based indices, ascending). Steps adjacent in the
// original trace keep their recorded separator; gaps get a single newline.
inline std::string assemble_steps(const SegmentedTrace& st, const std::vector<int>& indices) {
  std::string out;
  for (size_t i = 0; i < indices.size(); ++i) {
    const int idx = indices[i];
    if (i > 0) {
      const int prev = indices[i - 1];
      if (idx == prev + 1) {
        out += st.separators[static_cast<size_t>(prev)];
      } else {
        out += '\n';
      }
    }
    out += st.steps[static_cast<size_t>(idx - 1)].text;
  }
  return out;
}

}  // namespace overthink
