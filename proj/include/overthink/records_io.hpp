#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "overthink/prober.hpp"
#include "overthink/redundancy.hpp"
#include "overthink/segmenter.hpp"

namespace overthink {

// JSONL shapes for the stage files. Field layouts are part of the external
// interface; see docs/FORMATS.md.

inline nlohmann::json to_json(const SegmentedTrace& st) {
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& s : st.steps) steps.push_back(s.text);
  nlohmann::json seps = nlohmann::json::array();
  for (const auto& s : st.separators) seps.push_back(s);
  return {{"problem_id", st.trace.problem_id},
          {"sample_index", st.trace.sample_index},
          {"steps", steps},
          {"separators", seps}};
}

// Rebuilds a SegmentedTrace from its JSONL row plus the raw-trace record it
// references (for answers, verdicts, and word totals).
inline SegmentedTrace segmented_trace_from_json(const nlohmann::json& j, const RawTrace& raw) {
  SegmentedTrace st;
  st.trace = raw;
  const auto& steps = j.at("steps");
  const auto& seps = j.at("separators");
  for (size_t i = 0; i < steps.size(); ++i) {
    Step s;
    s.index = static_cast<int>(i) + 1;
    s.text = steps[i].get<std::string>();
    s.word_count = word_count(s.text);
    st.steps.push_back(std::move(s));
  }
  for (const auto& s : seps) st.separators.push_back(s.get<std::string>());
  return st;
}

inline nlohmann::json to_json(const RedundancyRecord& r) {
  nlohmann::json j = {{"problem_id", r.problem_id}, {"sample_index", r.sample_index},
                      {"judge", to_string(r.judge)},  {"n_steps", r.n_steps},
                      {"probed_ks", r.probed_ks},     {"sub_sampled", r.sub_sampled}};
  j["k_star"] = r.k_star ? nlohmann::json(*r.k_star) : nlohmann::json(nullptr);
  j["rho_step"] = r.rho_step ? nlohmann::json(*r.rho_step) : nlohmann::json(nullptr);
  j["rho_word"] = r.rho_word ? nlohmann::json(*r.rho_word) : nlohmann::json(nullptr);
  return j;
}

inline RedundancyRecord redundancy_record_from_json(const nlohmann::json& j) {
  RedundancyRecord r;
  r.problem_id = j.at("problem_id").get<std::string>();
  r.sample_index = j.at("sample_index").get<int>();
  r.judge = judge_from_string(j.at("judge").get<std::string>());
  r.n_steps = j.at("n_steps").get<int>();
  r.probed_ks = j.at("probed_ks").get<std::vector<int>>();
  r.sub_sampled = j.at("sub_sampled").get<bool>();
  if (!j.at("k_star").is_null()) r.k_star = j["k_star"].get<int>();
  if (!j.at("rho_step").is_null()) r.rho_step = j["rho_step"].get<double>();
  if (!j.at("rho_word").is_null()) r.rho_word = j["rho_word"].get<double>();
  return r;
}

inline nlohmann::json to_json(const LooRecord& r) {
  std::vector<bool> flags(r.critical_flags.begin(), r.critical_flags.end());
  return {{"problem_id", r.problem_id},
          {"sample_index", r.sample_index},
          {"judge", to_string(r.judge)},
          {"critical_flags", flags}};
}

inline LooRecord loo_record_from_json(const nlohmann::json& j) {
  LooRecord r;
  r.problem_id = j.at("problem_id").get<std::string>();
  r.sample_index = j.at("sample_index").get<int>();
  r.judge = judge_from_string(j.at("judge").get<std::string>());
  r.critical_flags = j.at("critical_flags").get<std::vector<bool>>();
  return r;
}

inline nlohmann::json to_json(const PrefixAblationRecord& r) {
  return {{"problem_id", r.problem_id}, {"sample_index", r.sample_index}, {"judge", to_string(r.judge)},
          {"fractions", r.fractions},   {"first", r.first},               {"last", r.last},
          {"middle", r.middle},         {"random", r.random}};
}

inline PrefixAblationRecord prefix_record_from_json(const nlohmann::json& j) {
  PrefixAblationRecord r;
  r.problem_id = j.at("problem_id").get<std::string>();
  r.sample_index = j.at("sample_index").get<int>();
  r.judge = judge_from_string(j.at("judge").get<std::string>());
  r.fractions = j.at("fractions").get<std::vector<double>>();
  r.first = j.at("first").get<std::vector<double>>();
  r.last = j.at("last").get<std::vector<double>>();
  r.middle = j.at("middle").get<std::vector<double>>();
  r.random = j.at("random").get<std::vector<double>>();
  return r;
}

}  // namespace overthink
