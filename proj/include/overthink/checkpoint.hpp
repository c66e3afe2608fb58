#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

namespace overthink {

struct UnreadableCheckpoint : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Identity of one forced-termination query. protocol carries the variant tag
// ("truncate", "loo", "prefix-first", ..., "earlystop", "truncate@t6" for
// robustness sweeps); index is the truncation k, the ablated step, or the
// prefix fraction in percent.
struct ProbeKey {
  std::string problem_id;
  int sample_index = 0;
  std::string protocol;
  std::string judge;
  int index = 0;

  friend bool operator<(const ProbeKey& a, const ProbeKey& b) {
    return std::tie(a.problem_id, a.sample_index, a.protocol, a.judge, a.index) <
           std::tie(b.problem_id, b.sample_index, b.protocol, b.judge, b.index);
  }
  friend bool operator==(const ProbeKey& a, const ProbeKey& b) {
    return std::tie(a.problem_id, a.sample_index, a.protocol, a.judge, a.index) ==
           std::tie(b.problem_id, b.sample_index, b.protocol, b.judge, b.index);
  }
};

struct ProbeRecord {
  ProbeKey key;
  std::string prompt_hash;
  std::string raw_completion;
  std::string extracted_answer;
  bool correct = false;
  bool failed = false;  // retries exhausted; counted as incorrect downstream
  std::string timestamp;
};

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline nlohmann::json to_json(const ProbeRecord& r) {
  return {{"problem_id", r.key.problem_id}, {"sample_index", r.key.sample_index},
          {"protocol", r.key.protocol},     {"judge", r.key.judge},
          {"index", r.key.index},           {"prompt_hash", r.prompt_hash},
          {"completion", r.raw_completion}, {"answer", r.extracted_answer},
          {"correct", r.correct},           {"failed", r.failed},
          {"ts", r.timestamp}};
}

inline ProbeRecord probe_record_from_json(const nlohmann::json& j) {
  ProbeRecord r;
  r.key.problem_id = j.at("problem_id").get<std::string>();
  r.key.sample_index = j.at("sample_index").get<int>();
  r.key.protocol = j.at("protocol").get<std::string>();
  r.key.judge = j.at("judge").get<std::string>();
  r.key.index = j.at("index").get<int>();
  r.prompt_hash = j.at("prompt_hash").get<std::string>();
  r.raw_completion = j.at("completion").get<std::string>();
  r.extracted_answer = j.at("answer").get<std::string>();
  r.correct = j.at("correct").get<bool>();
  r.failed = j.at("failed").get<bool>();
  r.timestamp = j.at("ts").get<std::string>();
  return r;
}

// Append-only JSONL record store. On open, all well-formed records are
// loaded; a malformed *final* line is a torn write from a killed run and is
// truncated away with a warning, anything malformed earlier is corruption.
// append() is serialized and flushes per line so a crash loses at most the
// line in flight.
class Checkpoint {
 public:
  explicit Checkpoint(std::filesystem::path path) : path_(std::move(path)) {
    load();
    out_.open(path_, std::ios::app);
    if (!out_) throw UnreadableCheckpoint("cannot open " + path_.string() + " for append");
  }

  bool contains(const ProbeKey& k) const {
    std::lock_guard lock(mu_);
    return by_key_.count(k) > 0;
  }

  // nullptr when absent; pointer stays valid until the next append.
  const ProbeRecord* find(const ProbeKey& k) const {
    std::lock_guard lock(mu_);
    const auto it = by_key_.find(k);
    return it == by_key_.end() ? nullptr : &it->second;
  }

  void append(const ProbeRecord& r) {
    std::lock_guard lock(mu_);
    if (by_key_.count(r.key)) return;  // idempotent
    out_ << to_json(r).dump() << '\n';
    out_.flush();
    by_key_.emplace(r.key, r);
  }

  std::set<ProbeKey> keys() const {
    std::lock_guard lock(mu_);
    std::set<ProbeKey> out;
    for (const auto& [k, _] : by_key_) out.insert(k);
    return out;
  }

  // Records in key order, independent of completion order.
  std::vector<ProbeRecord> records() const {
    std::lock_guard lock(mu_);
    std::vector<ProbeRecord> out;
    out.reserve(by_key_.size());
    for (const auto& [_, r] : by_key_) out.push_back(r);
    return out;
  }

  size_t size() const {
    std::lock_guard lock(mu_);
    return by_key_.size();
  }

  const std::filesystem::path& path() const { return path_; }

 private:
  void load() {
    std::ifstream in(path_, std::ios::binary);
    if (!in) {
      // creatable-on-first-use: ensure parent exists
      if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
      return;
    }
    std::string line;
    std::uintmax_t good_bytes = 0;
    size_t lineno = 0;
    bool torn = false;
    while (std::getline(in, line)) {
      ++lineno;
      const bool had_newline = !in.eof();
      if (line.find_first_not_of(" \t\r") == std::string::npos) {
        if (had_newline) good_bytes += line.size() + 1;
        continue;
      }
      try {
        ProbeRecord r = probe_record_from_json(nlohmann::json::parse(line));
        if (by_key_.count(r.key)) {
          throw UnreadableCheckpoint(path_.string() + ":" + std::to_string(lineno) + ": duplicate key");
        }
        ProbeKey key = r.key;
        by_key_.emplace(std::move(key), std::move(r));
        good_bytes += line.size() + (had_newline ? 1 : 0);
      } catch (const nlohmann::json::exception&) {
        std::string rest;
        if (std::getline(in, rest)) {
          throw UnreadableCheckpoint(path_.string() + ":" + std::to_string(lineno) +
                                     ": malformed record before end of file");
        }
        torn = true;
        break;
      }
    }
    in.close();
    if (torn) {
      std::fprintf(stderr, "[checkpoint] %s: truncating torn final line (line %zu)\n", path_.string().c_str(),
                   lineno);
      std::filesystem::resize_file(path_, good_bytes);
    }
  }

  std::filesystem::path path_;
  mutable std::mutex mu_;
  std::map<ProbeKey, ProbeRecord> by_key_;
  std::ofstream out_;
};

// Keys of all completed probes in a checkpoint file (used on restart to skip
// finished work).
inline std::set<ProbeKey> resume(const std::filesystem::path& path) {
  Checkpoint ck(path);
  return ck.keys();
}

}  // namespace overthink
