#pragma once

#include <atomic>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <tuple>

#include <json.hpp>

#include "overthink/checkpoint.hpp"
#include "overthink/jsonl.hpp"

namespace overthink {

struct BackendError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
// Retryable failure (connection error, HTTP 5xx, scripted flakiness).
struct TransientBackendError : BackendError {
  using BackendError::BackendError;
};
// Fixture replay had no entry for the prompt: the fixtures are stale.
struct FixtureMiss : BackendError {
  using BackendError::BackendError;
};

enum class BackendKind { HttpChat, Mock, FixtureReplay };

struct BackendSpec {
  BackendKind kind = BackendKind::Mock;
  std::string endpoint;    // http-chat: base URL, e.g. http://127.0.0.1:8080
  std::string model_name;  // http-chat
  std::string end_of_thinking = "</think>";
  int max_tokens = 64;
  double temperature = 0.0;
  std::string api_key_env = "OPENTHINK_API_KEY";  // env var *name*, read at request time
  std::string script_path;                        // mock: scripted answers
  std::string fixture_path;                       // fixture-replay: recorded completions

  void validate() const {
    if (max_tokens < 1) throw BackendError("max_tokens must be >= 1");
    if (kind == BackendKind::HttpChat && (endpoint.empty() || model_name.empty())) {
      throw BackendError("http-chat backend requires endpoint and model_name");
    }
  }
};

// 64-bit FNV-1a, hex. Identifies prompts in checkpoints and fixture files.
inline std::string prompt_hash(std::string_view prompt) {
  uint64_t h = 0xCBF29CE484222325ULL;
  for (char c : prompt) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

class Backend {
 public:
  virtual ~Backend() = default;
  // Returns the raw completion for a prompt. The key is the probe identity;
  // scripted backends answer from it, live backends ignore it.
  virtual std::string complete(const ProbeKey& key, const std::string& prompt) = 0;
};

// ---------------------------------------------------------------------------
// Mock backend: deterministic scripted answers keyed by probe identity.
// ---------------------------------------------------------------------------

// Script keys are (problem_id, sample_index, protocol, index); the scripted
// value is the answer text the "model" would box. Completions are rendered as
// stem continuations ("<answer>}.") so extraction runs the real code path.
class MockModelScript {
 public:
  using Key = std::tuple<std::string, int, std::string, int>;

  void set(const std::string& problem_id, int sample_index, const std::string& protocol, int index,
           const std::string& answer) {
    script_[{problem_id, sample_index, protocol, index}] = answer;
  }

  const std::string* find(const ProbeKey& k) const {
    const auto it = script_.find({k.problem_id, k.sample_index, k.protocol, k.index});
    return it == script_.end() ? nullptr : &it->second;
  }

  // Plants a truncation profile: correct answer iff k >= k_star.
  void plant_truncation(const std::string& problem_id, int sample_index, int n_steps, int k_star,
                        const std::string& gold, const std::string& wrong, const std::string& protocol = "truncate") {
    for (int k = 1; k <= n_steps; ++k) {
      set(problem_id, sample_index, protocol, k, k >= k_star ? gold : wrong);
    }
  }

  static MockModelScript from_json(const nlohmann::json& j) {
    MockModelScript s;
    for (const auto& [key, val] : j.items()) {
      // composite key: problem_id|sample_index|protocol|index
      const auto p1 = key.find('|');
      const auto p2 = key.find('|', p1 + 1);
      const auto p3 = key.find('|', p2 + 1);
      if (p1 == std::string::npos || p2 == std::string::npos || p3 == std::string::npos) {
        throw BackendError("bad mock script key: " + key);
      }
      s.set(key.substr(0, p1), std::stoi(key.substr(p1 + 1, p2 - p1 - 1)), key.substr(p2 + 1, p3 - p2 - 1),
            std::stoi(key.substr(p3 + 1)), val.get<std::string>());
    }
    return s;
  }

  static MockModelScript load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw BackendError("cannot open mock script " + path.string());
    nlohmann::json j;
    in >> j;
    return from_json(j);
  }

  nlohmann::json to_json() const {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [key, answer] : script_) {
      j[std::get<0>(key) + "|" + std::to_string(std::get<1>(key)) + "|" + std::get<2>(key) + "|" +
        std::to_string(std::get<3>(key))] = answer;
    }
    return j;
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::trunc);
    out << to_json().dump(2) << '\n';
  }

  size_t size() const { return script_.size(); }

 private:
  std::map<Key, std::string> script_;
};

class MockBackend : public Backend {
 public:
  explicit MockBackend(MockModelScript script) : script_(std::move(script)) {}

  std::string complete(const ProbeKey& key, const std::string&) override {
    calls_.fetch_add(1, std::memory_order_relaxed);
    const std::string* ans = script_.find(key);
    if (!ans) {
      throw BackendError("mock script has no entry for " + key.problem_id + "#" +
                         std::to_string(key.sample_index) + "/" + key.protocol + "/" + std::to_string(key.index));
    }
    return *ans + "}. Wait, that is the answer.";
  }

  uint64_t calls() const { return calls_.load(std::memory_order_relaxed); }

 private:
  MockModelScript script_;
  std::atomic<uint64_t> calls_{0};
};

// ---------------------------------------------------------------------------
// Fixture replay: completions recorded from a live run, keyed by prompt hash
// so a changed prompt template shows up as a FixtureMiss instead of silently
// replaying stale text.
// ---------------------------------------------------------------------------

class FixtureBackend : public Backend {
 public:
  explicit FixtureBackend(const std::filesystem::path& path) {
    for (const auto& j : read_jsonl(path)) {
      by_hash_[j.at("prompt_hash").get<std::string>()] = j.at("completion").get<std::string>();
    }
  }

  std::string complete(const ProbeKey&, const std::string& prompt) override {
    const auto it = by_hash_.find(prompt_hash(prompt));
    if (it == by_hash_.end()) throw FixtureMiss("no fixture for prompt hash " + prompt_hash(prompt));
    return it->second;
  }

 private:
  std::map<std::string, std::string> by_hash_;
};

// Records every completion of an inner backend into a fixture file.
class RecordingBackend : public Backend {
 public:
  RecordingBackend(std::unique_ptr<Backend> inner, const std::filesystem::path& path)
      : inner_(std::move(inner)), out_(path, std::ios::app) {
    if (!out_) throw BackendError("cannot open fixture file " + path.string());
  }

  std::string complete(const ProbeKey& key, const std::string& prompt) override {
    std::string completion = inner_->complete(key, prompt);
    std::lock_guard lock(mu_);
    out_ << nlohmann::json{{"prompt_hash", prompt_hash(prompt)}, {"completion", completion}}.dump() << '\n';
    out_.flush();
    return completion;
  }

 private:
  std::unique_ptr<Backend> inner_;
  std::mutex mu_;
  std::ofstream out_;
};

}  // namespace overthink
