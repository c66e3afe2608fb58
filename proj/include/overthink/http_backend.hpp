#pragma once

// Kept out of backend.hpp so that offline builds do not pay for httplib.

#include <cstdlib>
#include <memory>
#include <string>

#include <httplib.h>
#include <json.hpp>

#include "overthink/backend.hpp"

namespace overthink {

// OpenAI-compatible chat-completions client. One user message per probe, no
// streaming. 5xx and transport failures are transient (retried by the
// orchestrator); 4xx aborts the run since retrying cannot help.
class HttpChatBackend : public Backend {
 public:
  explicit HttpChatBackend(BackendSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
  }

  std::string complete(const ProbeKey&, const std::string& prompt) override {
    nlohmann::json body = {
        {"model", spec_.model_name},
        {"messages", nlohmann::json::array({nlohmann::json{{"role", "user"}, {"content", prompt}}})},
        {"temperature", spec_.temperature},
        {"max_tokens", spec_.max_tokens},
    };

    httplib::Client client(spec_.endpoint);
    client.set_connection_timeout(30, 0);
    client.set_read_timeout(120, 0);
    httplib::Headers headers;
    if (const char* key = std::getenv(spec_.api_key_env.c_str()); key && *key) {
      headers.emplace("Authorization", std::string("Bearer ") + key);
    }

    auto res = client.Post("/v1/chat/completions", headers, body.dump(), "application/json");
    if (!res) throw TransientBackendError("connection to " + spec_.endpoint + " failed");
    if (res->status >= 500) throw TransientBackendError("HTTP " + std::to_string(res->status));
    if (res->status != 200) {
      throw BackendError("HTTP " + std::to_string(res->status) + ": " + res->body);
    }
    try {
      const auto j = nlohmann::json::parse(res->body);
      return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw BackendError(std::string("malformed chat-completions response: ") + e.what());
    }
  }

 private:
  BackendSpec spec_;
};

}  // namespace overthink
