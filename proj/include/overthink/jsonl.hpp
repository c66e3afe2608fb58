#pragma once

#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace overthink {

struct JsonlError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Reads a whole JSONL file. Blank lines are skipped; a malformed line is an
// error (checkpoint files, which tolerate a torn tail, use their own reader).
inline std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw JsonlError("cannot open " + path.string());
  std::vector<nlohmann::json> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::parse_error& e) {
      throw JsonlError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

class JsonlWriter {
 public:
  explicit JsonlWriter(const std::filesystem::path& path) : out_(path, std::ios::trunc) {
    if (!out_) throw JsonlError("cannot open " + path.string() + " for writing");
  }

  void write(const nlohmann::json& j) { out_ << j.dump() << '\n'; }

  void flush() { out_.flush(); }

 private:
  std::ofstream out_;
};

inline void write_jsonl(const std::filesystem::path& path, const std::vector<nlohmann::json>& rows) {
  JsonlWriter w(path);
  for (const auto& r : rows) w.write(r);
}

}  // namespace overthink
