#pragma once

#include <nlohmann/json.hpp>

#include <iosfwd>
#include <string>
#include <vector>

namespace styleforge::cli {

inline constexpr const char* kToolVersion = "0.1.0";

// Everything needed to rerun a command: the argument vector, the effective
// configuration with all defaults filled in, seeds, and content digests of
// what was read and written.
struct RunManifest {
  std::string command;
  std::vector<std::string> args;  // without the program name
  std::vector<std::string> config_paths;
  nlohmann::json config = nlohmann::json::object();
  nlohmann::json seeds = nlohmann::json::object();
  std::vector<std::pair<std::string, std::string>> inputs;   // path, sha256
  std::vector<std::pair<std::string, std::string>> outputs;  // path, sha256
  std::string tool_version = kToolVersion;

  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);
};

// Runs one command line (args excludes the program name) and returns the
// process exit code: 0 ok, 2 usage, 3 data, 4 training.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace styleforge::cli
