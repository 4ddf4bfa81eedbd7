#pragma once

// Run manifests: one JSON file per CLI run recording the command, its
// effective arguments, seeds, input fingerprints and outputs. The "args"
// object uses flag names as keys, so a manifest can be fed back through
// --config to rerun the command.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dualcse/util.hpp"
#include "json.hpp"

#ifndef DUALCSE_VERSION
#define DUALCSE_VERSION "0.0.0"
#endif

namespace dualcse {

inline constexpr const char* kToolkitVersion = DUALCSE_VERSION;

struct RunManifest {
  std::string command;
  nlohmann::json args = nlohmann::json::object();
  nlohmann::json config = nlohmann::json::object();  // full effective config snapshot
  std::map<std::string, std::uint64_t> seeds;
  std::map<std::string, std::string> inputs;  // path -> fingerprint
  std::map<std::string, std::string> outputs;
  std::string version = kToolkitVersion;

  void add_input(const std::filesystem::path& p) {
    if (std::filesystem::is_regular_file(p)) inputs[p.string()] = file_fingerprint(p);
  }

  nlohmann::json to_json() const {
    return nlohmann::json{{"command", command}, {"args", args},       {"config", config},
                          {"seeds", seeds},     {"inputs", inputs},   {"outputs", outputs},
                          {"version", version}};
  }

  void write(const std::filesystem::path& path) const {
    std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
    write_file(path, to_json().dump(2) + "\n");
  }
};

// Turns {"seed": 3, "arch": "bi", "fast": true, "lrs": [1e-5, 3e-5]} into
// flag tokens, skipping keys the user already passed explicitly.
inline std::vector<std::string> args_to_flags(const nlohmann::json& args, const std::vector<std::string>& user_argv) {
  auto given = [&](const std::string& key) {
    const std::string flag = "--" + key;
    for (const auto& a : user_argv) {
      if (a == flag || a.rfind(flag + "=", 0) == 0) return true;
    }
    return false;
  };
  std::vector<std::string> out;
  for (const auto& [key, value] : args.items()) {
    if (given(key) || value.is_null()) continue;
    if (value.is_boolean()) {
      if (value.get<bool>()) out.push_back("--" + key);
      continue;
    }
    std::string text;
    if (value.is_array()) {
      for (const auto& v : value) {
        if (!text.empty()) text += ",";
        text += v.is_string() ? v.get<std::string>() : v.dump();
      }
    } else {
      text = value.is_string() ? value.get<std::string>() : value.dump();
    }
    out.push_back("--" + key);
    out.push_back(text);
  }
  return out;
}

}  // namespace dualcse
