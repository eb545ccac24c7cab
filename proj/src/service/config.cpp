#include "orca/service/config.h"

#include <fstream>
#include <set>

#include "orca/common/error.h"

namespace orca::service {

namespace {

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_relative() && !base.empty() ? base / path : path;
}

llm::ProviderConfig provider_from(const nlohmann::json& j, const std::filesystem::path& base) {
  if (!j.is_object()) fail(ErrorCode::InvalidConfig, "provider settings must be an object");
  auto c = llm::provider_config_from_json(j);
  if (!c.mock_script_path.empty()) c.mock_script_path = resolve(base, c.mock_script_path).string();
  return c;
}

}  // namespace

AppConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  static const std::set<std::string> known = {"state_dir", "databases", "provider", "judge", "seed",
                                              "bootstrap", "max_attempts", "candidates", "workers"};
  if (!j.is_object()) fail(ErrorCode::InvalidConfig, "config must be a JSON object");
  for (const auto& [k, v] : j.items())
    if (!known.count(k) && k.rfind('_', 0) != 0) fail(ErrorCode::InvalidConfig, "unknown config key '" + k + "'");
  AppConfig c;
  try {
    if (j.contains("state_dir")) c.state_dir = resolve(base_dir, j["state_dir"].get<std::string>());
    if (j.contains("databases"))
      for (const auto& [id, conn] : j["databases"].items()) {
        auto s = conn.get<std::string>();
        // Bare relative file paths are relative to the config file too.
        if (s.find("://") == std::string::npos && s != ":memory:") s = resolve(base_dir, s).string();
        c.databases[id] = s;
      }
    if (j.contains("provider")) c.provider = provider_from(j["provider"], base_dir);
    if (j.contains("judge")) c.judge = provider_from(j["judge"], base_dir);
    c.seed = j.value("seed", c.seed);
    c.bootstrap = j.value("bootstrap", c.bootstrap);
    c.max_attempts = j.value("max_attempts", c.max_attempts);
    c.candidates = j.value("candidates", c.candidates);
    c.workers = j.value("workers", c.workers);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvalidConfig, std::string("bad config value: ") + e.what());
  }
  if (c.max_attempts < 1) fail(ErrorCode::InvalidConfig, "max_attempts must be at least 1");
  if (c.workers < 1) fail(ErrorCode::InvalidConfig, "workers must be at least 1");
  return c;
}

AppConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::InvalidConfig, "cannot read config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorCode::InvalidConfig, path.string() + ": " + e.what());
  }
  return config_from_json(j, path.parent_path());
}

}  // namespace orca::service
