#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include <json.hpp>

#include "orca/llm/provider.h"

namespace orca::service {

/// Settings shared by the CLI and the service, read from a JSON file:
///
///     {
///       "state_dir": "state",
///       "databases": {"shop": "sqlite:///data/shop.db"},
///       "provider": {"kind": "mock", "mock_script": "data/mock/demo.mock"},
///       "judge": {"kind": "real", "model_id": "gpt-4o"},
///       "seed": 0, "bootstrap": 500, "max_attempts": 3, "candidates": 20,
///       "workers": 4
///     }
///
/// Every key is optional. A relative path in the file is resolved against
/// the file's directory.
struct AppConfig {
  std::filesystem::path state_dir = "state";
  /// database id -> connection string; overrides the connection recorded in
  /// the catalog.
  std::map<std::string, std::string> databases;
  llm::ProviderConfig provider;
  std::optional<llm::ProviderConfig> judge;
  std::uint64_t seed = 0;
  std::size_t bootstrap = 500;
  int max_attempts = 3;
  std::size_t candidates = 20;
  int workers = 4;
};

/// Throws InvalidConfig on unknown keys or wrong types.
AppConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
AppConfig load_config(const std::filesystem::path& path);

}  // namespace orca::service
