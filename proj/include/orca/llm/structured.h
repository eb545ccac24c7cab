#pragma once

#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

namespace orca::llm {

/// Pulls the first JSON value out of model text. Accepts a fenced ```json
/// block, any fenced block, or the first balanced {...} / [...] region, and
/// ignores prose around it.
std::optional<nlohmann::json> extract_json(std::string_view text);

/// Checks a parsed value against a named output shape. Unknown hint names
/// only require a JSON object. On failure `why` receives the reason.
bool conforms(const nlohmann::json& value, std::string_view schema_hint, std::string* why = nullptr);

/// Extracts the body of the first ```sql (or unlabeled) fenced block.
std::optional<std::string> extract_fenced(std::string_view text, std::string_view language);

}  // namespace orca::llm
