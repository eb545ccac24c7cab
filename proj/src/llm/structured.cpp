#include "orca/llm/structured.h"

#include <array>
#include <utility>

#include "orca/common/text.h"

namespace orca::llm {

namespace {

std::optional<nlohmann::json> try_parse(std::string_view s) {
  auto j = nlohmann::json::parse(s.begin(), s.end(), nullptr, false);
  if (j.is_discarded()) return std::nullopt;
  return j;
}

/// End index (exclusive) of the balanced region starting at `start`, honoring
/// JSON string quoting.
std::optional<std::size_t> balanced_end(std::string_view s, std::size_t start) {
  int depth = 0;
  bool in_string = false;
  bool escaped = false;
  for (std::size_t i = start; i < s.size(); ++i) {
    char c = s[i];
    if (in_string) {
      if (escaped) {
        escaped = false;
      } else if (c == '\\') {
        escaped = true;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '{' || c == '[') {
      ++depth;
    } else if (c == '}' || c == ']') {
      if (--depth == 0) return i + 1;
    }
  }
  return std::nullopt;
}

}  // namespace

std::optional<std::string> extract_fenced(std::string_view text, std::string_view language) {
  std::size_t pos = 0;
  while ((pos = text.find("```", pos)) != std::string_view::npos) {
    std::size_t line_end = text.find('\n', pos);
    if (line_end == std::string_view::npos) return std::nullopt;
    std::string tag = text::to_lower(text::trim(text.substr(pos + 3, line_end - pos - 3)));
    std::size_t close = text.find("```", line_end + 1);
    if (close == std::string_view::npos) return std::nullopt;
    if (language.empty() || tag == language || tag.empty()) {
      return text::trim(text.substr(line_end + 1, close - line_end - 1));
    }
    pos = close + 3;
  }
  return std::nullopt;
}

std::optional<nlohmann::json> extract_json(std::string_view text) {
  if (auto fenced = extract_fenced(text, "json")) {
    if (auto j = try_parse(*fenced)) return j;
  }
  if (auto whole = try_parse(text::trim(text))) return whole;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] != '{' && text[i] != '[') continue;
    if (auto end = balanced_end(text, i)) {
      if (auto j = try_parse(text.substr(i, *end - i))) return j;
    }
  }
  return std::nullopt;
}

namespace {

enum class Kind { String, Number, Boolean, Array, Object };

struct Field {
  const char* name;
  Kind kind;
};

struct Shape {
  const char* name;
  std::vector<Field> required;
};

const std::vector<Shape>& shapes() {
  static const std::vector<Shape> table = {
      {"RouterVerdict", {{"kind", Kind::String}}},
      {"Objective", {{"objective", Kind::String}}},
      {"TableOverview", {{"description", Kind::String}}},
      {"TableSelection", {{"tables", Kind::Array}}},
      {"SqlGeneration", {{"sub_questions", Kind::Array}, {"sql", Kind::String}}},
      {"SqlCorrection", {{"sql", Kind::String}}},
      {"ValidationVerdict", {{"satisfies_request", Kind::Boolean}}},
      {"CausalConfig", {{"estimation", Kind::String}}},
      {"CausalParse", {}},
      {"JudgeScore", {{"score", Kind::Number}}},
  };
  return table;
}

bool kind_matches(const nlohmann::json& v, Kind k) {
  switch (k) {
    case Kind::String: return v.is_string();
    case Kind::Number: return v.is_number();
    case Kind::Boolean: return v.is_boolean();
    case Kind::Array: return v.is_array();
    case Kind::Object: return v.is_object();
  }
  return false;
}

}  // namespace

bool conforms(const nlohmann::json& value, std::string_view schema_hint, std::string* why) {
  auto reject = [&](std::string reason) {
    if (why) *why = std::move(reason);
    return false;
  };
  if (!value.is_object()) return reject("expected a JSON object");
  for (const auto& shape : shapes()) {
    if (schema_hint != shape.name) continue;
    for (const auto& f : shape.required) {
      auto it = value.find(f.name);
      if (it == value.end()) return reject(std::string("missing field '") + f.name + "'");
      if (!kind_matches(*it, f.kind)) return reject(std::string("field '") + f.name + "' has the wrong type");
    }
    return true;
  }
  return true;
}

}  // namespace orca::llm
