#pragma once

#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

#include "orca/llm/provider.h"

namespace orca::router {

enum class QueryKind { Data, Causal };
enum class SubIntent { ExploreTable, RecommendTables, Text2Sql, EffectEstimation };

std::string_view to_string(QueryKind kind);
std::string_view to_string(SubIntent intent);
std::optional<QueryKind> parse_kind(std::string_view s);
std::optional<SubIntent> parse_sub_intent(std::string_view s);

struct RoutedQuery {
  std::string raw_text;
  QueryKind kind = QueryKind::Data;
  SubIntent sub_intent = SubIntent::Text2Sql;
  double confidence = 0.0;
  std::optional<std::string> clarification_needed;
  /// Table the query is about, when the model names one (explore_table).
  std::optional<std::string> target_table;
  /// True when the keyword rules produced the verdict.
  bool used_fallback = false;

  bool operator==(const RoutedQuery&) const = default;
};

nlohmann::json to_json(const RoutedQuery& q);

/// Cap applied to confidence whenever the keyword rules decide.
inline constexpr double kFallbackConfidenceCap = 0.5;

/// Keyword classification used when the model is unsure or unparseable.
RoutedQuery keyword_route(const std::string& raw_text);

RoutedQuery route(const std::string& raw_text, const std::string& catalog_summary, const llm::Provider& provider);

/// Re-routes the original text plus the user's reply. An empty reply
/// returns `routed` unchanged so the same question is asked again.
RoutedQuery request_clarification(const RoutedQuery& routed, const std::string& user_reply,
                                  const std::string& catalog_summary, const llm::Provider& provider);

}  // namespace orca::router
