#include "orca/router/router.h"

#include <algorithm>

#include "orca/common/error.h"
#include "orca/common/text.h"

namespace orca::router {

std::string_view to_string(QueryKind kind) { return kind == QueryKind::Causal ? "causal" : "data"; }

std::string_view to_string(SubIntent intent) {
  switch (intent) {
    case SubIntent::ExploreTable: return "explore_table";
    case SubIntent::RecommendTables: return "recommend_tables";
    case SubIntent::Text2Sql: return "text2sql";
    case SubIntent::EffectEstimation: return "effect_estimation";
  }
  return "text2sql";
}

std::optional<QueryKind> parse_kind(std::string_view s) {
  auto v = text::to_lower(text::trim(s));
  if (v == "data") return QueryKind::Data;
  if (v == "causal") return QueryKind::Causal;
  return std::nullopt;
}

std::optional<SubIntent> parse_sub_intent(std::string_view s) {
  auto v = text::to_lower(text::trim(s));
  for (auto i : {SubIntent::ExploreTable, SubIntent::RecommendTables, SubIntent::Text2Sql, SubIntent::EffectEstimation})
    if (v == to_string(i)) return i;
  return std::nullopt;
}

nlohmann::json to_json(const RoutedQuery& q) {
  nlohmann::json j = {{"raw_text", q.raw_text},
                      {"kind", to_string(q.kind)},
                      {"sub_intent", to_string(q.sub_intent)},
                      {"confidence", q.confidence},
                      {"used_fallback", q.used_fallback}};
  if (q.clarification_needed) j["clarification_needed"] = *q.clarification_needed;
  if (q.target_table) j["target_table"] = *q.target_table;
  return j;
}

namespace {

bool starts_with_any(const std::string& token, std::initializer_list<std::string_view> prefixes) {
  return std::any_of(prefixes.begin(), prefixes.end(), [&](std::string_view p) { return token.rfind(p, 0) == 0; });
}

SubIntent keyword_data_intent(const std::vector<std::string>& tokens) {
  for (std::size_t i = 0; i + 1 < tokens.size(); ++i)
    if (tokens[i] == "which" && (tokens[i + 1] == "table" || tokens[i + 1] == "tables")) return SubIntent::RecommendTables;
  for (const auto& t : tokens)
    if (t == "table" || t == "tables" || t == "schema" || t == "describe") return SubIntent::ExploreTable;
  return SubIntent::Text2Sql;
}

const char* kRouterSystem =
    "[task:router] You route analytics requests. Classify the user query as one of two kinds.\n"
    "- data: retrieving or describing data. Pick a sub_intent: explore_table (overview of one table), "
    "recommend_tables (which tables are relevant to a goal), text2sql (answer with a SQL query).\n"
    "- causal: estimating the effect of a treatment on an outcome. sub_intent is effect_estimation.\n"
    "If the query asks for data and for an effect, answer causal. If you cannot tell, answer kind "
    "\"ambiguous\" with a short clarification question for the user.\n"
    "Reply with JSON: {\"kind\": \"data|causal|ambiguous\", \"sub_intent\": \"...\", \"confidence\": 0..1, "
    "\"table\": \"table name if one table is the subject\", \"clarification\": \"question if ambiguous\"}";

}  // namespace

RoutedQuery keyword_route(const std::string& raw_text) {
  RoutedQuery q;
  q.raw_text = raw_text;
  q.used_fallback = true;
  q.confidence = kFallbackConfidenceCap;
  auto tokens = text::word_tokens(raw_text);
  bool causal = std::any_of(tokens.begin(), tokens.end(), [](const std::string& t) {
    return starts_with_any(t, {"effect", "impact", "caus", "treatment"});
  });
  if (causal) {
    q.kind = QueryKind::Causal;
    q.sub_intent = SubIntent::EffectEstimation;
  } else {
    q.kind = QueryKind::Data;
    q.sub_intent = keyword_data_intent(tokens);
  }
  return q;
}

RoutedQuery route(const std::string& raw_text, const std::string& catalog_summary, const llm::Provider& provider) {
  if (text::trim(raw_text).empty()) fail(ErrorCode::EmptyQuery, "query text is empty");

  llm::ChatRequest req;
  req.system_text = kRouterSystem;
  if (!catalog_summary.empty()) req.add_context("catalog", catalog_summary);
  req.user_text = raw_text;
  req.output_schema_hint = "RouterVerdict";

  nlohmann::json verdict;
  try {
    verdict = *provider.chat(req).parsed;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::ParseFailure) throw;
    return keyword_route(raw_text);
  }

  auto str = [&](const char* key) -> std::string {
    auto it = verdict.find(key);
    return it != verdict.end() && it->is_string() ? it->get<std::string>() : std::string();
  };

  auto kind = parse_kind(str("kind"));
  if (!kind) {
    // Ambiguous or unknown kind: keyword rules decide, and any clarification
    // question the model offered is kept so the session can pause on it.
    auto q = keyword_route(raw_text);
    auto clarification = text::trim(str("clarification"));
    if (!clarification.empty()) q.clarification_needed = clarification;
    return q;
  }

  RoutedQuery q;
  q.raw_text = raw_text;
  q.kind = *kind;
  q.confidence = 1.0;
  if (auto it = verdict.find("confidence"); it != verdict.end() && it->is_number())
    q.confidence = std::clamp(it->get<double>(), 0.0, 1.0);
  if (q.kind == QueryKind::Causal) {
    q.sub_intent = SubIntent::EffectEstimation;
  } else {
    auto intent = parse_sub_intent(str("sub_intent"));
    q.sub_intent = intent && *intent != SubIntent::EffectEstimation
                       ? *intent
                       : keyword_data_intent(text::word_tokens(raw_text));
  }
  if (auto table = text::trim(str("table")); !table.empty()) q.target_table = table;
  return q;
}

RoutedQuery request_clarification(const RoutedQuery& routed, const std::string& user_reply,
                                  const std::string& catalog_summary, const llm::Provider& provider) {
  if (!routed.clarification_needed) fail(ErrorCode::NoPendingClarification, "no clarification is pending");
  if (text::trim(user_reply).empty()) return routed;
  return route(routed.raw_text + "\n" + user_reply, catalog_summary, provider);
}

}  // namespace orca::router
