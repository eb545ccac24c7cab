#include <cmath>
#include <set>

#include "orca/explorer/explorer.h"
#include "orca/router/router.h"
#include "shop_fixture.h"
#include "support.h"

using namespace orca;
using namespace orca::router;
using orca::llm::MockProvider;
using orca::llm::MockScript;

TEST_CASE("scripted verdicts route the query") {
  MockProvider mock(MockScript{}
                        .add("task:router", R"({"kind": "causal", "confidence": 0.9})")
                        .add("task:router", R"({"kind": "data", "sub_intent": "explore_table", "table": "users"})"));
  auto a = route("Does coupon redemption increase review scores?", "", mock);
  CHECK(a.kind == QueryKind::Causal);
  CHECK(a.sub_intent == SubIntent::EffectEstimation);
  CHECK(a.confidence == doctest::Approx(0.9));
  auto b = route("Describe the users table", "", mock);
  CHECK(b.kind == QueryKind::Data);
  CHECK(b.sub_intent == SubIntent::ExploreTable);
  CHECK(b.target_table == std::optional<std::string>("users"));
}

TEST_CASE("confidence is clamped") {
  MockProvider mock(MockScript{}.add("*", R"({"kind": "data", "sub_intent": "text2sql", "confidence": 7})"));
  CHECK(route("count orders", "", mock).confidence == 1.0);
}

TEST_CASE("unparseable verdict falls back to keywords") {
  MockProvider mock(MockScript{}.add("*", "hmm").add("*", "still prose"));
  auto q = route("what is the effect of promotion on paid amount", "", mock);
  CHECK(q.kind == QueryKind::Causal);
  CHECK(q.confidence <= 0.5);
  CHECK(q.used_fallback);
}

TEST_CASE("keyword rules") {
  CHECK(keyword_route("what is the impact of coupons").kind == QueryKind::Causal);
  CHECK(keyword_route("did the treatment cause churn").kind == QueryKind::Causal);
  CHECK(keyword_route("which tables hold refunds").sub_intent == SubIntent::RecommendTables);
  CHECK(keyword_route("describe orders").sub_intent == SubIntent::ExploreTable);
  CHECK(keyword_route("show the schema").sub_intent == SubIntent::ExploreTable);
  CHECK(keyword_route("how many orders last week").sub_intent == SubIntent::Text2Sql);
  CHECK(keyword_route("because it rained").kind == QueryKind::Data);
}

TEST_CASE("route is total and rejects empty text") {
  MockProvider mock(MockScript::parse("DEFAULT <<<\ngarbage\n>>>\n"));
  for (const char* s : {"x", "?!", "テーブル", "select * from users"}) {
    auto q = route(s, "", mock);
    CHECK(q.confidence >= 0.0);
    CHECK(q.confidence <= 1.0);
    CHECK((q.kind == QueryKind::Causal) == (q.sub_intent == SubIntent::EffectEstimation));
  }
  CHECK_CODE(route("  ", "", mock), ErrorCode::EmptyQuery);
}

TEST_CASE("clarification round trip") {
  MockProvider mock(MockScript{}
                        .add("task:router", R"({"kind": "ambiguous", "clarification": "Which outcome do you mean?"})")
                        .add("task:router", R"({"kind": "causal", "confidence": 0.95})"));
  auto q = route("coupons and reviews", "", mock);
  REQUIRE(q.clarification_needed);
  CHECK(*q.clarification_needed == "Which outcome do you mean?");
  auto same = request_clarification(q, "", "", mock);
  CHECK(same == q);
  auto resolved = request_clarification(q, "the review score", "", mock);
  CHECK_FALSE(resolved.clarification_needed);
  CHECK(resolved.kind == QueryKind::Causal);
  CHECK(mock.calls().back().prompt.find("the review score") != std::string::npos);
  CHECK_CODE(request_clarification(resolved, "x", "", mock), ErrorCode::NoPendingClarification);
}

TEST_CASE("router deterministic under replay") {
  auto script = MockScript{}.add("*", R"({"kind": "data", "sub_intent": "text2sql"})");
  MockProvider a(script), b(script);
  CHECK(route("count users", "", a) == route("count users", "", b));
}

// ---------------------------------------------------------------- explorer

using explorer::AnomalyKind;
using explorer::compute_anomalies;

namespace {

catalog::ColumnStats stats(const std::string& name) {
  catalog::ColumnStats s;
  s.name = name;
  s.declared_type = "REAL";
  s.row_count = 1000;
  s.unique_count = 100;
  return s;
}

bool has(const std::vector<explorer::AnomalyFlag>& flags, const std::string& col, AnomalyKind k) {
  for (const auto& f : flags)
    if (f.column == col && f.kind == k) return true;
  return false;
}

}  // namespace

TEST_CASE("anomaly thresholds") {
  auto nulls = stats("a");
  nulls.null_ratio = 0.45;
  auto clean = stats("b");
  clean.skewness = 0.1;
  auto constant = stats("c");
  constant.unique_count = 1;
  auto skewed = stats("d");
  skewed.skewness = -2.5;
  auto flags = compute_anomalies({nulls, clean, constant, skewed});
  CHECK(has(flags, "a", AnomalyKind::HighNullRatio));
  CHECK(has(flags, "c", AnomalyKind::ConstantColumn));
  CHECK(has(flags, "d", AnomalyKind::SkewedDistribution));
  for (const auto& f : flags) CHECK(f.column != "b");
  CHECK(flags.size() == 3);
}

TEST_CASE("outlier screen on the standard-deviation rule") {
  auto s = stats("x");
  s.mean = 10.0;
  s.median = 10.0;
  s.std_dev = 1.0;
  s.min = 8.0;
  s.max = 14.5;  // 10 + 4*1 = 14 < 14.5
  CHECK(has(compute_anomalies({s}), "x", AnomalyKind::PotentialOutliers));
  s.max = 13.9;
  s.min = 5.5;  // below 6
  CHECK(has(compute_anomalies({s}), "x", AnomalyKind::PotentialOutliers));
  s.min = 6.5;
  CHECK_FALSE(has(compute_anomalies({s}), "x", AnomalyKind::PotentialOutliers));
}

TEST_CASE("explore merges local flags with the model overview") {
  testing::TempDir dir;
  auto conn = testing::make_shop(dir.file("shop.sqlite"));
  auto cat = testing::shop_catalog(conn, false);
  MockProvider mock(MockScript{}.add(
      "task:table_explorer",
      R"({"description": "Registered users.", "column_notes": {"is_active": "activity flag", "ghost": "x"},
          "anomalies": [{"column": "bonus", "kind": "high_null_ratio", "evidence": "model says"},
                        {"column": "is_active", "kind": "skewed_distribution", "evidence": "looks odd"}],
          "suggested_analyses": []})"));
  auto o = explorer::explore("users", cat, mock);
  CHECK(o.description == "Registered users.");
  // bonus: 15 of 20 NULL
  REQUIRE(has(o.anomalies, "bonus", AnomalyKind::HighNullRatio));
  for (const auto& a : o.anomalies)
    if (a.column == "bonus" && a.kind == AnomalyKind::HighNullRatio) CHECK(a.evidence == "null_ratio 0.75");
  CHECK(has(o.anomalies, "country", AnomalyKind::ConstantColumn));
  CHECK_FALSE(has(o.anomalies, "is_active", AnomalyKind::SkewedDistribution));
  CHECK(o.column_notes.count("ghost") == 0);
  CHECK(o.column_notes.at("is_active").find("skewed_distribution") != std::string::npos);
  CHECK_FALSE(o.suggested_analyses.empty());

  std::set<std::string> related;
  for (const auto& r : o.related_tables) related.insert(r.table);
  CHECK(related == std::set<std::string>{"orders", "point_transaction"});

  // The prompt carries statistics and never a row dump.
  auto prompt = mock.calls().front().prompt;
  CHECK(prompt.find("null_ratio") != std::string::npos);
  CHECK(prompt.find("SELECT") == std::string::npos);
}

TEST_CASE("explore flags the extreme order amount and survives a parse failure") {
  testing::TempDir dir;
  auto conn = testing::make_shop(dir.file("shop.sqlite"));
  auto cat = testing::shop_catalog(conn, false);
  MockProvider mock(MockScript::parse("DEFAULT <<<\nno json\n>>>\n"));
  auto o = explorer::explore("orders", cat, mock);
  CHECK(has(o.anomalies, "amount", AnomalyKind::PotentialOutliers));
  CHECK_FALSE(o.description.empty());
  CHECK_FALSE(o.suggested_analyses.empty());
  CHECK_CODE(explorer::explore("nope", cat, mock), ErrorCode::UnknownTable);
}
