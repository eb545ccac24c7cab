#include <algorithm>
#include <cmath>
#include <fstream>

#include "orca/catalog/catalog.h"
#include "orca/eval/eval.h"
#include "orca/llm/mock_provider.h"
#include "orca/reef/reef.h"
#include "metric_fixtures.h"
#include "support.h"

using namespace orca;
using namespace orca::eval;
using namespace orca::testing;
using llm::MockProvider;
using llm::MockScript;

namespace {

reef::DgpConfig small_shop() {
  auto c = reef::default_config();
  c.scale = {{"users", 400}, {"products", 60}, {"promotions", 5}, {"orders", 1500},
             {"carts", 100}, {"sessions", 200}, {"wishlists", 100}};
  return c;
}

}  // namespace

TEST_CASE("recall and precision match a hand-computed ten-example fixture") {
  auto examples = ten_examples();
  auto s = recall_precision(examples);
  REQUIRE(s.per_recall.size() == 10);
  for (std::size_t i = 0; i < 10; ++i) {
    CHECK(std::abs(s.per_recall[i] - kTen[i].r) <= 1e-12);
    CHECK(std::abs(s.per_precision[i] - kTen[i].p) <= 1e-12);
  }
  CHECK(std::abs(s.recall - 7.0 / 12.0) <= 1e-12);
  CHECK(std::abs(s.precision - 73.0 / 120.0) <= 1e-12);
  CHECK(s.empty_recommendations == std::vector<std::size_t>{4});

  // Example order does not matter.
  std::reverse(examples.begin(), examples.end());
  std::rotate(examples.begin(), examples.begin() + 3, examples.end());
  auto t = recall_precision(examples);
  CHECK(std::abs(t.recall - s.recall) <= 1e-12);
  CHECK(std::abs(t.precision - s.precision) <= 1e-12);

  auto one = recall_precision({ex({"a", "b"}, {"a", "c"})});
  CHECK(one.recall == 0.5);
  CHECK(one.precision == 0.5);

  CHECK_CODE(recall_precision({}), ErrorCode::EmptyExampleSet);
  CHECK_CODE(recall_precision({ex({}, {"a"})}), ErrorCode::Precondition);
}

TEST_CASE("top-level ORDER BY detection ignores subqueries, literals and comments") {
  CHECK(has_top_level_order_by("SELECT a FROM t ORDER BY a"));
  CHECK(has_top_level_order_by("select a from t order\n  by a desc limit 3"));
  CHECK_FALSE(has_top_level_order_by("SELECT a FROM (SELECT a FROM t ORDER BY a) s"));
  CHECK_FALSE(has_top_level_order_by("SELECT 'order by' FROM t"));
  CHECK_FALSE(has_top_level_order_by("SELECT a FROM t -- order by a"));
  CHECK_FALSE(has_top_level_order_by("SELECT a AS border, b AS \"order by\" FROM t"));
}

TEST_CASE("execution accuracy compares result multisets") {
  auto c = small_db();
  auto xs = ten_sql_examples();
  auto s = execution_accuracy(xs, c);
  const auto& want = kTenSqlMatches;
  CHECK(s.matches == want);
  CHECK(std::abs(s.accuracy - 0.5) <= 1e-12);
  CHECK(s.errors[7].has_value());
  CHECK_FALSE(s.errors[0].has_value());

  CHECK_CODE(execution_accuracy({}, c), ErrorCode::EmptyExampleSet);
  CHECK_CODE(execution_accuracy({{"q", "SELECT missing FROM t", "SELECT 1"}}, c), ErrorCode::GoldSqlFails);
  CHECK_CODE(execution_accuracy({{"q", "DELETE FROM t", "SELECT 1"}}, c), ErrorCode::GoldSqlFails);
  // A predicted write is an error, never executed.
  auto w = execution_accuracy({{"q", "SELECT count(*) FROM t", "DELETE FROM t"}}, c);
  CHECK_FALSE(w.matches[0]);
  CHECK(c.query("SELECT count(*) FROM t").rows[0][0] == db::Value{std::int64_t{4}});
}

TEST_CASE("causal metrics against hand-computed values") {
  auto single = causal_metrics({{"q", 5.0, 2.0, 1.0, 2.0}});
  CHECK(single.ci_coverage_pct == 0.0);
  CHECK(single.mae == 3.0);
  CHECK(single.mse == 9.0);
  CHECK(single.max_abs_error == 3.0);

  // errors 0, 3, -4; two of three inside their interval
  auto m = causal_metrics({{"a", 1.0, 1.0, 0.0, 2.0}, {"b", 4.0, 1.0, 0.0, 5.0}, {"c", -3.0, 1.0, 0.0, 2.0}});
  CHECK(std::abs(m.ci_coverage_pct - 200.0 / 3.0) <= 1e-12);
  CHECK(std::abs(m.mae - 7.0 / 3.0) <= 1e-12);
  CHECK(std::abs(m.mse - 25.0 / 3.0) <= 1e-12);
  CHECK(m.max_abs_error == 4.0);
  CHECK(m.n == 3);

  // interval bounds are inclusive
  CHECK(CausalEvalRecord{"e", 2.0, 1.0, 0.0, 2.0}.covered());
  CHECK_CODE(causal_metrics({}), ErrorCode::EmptyExampleSet);
}

TEST_CASE("judge scores: five-point replies scale by twenty") {
  auto c = small_db();
  auto cat = catalog::snapshot(c);
  MockProvider hundred(MockScript{}.add("task:judge", R"({"score": 91, "rationale": "fine"})"));
  auto a = judge_description("Orders with a status.", "t", cat, hundred);
  CHECK(a.score == 91.0);
  CHECK_FALSE(a.scaled);
  CHECK(a.rationale == "fine");
  CHECK(hundred.calls().front().prompt.find("Orders with a status.") != std::string::npos);

  MockProvider five(MockScript{}.add("task:judge", R"({"score": 4})"));
  auto b = judge_description("d", "t", cat, five);
  CHECK(b.score == 80.0);
  CHECK(b.scaled);
  CHECK(b.raw == 4.0);

  MockProvider garbled(MockScript::parse("DEFAULT <<<\nno json here\n>>>\n"));
  CHECK_CODE(judge_description("d", "t", cat, garbled), ErrorCode::JudgeUnavailable);
  MockProvider wild(MockScript{}.add("*", R"({"score": 250})"));
  CHECK_CODE(judge_description("d", "t", cat, wild), ErrorCode::JudgeUnavailable);
}

TEST_CASE("fixtures: missing files and tasks") {
  testing::TempDir dir;
  CHECK_CODE(load_jsonl(dir.file("nope.jsonl")), ErrorCode::FixtureMissing);
  {
    std::ofstream(dir.file("two.jsonl")) << "{\"a\": 1}\n\n{\"a\": 2}\n";
  }
  auto rows = load_jsonl(dir.file("two.jsonl"));
  REQUIRE(rows.size() == 2);
  CHECK(rows[1]["a"] == 2);
  EvalContext ctx;
  CHECK_CODE(run_task(4, dir.file("manifest.json"), ctx), ErrorCode::FixtureMissing);
  CHECK_CODE(run_task(7, dir.file("two.jsonl"), ctx), ErrorCode::Precondition);
}

TEST_CASE("tasks 2 and 3 run over a scripted provider") {
  testing::TempDir dir;
  auto c = small_db();
  c.exec("CREATE TABLE u (uid INTEGER PRIMARY KEY, t_id INTEGER REFERENCES t(id), score REAL)");
  c.exec("INSERT INTO u VALUES (1, 1, 0.5), (2, 3, 0.75)");
  auto cat = catalog::snapshot(c);
  MockProvider embedder;
  catalog::attach_embeddings(cat, embedder);

  {
    std::ofstream(dir.file("ret.jsonl")) << R"({"question": "scores per t row", "tables": ["t", "u"]})" "\n"
                                         << R"({"question": "list t", "tables": ["t"]})" "\n";
    std::ofstream(dir.file("sql.jsonl")) << R"({"question_id": 0, "question": "how many t rows", "evidence": "", "SQL": "SELECT count(*) FROM t"})" "\n"
                                         << R"({"question_id": 1, "question": "max score", "evidence": "score is in u", "SQL": "SELECT max(score) FROM u"})" "\n";
  }
  auto script = MockScript{}
                    .add("task:objective", R"({"objective": "a"})")
                    .add("task:table_recommender", R"({"tables": ["u"]})")
                    .add("task:objective", R"({"objective": "b"})")
                    .add("task:table_recommender", R"({"tables": ["t", "u"]})");
  EvalContext ctx;
  ctx.catalog = &cat;
  ctx.connection = &c;
  ctx.provider = [script] { return std::make_unique<MockProvider>(script); };
  auto r2 = run_task(2, dir.file("ret.jsonl"), ctx);
  // (1/2, 1) and (1, 1/2)
  CHECK(std::abs(r2["recall"].get<double>() - 0.75) <= 1e-12);
  CHECK(std::abs(r2["precision"].get<double>() - 0.75) <= 1e-12);

  auto sql_script = MockScript{}
                        .add("task:objective", R"({"objective": "count"})")
                        .add("task:table_recommender", R"({"tables": ["t"]})")
                        .add("task:text2sql_generate", R"({"sub_questions": ["count"], "sql": "SELECT count(id) FROM t"})")
                        .add("task:text2sql_validate", R"({"satisfies_request": true, "diagnosis": "ok"})")
                        .add("task:objective", R"({"objective": "max"})")
                        .add("task:table_recommender", R"({"tables": ["u"]})")
                        .add("task:text2sql_generate", R"({"sql": "SELECT min(score) FROM u"})")
                        .add("task:text2sql_validate", R"({"satisfies_request": true, "diagnosis": "ok"})");
  ctx.provider = [sql_script] { return std::make_unique<MockProvider>(sql_script); };
  auto r3 = run_task(3, dir.file("sql.jsonl"), ctx);
  CHECK(r3["execution_accuracy"].get<double>() == 0.5);
  CHECK(r3["examples"][0]["match"] == true);
  CHECK(r3["examples"][1]["match"] == false);
}

TEST_CASE("task 4 scores every mode per seed in manifest order") {
  testing::TempDir dir;
  auto cfg = small_shop();
  {
    auto gt = reef::compute_ground_truth(cfg, reef::default_queries());
    std::ofstream(dir.file("manifest.json")) << reef::to_json(gt).dump();
  }
  auto script = MockScript::load(std::string(ORCA_DATA_DIR) + "/mock/reef_task4.mock");
  EvalContext ctx;
  ctx.provider = [script] { return std::make_unique<MockProvider>(script); };
  ctx.seeds = {3, 1};
  ctx.bootstrap = 20;
  auto r = run_task(4, dir.file("manifest.json"), ctx);
  REQUIRE(r["per_seed"].size() == 2);
  CHECK(r["per_seed"][0]["seed"] == 3);
  CHECK(r["per_seed"][1]["seed"] == 1);
  for (const auto& s : r["per_seed"]) {
    for (const auto* mode : {"oracle", "agentic", "baseline"}) {
      const auto& recs = s[mode]["records"];
      REQUIRE(recs.size() == 3);
      CHECK(recs[0]["query"] == "coupon_review");
      CHECK(recs[1]["query"] == "coupon_points");
      CHECK(recs[2]["query"] == "coupon_charge");
    }
    // self-corrected retrieval lands on the oracle frame for the review question
    CHECK(s["agentic"]["records"][0]["predicted_ate"] == s["oracle"]["records"][0]["predicted_ate"]);
    CHECK(s["agentic"]["records"][1]["sql"].get<std::string>().find("'earn'") == std::string::npos);
    CHECK(s["oracle"]["failures"] == 0);
  }
  // Ground truth is recomputed per seed, not taken from the manifest.
  auto truth1 = reef::compute_ground_truth([&] { auto c = cfg; c.seed = 1; return c; }(), reef::default_queries());
  CHECK(r["per_seed"][1]["oracle"]["records"][0]["true_ate"].get<double>() == truth1.queries[0].true_ate);
  CHECK(r["aggregate"]["oracle"]["metrics"]["n"] == 6);

  auto again = run_task(4, dir.file("manifest.json"), ctx);
  CHECK(again.dump() == r.dump());
}
