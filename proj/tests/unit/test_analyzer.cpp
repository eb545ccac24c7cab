#include <cmath>

#include "orca/analyzer/analyzer.h"
#include "orca/common/rng.h"
#include "orca/common/text.h"
#include "orca/llm/mock_provider.h"
#include "support.h"

using namespace orca;
using namespace orca::analyzer;
using orca::llm::MockProvider;
using orca::llm::MockScript;

namespace {

/// customers(z, promo BOOLEAN, spend, region, joined) with spend = 2*promo + z + noise.
/// Rows 1-5 have NULL z and row 6 a NULL spend.
struct Lab {
  testing::TempDir dir;
  db::Connection conn = make(dir.file("lab.sqlite"));
  catalog::SchemaCatalog cat = catalog::snapshot(conn);

  static db::Connection make(const std::string& path) {
    auto c = db::Connection::open(path, db::OpenMode::Create);
    c.exec("CREATE TABLE customers (id INTEGER PRIMARY KEY, z REAL, promo BOOLEAN, spend REAL, region TEXT,"
           " joined TEXT, tier TEXT);"
           "CREATE TABLE visits (visit_id INTEGER PRIMARY KEY, id INTEGER REFERENCES customers(id), pages INTEGER);");
    Rng rng(7);
    std::vector<db::Row> rows;
    const char* regions[] = {"east", "north", "west"};
    for (int i = 1; i <= 400; ++i) {
      double z = rng.normal();
      bool t = rng.bernoulli(1.0 / (1.0 + std::exp(-0.5 * z)));
      double y = 2.0 * t + z + rng.normal();
      rows.push_back({std::int64_t{i}, i <= 5 ? db::Value() : db::Value(z), std::int64_t{t},
                      i == 6 ? db::Value() : db::Value(y), std::string(regions[i % 3]),
                      std::string("2024-03-") + (i % 28 < 9 ? "0" : "") + std::to_string(i % 28 + 1),
                      std::string(t ? "gold" : "basic")});
    }
    c.insert_rows("customers", {"id", "z", "promo", "spend", "region", "joined", "tier"}, rows);
    return c;
  }
};

CausalQuery promo_query() {
  CausalQuery q;
  q.raw_text = "Effect of promo on spend, adjusting for z. promo -> spend; z -> promo; z -> spend";
  q.treatment = "promo";
  q.outcome = "spend";
  q.graph = causal::parse_graph("promo -> spend; z -> promo; z -> spend");
  q.variable_bindings = {{"promo", {"customers", "promo"}}, {"spend", {"customers", "spend"}}, {"z", {"customers", "z"}}};
  q.effect_question = "What is the effect of promo on spend?";
  return q;
}

CausalQuery oracle_query() {
  auto q = promo_query();
  q.oracle_sql = "SELECT promo, spend, z FROM customers ORDER BY id";
  return q;
}

std::string config(const std::string& est, const std::string& ref = "") {
  nlohmann::json j = {{"task", "effect_estimation"}, {"identification", "backdoor"}, {"estimation", est}};
  j["refutation"] = ref.empty() ? nlohmann::json() : nlohmann::json(ref);
  return j.dump();
}

const char* kFour =
    "Receiving the promo raises spend by about two units. The interval excludes zero. The estimate adjusts for z. "
    "A placebo test supports it.";

}  // namespace

TEST_CASE("binding resolution") {
  Lab lab;
  CHECK(resolve_binding("customers.z", lab.cat) == Binding{"customers", "z"});
  CHECK(resolve_binding("pages", lab.cat) == Binding{"visits", "pages"});
  CHECK_CODE(resolve_binding("id", lab.cat), ErrorCode::UnboundVariable);  // in both tables
  CHECK_CODE(resolve_binding("customers.nope", lab.cat), ErrorCode::UnboundVariable);

  auto q = promo_query();
  CHECK_NOTHROW(check_bindings(q, lab.cat));
  q.variable_bindings.erase("z");
  CHECK_CODE(check_bindings(q, lab.cat), ErrorCode::UnboundVariable);
}

TEST_CASE("prepare_data with oracle SQL encodes and drops nulls") {
  Lab lab;
  MockProvider mock;
  auto d = prepare_data(oracle_query(), lab.cat, lab.conn, mock);
  CHECK(mock.call_count() == 0);
  CHECK(d.row_count == 394);
  CHECK(d.dropped_rows == 6);
  CHECK(d.drop_reasons.at("null z") == 5);
  CHECK(d.drop_reasons.at("null spend") == 1);
  CHECK(d.data.rows() == 394);
  CHECK(d.encodings.at("promo").encoding == Encoding::Binary01);
  CHECK(d.encodings.at("spend").encoding == Encoding::None);
  CHECK(d.columns_for({"z", "promo"}) == std::vector<std::string>{"z", "promo"});

  PrepareOptions norm;
  norm.normalize_covariates = true;
  auto n = prepare_data(oracle_query(), lab.cat, lab.conn, mock, norm);
  CHECK(n.encodings.at("z").zscore);
  CHECK_FALSE(n.encodings.at("promo").zscore);
  double mean = 0;
  for (double x : n.data.column("z")) mean += x;
  CHECK(std::abs(mean / 394) < 1e-12);
  CHECK(n.data.column("spend") == d.data.column("spend"));
}

TEST_CASE("categorical, date and text encodings") {
  Lab lab;
  auto q = promo_query();
  q.graph = causal::parse_graph("tier -> spend; region -> tier; region -> spend; joined -> spend");
  q.treatment = "tier";
  q.variable_bindings = {{"tier", {"customers", "tier"}},
                         {"spend", {"customers", "spend"}},
                         {"region", {"customers", "region"}},
                         {"joined", {"customers", "joined"}}};
  auto rs = lab.conn.query("SELECT tier, spend, region, joined FROM customers WHERE spend IS NOT NULL ORDER BY id");
  auto d = encode(q, rs, lab.cat, false);
  const auto& tier = d.encodings.at("tier");
  CHECK(tier.encoding == Encoding::Binary01);
  CHECK(tier.levels == std::vector<std::string>{"basic", "gold"});
  const auto& region = d.encodings.at("region");
  CHECK(region.encoding == Encoding::OneHot);
  CHECK(region.columns == std::vector<std::string>{"region=north", "region=west"});
  CHECK(d.encodings.at("joined").encoding == Encoding::EpochDays);
  // 2024-03-01 is day 19783 after the epoch.
  auto first = lab.conn.query("SELECT joined FROM customers WHERE spend IS NOT NULL ORDER BY id LIMIT 1");
  CHECK(db::to_display(first.rows[0][0]) == "2024-03-02");
  CHECK(d.data.column("joined")[0] == doctest::Approx(19784.0));
  // Row id=1 is region "north" (1 % 3 == 1).
  CHECK(d.data.column("region=north")[0] == 1.0);
  CHECK(d.data.column("region=west")[0] == 0.0);
  CHECK(d.columns_for({"region"}).size() == 2);

  // A three-level text treatment cannot be encoded.
  q.treatment = "region";
  q.graph = causal::parse_graph("region -> spend; tier -> spend");
  CHECK_CODE(encode(q, rs, lab.cat, false), ErrorCode::TreatmentNotBinaryOrNumeric);

  // More than ten levels on a covariate is refused.
  q = promo_query();
  q.variable_bindings["z"] = {"customers", "joined"};
  auto rs2 = lab.conn.query("SELECT promo, spend, 'd' || id AS z FROM customers WHERE spend IS NOT NULL");
  CHECK_CODE(encode(q, rs2, lab.cat, false), ErrorCode::HighCardinalityCovariate);

  auto rs3 = lab.conn.query("SELECT promo, spend, z FROM customers WHERE id <= 5");
  CHECK_CODE(encode(promo_query(), rs3, lab.cat, false), ErrorCode::EmptyDataset);
  auto rs4 = lab.conn.query("SELECT promo, spend FROM customers");
  CHECK_CODE(encode(promo_query(), rs4, lab.cat, false), ErrorCode::RetrievalFailed);
}

TEST_CASE("agentic retrieval goes through text2sql") {
  Lab lab;
  auto gen = [](const std::string& sql) {
    return nlohmann::json{{"sub_questions", {"pick columns"}}, {"sql", sql}}.dump();
  };
  MockProvider mock(MockScript{}
                        .add("task:text2sql_generate", gen("SELECT promo, spend, zz AS z FROM customers"))
                        .add("task:text2sql_correct", R"({"sql": "SELECT promo, spend, z FROM customers"})")
                        .add("task:text2sql_validate", R"({"satisfies_request": true, "diagnosis": "ok"})"));
  std::optional<text2sql::SqlPipelineTrace> trace;
  auto d = prepare_data(promo_query(), lab.cat, lab.conn, mock, {}, &trace);
  REQUIRE(trace);
  CHECK(trace->attempts.size() == 2);
  CHECK(d.row_count == 394);
  CHECK(d.sql == "SELECT promo, spend, z FROM customers");
  auto prompt = mock.calls().front().prompt;
  CHECK(prompt.find("- z = customers.z") != std::string::npos);

  MockProvider broken(MockScript{}
                          .add("task:text2sql_generate", gen("SELECT nope FROM customers"))
                          .add("task:text2sql_correct", R"({"sql": "SELECT nope2 FROM customers"})")
                          .add("task:text2sql_correct", R"({"sql": "SELECT nope3 FROM customers"})"));
  try {
    prepare_data(promo_query(), lab.cat, lab.conn, broken);
    FAIL("expected RetrievalFailed");
  } catch (const RetrievalError& e) {
    CHECK(e.code() == ErrorCode::RetrievalFailed);
    REQUIRE(e.trace());
    CHECK(e.trace()->attempts.size() == 3);
  }
}

TEST_CASE("config selection and repair") {
  Lab lab;
  MockProvider none;
  auto d = prepare_data(oracle_query(), lab.cat, lab.conn, none);

  MockProvider ipw(MockScript{}.add("task:config_selector", config("propensity_weighting", "placebo_treatment")));
  auto s = select_config(promo_query(), d, ipw, 11);
  CHECK(s.spec.estimation == causal::Estimation::PropensityWeighting);
  CHECK(s.spec.refutation == causal::Refutation::PlaceboTreatment);
  CHECK(s.spec.seed == 11);
  CHECK_FALSE(s.used_fallback);
  auto prompt = ipw.calls().front().prompt;
  CHECK(prompt.find("propensity_matching") != std::string::npos);
  CHECK(prompt.find("data_sample") != std::string::npos);

  // Matching on a continuous treatment is repaired to regression.
  auto q = promo_query();
  std::swap(q.treatment, q.outcome);
  q.graph = causal::parse_graph("spend -> promo; z -> promo; z -> spend");
  MockProvider match(MockScript{}.add("task:config_selector", config("propensity_matching")));
  auto r = select_config(q, d, match);
  CHECK(r.spec.estimation == causal::Estimation::LinearRegression);
  REQUIRE(r.notes.size() == 1);
  CHECK(text::contains(r.notes[0], "binary treatment"));

  MockProvider junk(MockScript{}.add("*", "use whatever").add("*", "still prose"));
  auto f = select_config(promo_query(), d, junk);
  CHECK(f.used_fallback);
  CHECK(f.confidence == 0.5);
  CHECK(f.spec.estimation == causal::Estimation::LinearRegression);
  CHECK(f.spec.refutation == causal::Refutation::PlaceboTreatment);

  MockProvider odd(MockScript{}.add("*", config("magic_forest", "astrology")));
  auto o = select_config(promo_query(), d, odd);
  CHECK(o.spec.estimation == causal::Estimation::LinearRegression);
  CHECK_FALSE(o.spec.refutation);
  CHECK(o.notes.size() == 2);
}

TEST_CASE("implement_model recovers the planted effect") {
  Lab lab;
  MockProvider none;
  auto d = prepare_data(oracle_query(), lab.cat, lab.conn, none);
  causal::CausalModelSpec spec;
  auto q = promo_query();
  spec.graph = q.graph;
  spec.treatment = "promo";
  spec.outcome = "spend";
  spec.estimation = causal::Estimation::LinearRegression;
  spec.refutation = causal::Refutation::PlaceboTreatment;
  auto m = implement_model(spec, d, {100, 0.95});
  CHECK(m.estimand.adjustment_set == std::vector<std::string>{"z"});
  CHECK(m.estimate.covers(2.0));
  CHECK(m.estimate.ci_low > 0);
  REQUIRE(m.refutation);
  CHECK(m.refutation->passed);

  spec.graph = causal::parse_graph("promo -> spend; promo <-> spend; z -> promo");
  CHECK_CODE(implement_model(spec, d), ErrorCode::NotIdentifiable);
}

TEST_CASE("interpretation length bounds and significance context") {
  causal::EffectEstimate e;
  e.ate = 0.1;
  e.ci_low = -0.5;
  e.ci_high = 0.7;
  e.method = "linear_regression";
  ModelResult m{{}, e, std::nullopt};
  m.estimand.adjustment_set = {"z"};
  auto q = promo_query();

  MockProvider ok(MockScript{}.add("task:interpreter", kFour));
  auto i = interpret(m, q, ok);
  CHECK(i.text == kFour);
  CHECK(i.notes.empty());
  CHECK(ok.call_count() == 1);
  CHECK(text::contains(ok.calls().front().prompt, "NOT statistically significant"));

  std::string nine;
  for (int k = 1; k <= 9; ++k) nine += "Sentence number " + std::to_string(k) + ". ";
  MockProvider chatty(MockScript{}.add("task:interpreter", nine).add("task:interpreter", nine));
  auto c = interpret(m, q, chatty);
  CHECK(chatty.call_count() == 2);
  CHECK(text::sentences(c.text).size() == 6);
  CHECK(c.notes.size() == 2);

  MockProvider terse(MockScript{}.add("*", "Too short.").add("*", kFour));
  auto t = interpret(m, q, terse);
  CHECK(t.text == kFour);
  CHECK(t.notes.size() == 1);

  m.estimate.ci_low = 0.05;
  MockProvider sig(MockScript{}.add("*", kFour));
  interpret(m, q, sig);
  CHECK_FALSE(text::contains(sig.calls().front().prompt, "NOT statistically significant"));
}

TEST_CASE("analyze end to end and partial reports") {
  Lab lab;
  MockProvider mock(MockScript{}
                        .add("task:config_selector", config("propensity_stratification", "random_common_cause"))
                        .add("task:interpreter", kFour));
  AnalyzeOptions opts;
  opts.model.bootstrap = 100;
  opts.seed = 3;
  auto r = analyze(oracle_query(), lab.cat, lab.conn, mock, opts);
  REQUIRE(r.complete());
  CHECK(r.trace.size() >= 5);
  CHECK(r.trace.front().stage == "parse");
  CHECK(r.trace.back().stage == "interpret");
  REQUIRE(r.result);
  CHECK(r.result->estimate.method == "propensity_stratification");
  CHECK(r.result->estimate.covers(2.0));
  CHECK(r.interpretation == kFour);
  auto j = to_json(r);
  CHECK(j["estimate"]["ate"].get<double>() == r.result->estimate.ate);
  CHECK(text::contains(render_log(r), "propensity_stratification"));

  // Same seed, same numbers.
  MockProvider again(MockScript{}
                         .add("task:config_selector", config("propensity_stratification", "random_common_cause"))
                         .add("task:interpreter", kFour));
  auto r2 = analyze(oracle_query(), lab.cat, lab.conn, again, opts);
  CHECK(r2.result->estimate.ci_low == r.result->estimate.ci_low);

  // Feedback override reruns on the same data.
  AnalyzeOptions over = opts;
  over.estimation = causal::Estimation::LinearRegression;
  MockProvider interp(MockScript{}.add("*", kFour));
  auto spec = *r.spec;
  spec.estimation = causal::Estimation::LinearRegression;
  auto rr = rerun_model(r, spec, interp, over);
  REQUIRE(rr.complete());
  CHECK(rr.result->estimate.method == "linear_regression");
  CHECK(rr.dataset->row_count == r.dataset->row_count);

  // Failure in retrieval gives a partial report.
  auto bad = oracle_query();
  bad.oracle_sql = "SELECT missing FROM customers";
  MockProvider unused;
  auto p = analyze(bad, lab.cat, lab.conn, unused, opts);
  CHECK_FALSE(p.complete());
  CHECK(p.failed_stage == std::optional<std::string>("prepare_data"));
  CHECK(p.error_code == ErrorCode::RetrievalFailed);
  CHECK(p.trace.back().stage == "error");

  // Identification failure after data was prepared keeps the dataset.
  auto latent = oracle_query();
  latent.graph = causal::parse_graph("promo -> spend; promo <-> spend; z -> spend");
  MockProvider cfg(MockScript{}.add("*", config("linear_regression")));
  auto p2 = analyze(latent, lab.cat, lab.conn, cfg, opts);
  CHECK(p2.failed_stage == std::optional<std::string>("implement_model"));
  CHECK(p2.error_code == ErrorCode::NotIdentifiable);
  CHECK(p2.dataset);
}

TEST_CASE("parse_causal_query") {
  Lab lab;
  nlohmann::json reply = {{"treatment", "promo"},
                          {"outcome", "spend"},
                          {"bindings", {{"promo", "customers.promo"}, {"spend", "customers.spend"}}},
                          {"effect_question", "Does the promo raise spend?"}};
  MockProvider mock(MockScript{}.add("task:causal_parse", reply.dump()));
  auto p = parse_causal_query("What is the effect of promo on spend?\npromo -> spend\nz -> promo\nz -> spend", lab.cat,
                              mock);
  REQUIRE(p.query);
  CHECK(p.query->variable_bindings.at("z") == Binding{"customers", "z"});
  CHECK(p.query->graph.has_node("z"));

  MockProvider nograph(MockScript{}.add("*", reply.dump()));
  auto g = parse_causal_query("What is the effect of promo on spend?", lab.cat, nograph);
  CHECK_FALSE(g.query);
  REQUIRE(g.clarification);
  CHECK(text::contains(*g.clarification, "promo -> spend"));

  MockProvider unbound(MockScript{}.add("*", reply.dump()));
  auto u = parse_causal_query("promo -> spend; mood -> spend", lab.cat, unbound);
  CHECK_FALSE(u.query);
  CHECK(text::contains(*u.clarification, "mood"));
}
