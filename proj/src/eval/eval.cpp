#include "orca/eval/eval.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>

#include "orca/analyzer/analyzer.h"
#include "orca/common/error.h"
#include "orca/common/text.h"
#include "orca/explorer/explorer.h"
#include "orca/recommender/recommender.h"
#include "orca/reef/reef.h"
#include "orca/text2sql/text2sql.h"

namespace orca::eval {

RetrievalScore recall_precision(const std::vector<RetrievalExample>& examples) {
  if (examples.empty()) fail(ErrorCode::EmptyExampleSet, "no retrieval examples");
  RetrievalScore s;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto& e = examples[i];
    require(!e.gold.empty(), "retrieval example " + std::to_string(i) + " has no gold tables");
    std::size_t hit = 0;
    for (const auto& t : e.recommended) hit += e.gold.count(t);
    double r = static_cast<double>(hit) / static_cast<double>(e.gold.size());
    double p = 0.0;
    if (e.recommended.empty()) {
      s.empty_recommendations.push_back(i);
    } else {
      p = static_cast<double>(hit) / static_cast<double>(e.recommended.size());
    }
    s.per_recall.push_back(r);
    s.per_precision.push_back(p);
  }
  const double n = static_cast<double>(examples.size());
  for (std::size_t i = 0; i < examples.size(); ++i) {
    s.recall += s.per_recall[i] / n;
    s.precision += s.per_precision[i] / n;
  }
  return s;
}

bool has_top_level_order_by(const std::string& sql) {
  std::vector<std::string> words;
  int depth = 0;
  std::string word;
  auto flush = [&] {
    if (!word.empty() && depth == 0) words.push_back(text::to_lower(word));
    word.clear();
  };
  for (std::size_t i = 0; i < sql.size(); ++i) {
    char c = sql[i];
    if (c == '-' && i + 1 < sql.size() && sql[i + 1] == '-') {
      flush();
      while (i < sql.size() && sql[i] != '\n') ++i;
    } else if (c == '/' && i + 1 < sql.size() && sql[i + 1] == '*') {
      flush();
      auto end = sql.find("*/", i + 2);
      i = end == std::string::npos ? sql.size() : end + 1;
    } else if (c == '\'' || c == '"' || c == '`') {
      flush();
      ++i;
      while (i < sql.size() && sql[i] != c) ++i;
    } else if (c == '(') {
      flush();
      ++depth;
    } else if (c == ')') {
      flush();
      depth = std::max(0, depth - 1);
    } else if (std::isalnum(static_cast<unsigned char>(c)) || c == '_') {
      word += c;
    } else {
      flush();
    }
  }
  flush();
  for (std::size_t i = 0; i + 1 < words.size(); ++i)
    if (words[i] == "order" && words[i + 1] == "by") return true;
  return false;
}

namespace {

std::string canonical(const db::Value& v) {
  if (db::is_null(v)) return "N";
  if (auto n = db::as_number(v); n && !std::holds_alternative<std::string>(v)) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "n%.17g", *n);
    return buf;
  }
  return "s" + std::get<std::string>(v);
}

}  // namespace

bool same_result(const db::ResultSet& gold, const db::ResultSet& predicted, bool ordered) {
  const auto width = gold.columns.size();
  if (predicted.columns.size() != width) return false;
  std::vector<std::size_t> order(width);
  for (std::size_t i = 0; i < width; ++i) order[i] = i;
  {
    std::vector<std::string> g, p;
    for (const auto& c : gold.columns) g.push_back(text::to_lower(c));
    for (const auto& c : predicted.columns) p.push_back(text::to_lower(c));
    auto gs = g, ps = p;
    std::sort(gs.begin(), gs.end());
    std::sort(ps.begin(), ps.end());
    bool unique = std::adjacent_find(gs.begin(), gs.end()) == gs.end();
    if (unique && gs == ps)
      for (std::size_t i = 0; i < width; ++i) order[i] = static_cast<std::size_t>(std::find(p.begin(), p.end(), g[i]) - p.begin());
  }
  if (gold.rows.size() != predicted.rows.size()) return false;
  std::vector<std::vector<std::string>> a, b;
  for (const auto& row : gold.rows) {
    std::vector<std::string> r;
    for (const auto& v : row) r.push_back(canonical(v));
    a.push_back(std::move(r));
  }
  for (const auto& row : predicted.rows) {
    std::vector<std::string> r;
    for (std::size_t i = 0; i < width; ++i) r.push_back(canonical(row[order[i]]));
    b.push_back(std::move(r));
  }
  if (!ordered) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
  }
  return a == b;
}

SqlScore execution_accuracy(const std::vector<SqlExample>& examples, db::Connection& connection) {
  if (examples.empty()) fail(ErrorCode::EmptyExampleSet, "no SQL examples");
  SqlScore s;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto& e = examples[i];
    db::ResultSet gold;
    try {
      text2sql::guard_statement(e.gold_sql);
      gold = connection.query(e.gold_sql);
    } catch (const Error& err) {
      fail(ErrorCode::GoldSqlFails, "gold SQL of example " + std::to_string(i) + " fails: " + err.detail());
    }
    bool match = false;
    std::optional<std::string> error;
    try {
      text2sql::guard_statement(e.predicted_sql);
      auto predicted = connection.query(e.predicted_sql);
      match = same_result(gold, predicted, has_top_level_order_by(e.gold_sql));
    } catch (const Error& err) {
      error = err.detail();
    }
    s.matches.push_back(match);
    s.errors.push_back(error);
    s.accuracy += (match ? 1.0 : 0.0) / static_cast<double>(examples.size());
  }
  return s;
}

CausalMetrics causal_metrics(const std::vector<CausalEvalRecord>& records) {
  if (records.empty()) fail(ErrorCode::EmptyExampleSet, "no causal records");
  CausalMetrics m;
  m.n = records.size();
  const double n = static_cast<double>(records.size());
  std::size_t covered = 0;
  for (const auto& r : records) {
    double err = std::abs(r.predicted_ate - r.true_ate);
    covered += r.covered();
    m.mae += err / n;
    m.mse += err * err / n;
    m.max_abs_error = std::max(m.max_abs_error, err);
  }
  m.ci_coverage_pct = 100.0 * static_cast<double>(covered) / n;
  return m;
}

nlohmann::json to_json(const CausalMetrics& m) {
  return {{"ci_coverage_pct", m.ci_coverage_pct}, {"mae", m.mae}, {"mse", m.mse}, {"max_abs_error", m.max_abs_error}, {"n", m.n}};
}

JudgeResult judge_description(const std::string& description, const std::string& table,
                              const catalog::SchemaCatalog& catalog, const llm::Provider& judge) {
  llm::ChatRequest req;
  req.system_text =
      "[task:judge] You grade a description of a database table on a 5-point scale. 5: accurate, complete and "
      "useful for analysis (purpose, key columns, relationships, data quality issues). 3: mostly correct but "
      "missing important aspects. 1: wrong or uninformative. Reply with JSON: {\"score\": <1-5>, \"rationale\": \"...\"}";
  req.add_context("table_schema", catalog::describe_tables(catalog, {table}));
  req.user_text = "Description of table " + table + ":\n" + description;
  req.output_schema_hint = "JudgeScore";
  nlohmann::json j;
  try {
    j = *judge.chat(req).parsed;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::ParseFailure) throw;
    fail(ErrorCode::JudgeUnavailable, "judge reply for " + table + " could not be parsed");
  }
  JudgeResult r;
  r.raw = j["score"].get<double>();
  if (r.raw < 0 || r.raw > 100) fail(ErrorCode::JudgeUnavailable, "judge score out of range: " + text::fmt_num(r.raw));
  r.scaled = r.raw <= 5.0;
  r.score = r.scaled ? r.raw * 20.0 : r.raw;
  if (j.contains("rationale") && j["rationale"].is_string()) r.rationale = j["rationale"].get<std::string>();
  return r;
}

std::vector<nlohmann::json> load_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::FixtureMissing, "fixture not found: " + path);
  std::vector<nlohmann::json> out;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (text::trim(line).empty()) continue;
    try {
      out.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::parse_error& e) {
      fail(ErrorCode::InvalidConfig, path + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

namespace {

std::shared_ptr<llm::Provider> make(const ProviderFactory& f, const char* what) {
  require(static_cast<bool>(f), std::string("evaluation needs a ") + what + " provider");
  auto p = f();
  require(p != nullptr, std::string("evaluation ") + what + " provider factory returned nothing");
  return p;
}

void need_db(const EvalContext& ctx) {
  require(ctx.catalog && ctx.connection, "this task needs a database connection and catalog");
}

nlohmann::json task1(const std::string& fixtures, const EvalContext& ctx) {
  need_db(ctx);
  auto rows = load_jsonl(fixtures);
  auto provider = make(ctx.provider, "system");
  auto judge = ctx.judge ? make(ctx.judge, "judge") : nullptr;
  const llm::Provider& jp = judge ? *judge : *provider;
  nlohmann::json per = nlohmann::json::array();
  double sum = 0;
  std::size_t scored = 0;
  for (const auto& r : rows) {
    auto table = r.at("table").get<std::string>();
    nlohmann::json item = {{"table", table}};
    try {
      auto overview = explorer::explore(table, *ctx.catalog, *provider);
      item["description"] = overview.description;
      auto j = judge_description(overview.description, table, *ctx.catalog, jp);
      item["score"] = j.score;
      item["raw_score"] = j.raw;
      item["scaled_x20"] = j.scaled;
      sum += j.score;
      ++scored;
    } catch (const Error& e) {
      item["error"] = e.what();
    }
    per.push_back(item);
  }
  nlohmann::json out = {{"task", 1}, {"metric", "judge score (0-100; 5-point rubric x20)"}, {"examples", per}, {"scored", scored}};
  out["mean_score"] = scored ? nlohmann::json(sum / static_cast<double>(scored)) : nlohmann::json();
  return out;
}

nlohmann::json task2(const std::string& fixtures, const EvalContext& ctx) {
  need_db(ctx);
  auto rows = load_jsonl(fixtures);
  auto provider = make(ctx.provider, "system");
  std::vector<RetrievalExample> examples;
  nlohmann::json per = nlohmann::json::array();
  for (const auto& r : rows) {
    RetrievalExample e;
    e.question = r.at("question").get<std::string>();
    for (const auto& t : r.at("tables")) e.gold.insert(t.get<std::string>());
    nlohmann::json item = {{"question", e.question}, {"gold", e.gold}};
    try {
      auto rec = recommender::recommend(e.question, *ctx.catalog, *provider, ctx.candidates);
      for (const auto& t : rec.table_names()) e.recommended.insert(t);
    } catch (const Error& err) {
      item["error"] = err.what();
    }
    item["recommended"] = e.recommended;
    per.push_back(item);
    examples.push_back(std::move(e));
  }
  auto s = recall_precision(examples);
  for (std::size_t i = 0; i < per.size(); ++i) {
    per[i]["recall"] = s.per_recall[i];
    per[i]["precision"] = s.per_precision[i];
  }
  return {{"task", 2}, {"recall", s.recall}, {"precision", s.precision},
          {"empty_recommendations", s.empty_recommendations}, {"examples", per}};
}

nlohmann::json task3(const std::string& fixtures, const EvalContext& ctx) {
  need_db(ctx);
  auto rows = load_jsonl(fixtures);
  auto provider = make(ctx.provider, "system");
  std::vector<SqlExample> examples;
  nlohmann::json per = nlohmann::json::array();
  text2sql::PipelineOptions opts;
  opts.candidates = ctx.candidates;
  for (const auto& r : rows) {
    SqlExample e;
    e.question = r.at("question").get<std::string>();
    e.gold_sql = r.at("SQL").get<std::string>();
    auto request = e.question;
    if (auto ev = r.value("evidence", std::string()); !ev.empty()) request += "\nHint: " + ev;
    nlohmann::json item = {{"question", e.question}, {"gold_sql", e.gold_sql}};
    if (r.contains("question_id")) item["question_id"] = r["question_id"];
    try {
      auto trace = text2sql::run_pipeline(request, *ctx.catalog, *ctx.connection, *provider, opts);
      e.predicted_sql = trace.final_sql.value_or("");
      item["status"] = text2sql::to_string(trace.status);
      item["attempts"] = trace.attempts.size();
    } catch (const Error& err) {
      item["status"] = "error";
      item["error"] = err.what();
    }
    item["predicted_sql"] = e.predicted_sql;
    per.push_back(item);
    examples.push_back(std::move(e));
  }
  auto s = execution_accuracy(examples, *ctx.connection);
  for (std::size_t i = 0; i < per.size(); ++i) {
    per[i]["match"] = static_cast<bool>(s.matches[i]);
    if (s.errors[i]) per[i]["execution_error"] = *s.errors[i];
  }
  return {{"task", 3}, {"execution_accuracy", s.accuracy}, {"examples", per}};
}

analyzer::CausalQuery to_query(const reef::QuerySpec& spec, const catalog::SchemaCatalog& catalog, bool oracle) {
  analyzer::CausalQuery q;
  q.raw_text = spec.question;
  q.effect_question = spec.question;
  q.graph = causal::parse_graph(spec.graph);
  for (const auto& [var, ref] : spec.bindings) {
    q.variable_bindings[var] = analyzer::resolve_binding(ref, catalog);
    if (ref == spec.treatment) q.treatment = var;
    if (ref == spec.outcome) q.outcome = var;
  }
  require(!q.treatment.empty() && !q.outcome.empty(), "query " + spec.id + " does not bind its treatment and outcome");
  if (oracle) q.oracle_sql = spec.oracle_sql;
  return q;
}

nlohmann::json summarize(const std::vector<CausalEvalRecord>& records, std::size_t failures) {
  nlohmann::json j = {{"failures", failures}};
  const auto total = records.size() + failures;
  std::size_t covered = 0;
  for (const auto& r : records) covered += r.covered();
  j["coverage_pct"] = total ? 100.0 * static_cast<double>(covered) / static_cast<double>(total) : 0.0;
  if (!records.empty()) j["metrics"] = to_json(causal_metrics(records));
  return j;
}

nlohmann::json task4(const std::string& fixtures, const EvalContext& ctx) {
  auto manifest = reef::load_manifest(fixtures);
  std::vector<reef::QuerySpec> queries;
  for (const auto& e : manifest.queries) queries.push_back(e.query);
  require(!queries.empty(), "manifest has no queries");
  require(!ctx.seeds.empty(), "task 4 needs at least one seed");

  std::map<std::string, std::vector<CausalEvalRecord>> all;
  std::map<std::string, std::size_t> all_failures;
  nlohmann::json per_seed = nlohmann::json::array();
  for (auto seed : ctx.seeds) {
    auto cfg = manifest.config;
    cfg.seed = seed;
    auto database = reef::generate(cfg);
    auto conn = db::Connection::open(":memory:", db::OpenMode::Create);
    reef::load_into(database, conn);
    auto cat = catalog::snapshot(conn);
    auto truth = reef::compute_ground_truth(cfg, queries);

    nlohmann::json seed_report = {{"seed", seed}};
    for (const auto& mode : ctx.modes) {
      require(mode == "oracle" || mode == "agentic" || mode == "baseline", "unknown task 4 mode " + mode);
      std::vector<CausalEvalRecord> records;
      std::size_t failures = 0;
      nlohmann::json rows = nlohmann::json::array();
      std::shared_ptr<llm::Provider> provider;
      if (mode != "baseline") provider = make(ctx.provider, "system");
      for (const auto& t : truth.queries) {
        nlohmann::json row = {{"query", t.query.id}, {"true_ate", t.true_ate}, {"true_ci", {t.ci_low, t.ci_high}}};
        std::optional<double> predicted;
        if (mode == "baseline") {
          predicted = reef::naive_difference(conn, t.query);
        } else {
          analyzer::AnalyzeOptions opts;
          opts.seed = seed;
          opts.model.bootstrap = ctx.bootstrap;
          auto report = analyzer::analyze(to_query(t.query, cat, mode == "oracle"), cat, conn, *provider, opts);
          row["status"] = report.status;
          if (report.complete()) {
            predicted = report.result->estimate.ate;
            row["method"] = report.result->estimate.method;
            row["estimate_ci"] = {report.result->estimate.ci_low, report.result->estimate.ci_high};
          } else {
            row["failed_stage"] = report.failed_stage.value_or("");
            row["error"] = report.error.value_or("");
          }
          if (report.dataset) row["sql"] = report.dataset->sql;
        }
        if (predicted) {
          CausalEvalRecord r{t.query.id, *predicted, t.true_ate, t.ci_low, t.ci_high};
          row["predicted_ate"] = *predicted;
          row["covered"] = r.covered();
          records.push_back(r);
        } else {
          ++failures;
          row["covered"] = false;
        }
        rows.push_back(row);
      }
      auto summary = summarize(records, failures);
      summary["records"] = rows;
      seed_report[mode] = summary;
      all[mode].insert(all[mode].end(), records.begin(), records.end());
      all_failures[mode] += failures;
    }
    per_seed.push_back(seed_report);
  }
  nlohmann::json aggregate = nlohmann::json::object();
  for (const auto& mode : ctx.modes) aggregate[mode] = summarize(all[mode], all_failures[mode]);
  return {{"task", 4}, {"seeds", ctx.seeds}, {"queries", queries.size()}, {"aggregate", aggregate}, {"per_seed", per_seed}};
}

}  // namespace

nlohmann::json run_task(int task, const std::string& fixtures, const EvalContext& context) {
  switch (task) {
    case 1: return task1(fixtures, context);
    case 2: return task2(fixtures, context);
    case 3: return task3(fixtures, context);
    case 4: return task4(fixtures, context);
    default: fail(ErrorCode::Precondition, "task must be 1, 2, 3 or 4");
  }
}

}  // namespace orca::eval
