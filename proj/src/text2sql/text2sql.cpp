#include "orca/text2sql/text2sql.h"

#include <cctype>
#include <fstream>
#include <sstream>

#include "orca/common/text.h"

namespace orca::text2sql {

std::string_view to_string(Diagnosis d) {
  switch (d) {
    case Diagnosis::Ok: return "ok";
    case Diagnosis::OverlyRestrictiveLogic: return "overly_restrictive_logic";
    case Diagnosis::QueryConstructionFlaw: return "query_construction_flaw";
  }
  return "ok";
}

std::string_view to_string(PipelineStatus s) {
  switch (s) {
    case PipelineStatus::Success: return "success";
    case PipelineStatus::ExhaustedCorrections: return "exhausted_corrections";
    case PipelineStatus::RejectedByValidation: return "rejected_by_validation";
  }
  return "";
}

void SqlPipelineTrace::record(std::string stage, nlohmann::json payload) {
  events.push_back({std::move(stage), std::move(payload)});
}

nlohmann::json to_json(const SqlAttempt& a) {
  nlohmann::json j = {{"attempt_index", a.attempt_index}, {"round", a.round}, {"sql_text", a.sql_text},
                      {"execution_ok", a.execution_ok}};
  if (a.error_message) j["error_message"] = *a.error_message;
  if (a.row_count) j["row_count"] = *a.row_count;
  return j;
}

nlohmann::json to_json(const ValidationVerdict& v) {
  return {{"satisfies_request", v.satisfies_request}, {"diagnosis", to_string(v.diagnosis)}, {"feedback", v.feedback}};
}

nlohmann::json to_json(const SqlPipelineTrace& t) {
  nlohmann::json attempts = nlohmann::json::array(), rounds = nlohmann::json::array();
  for (const auto& a : t.attempts) attempts.push_back(to_json(a));
  for (const auto& v : t.validation_rounds) rounds.push_back(to_json(v));
  nlohmann::json j = {{"request", t.request},
                      {"sub_questions", t.sub_questions},
                      {"recommendation", recommender::to_json(t.recommendation)},
                      {"attempts", attempts},
                      {"validation_rounds", rounds},
                      {"status", to_string(t.status)}};
  if (t.final_sql) j["final_sql"] = *t.final_sql;
  if (t.result_preview) j["result_preview"] = db::to_json(*t.result_preview, kPreviewRows);
  return j;
}

std::string to_jsonl(const SqlPipelineTrace& t) {
  std::string out;
  for (std::size_t i = 0; i < t.events.size(); ++i) {
    nlohmann::json line = {{"seq", i}, {"stage", t.events[i].stage}, {"data", t.events[i].payload}};
    out += line.dump() + "\n";
  }
  return out;
}

std::vector<FewShotExample> load_fewshot(const std::string& dialect, const std::string& data_dir) {
  auto path = data_dir + "/fewshot/" + dialect + ".json";
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot read few-shot examples: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvalidConfig, path + ": " + e.what());
  }
  std::vector<FewShotExample> out;
  for (const auto& e : j.at("examples"))
    out.push_back({e.at("question"), e.value("tables", ""), e.at("sub_questions").get<std::vector<std::string>>(),
                   e.at("sql")});
  return out;
}

namespace {

/// SQL with comments removed and literals blanked, so keyword and
/// separator scans cannot be fooled by quoted text.
std::string strip_sql(const std::string& sql) {
  std::string out;
  out.reserve(sql.size());
  for (std::size_t i = 0; i < sql.size(); ++i) {
    char c = sql[i];
    if (c == '-' && i + 1 < sql.size() && sql[i + 1] == '-') {
      while (i < sql.size() && sql[i] != '\n') ++i;
      out += ' ';
    } else if (c == '/' && i + 1 < sql.size() && sql[i + 1] == '*') {
      auto end = sql.find("*/", i + 2);
      i = end == std::string::npos ? sql.size() : end + 1;
      out += ' ';
    } else if (c == '\'' || c == '"' || c == '`' || c == '[') {
      char close = c == '[' ? ']' : c;
      out += ' ';
      for (++i; i < sql.size(); ++i) {
        if (sql[i] == close) {
          if (close != ']' && i + 1 < sql.size() && sql[i + 1] == close) {
            ++i;
            continue;
          }
          break;
        }
      }
      out += 'x';
    } else {
      out += c;
    }
  }
  return out;
}

std::string first_keyword(const std::string& stripped) {
  std::size_t i = 0;
  while (i < stripped.size() && (std::isspace(static_cast<unsigned char>(stripped[i])) || stripped[i] == '(')) ++i;
  std::size_t j = i;
  while (j < stripped.size() && std::isalpha(static_cast<unsigned char>(stripped[j]))) ++j;
  return text::to_lower(stripped.substr(i, j - i));
}

std::string clean_sql(std::string sql) {
  sql = text::trim(sql);
  while (!sql.empty() && sql.back() == ';') sql = text::trim(sql.substr(0, sql.size() - 1));
  return sql;
}

}  // namespace

std::size_t count_statements(const std::string& sql) {
  std::size_t n = 0;
  for (const auto& part : text::split(strip_sql(sql), ';'))
    if (!text::trim(part).empty()) ++n;
  return n;
}

void guard_statement(const std::string& sql) {
  auto stripped = strip_sql(sql);
  auto n = count_statements(sql);
  if (n != 1) fail(ErrorCode::ForbiddenStatement, "expected exactly one statement, found " + std::to_string(n));
  auto kw = first_keyword(stripped);
  if (kw != "select" && kw != "with" && kw != "values")
    fail(ErrorCode::ForbiddenStatement, "only SELECT queries are allowed, got " + (kw.empty() ? "?" : kw));
}

namespace {

const char* kGenerateSystem =
    "[task:text2sql_generate] You translate analytics questions into one SQLite SELECT statement. First break "
    "the question into ordered sub-questions, then write a single statement that answers all of them. Use only "
    "the tables and columns listed. Reply with JSON: {\"sub_questions\": [\"...\"], \"sql\": \"SELECT ...\"}";

const char* kCorrectSystem =
    "[task:text2sql_correct] A SQL statement failed when executed. Fix it using the error message and the table "
    "metadata so that it answers the user request. Reply with JSON: {\"sql\": \"SELECT ...\"}";

const char* kValidateSystem =
    "[task:text2sql_validate] Check whether the SQL statement and its result fulfil the user request and are free "
    "of logical errors. If not, say whether the query logic is correct but overly restrictive, or whether the query "
    "is constructed wrongly, and give concrete feedback. Reply with JSON: {\"satisfies_request\": true|false, "
    "\"diagnosis\": \"ok|overly_restrictive_logic|query_construction_flaw\", \"feedback\": \"...\"}";

std::string few_shot_block(const std::vector<FewShotExample>& examples) {
  std::ostringstream os;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto& e = examples[i];
    os << "Example " << i + 1 << "\nQuestion: " << e.question << "\nTables: " << e.tables << "\nSub-questions:\n";
    for (std::size_t k = 0; k < e.sub_questions.size(); ++k) os << "  " << k + 1 << ". " << e.sub_questions[k] << "\n";
    os << "SQL: " << e.sql << "\n\n";
  }
  return os.str();
}

std::string table_metadata(const recommender::Recommendation& rec, const catalog::SchemaCatalog& catalog) {
  return catalog::describe_tables(catalog, rec.table_names());
}

llm::ChatResponse call(const llm::ChatRequest& req, GenerateContext& ctx, const std::string& stage) {
  auto resp = ctx.provider.chat(req);
  if (ctx.trace)
    ctx.trace->record(stage, {{"prompt", req.render()}, {"reply", resp.text}, {"calls", resp.calls}});
  return resp;
}

}  // namespace

Generation generate_sql(const std::string& request, const recommender::Recommendation& rec, GenerateContext& ctx,
                        const std::optional<std::string>& validation_feedback) {
  require(!rec.tables.empty(), "generate_sql: recommendation is empty");
  llm::ChatRequest req;
  req.system_text = kGenerateSystem;
  req.add_context("few_shot_examples", few_shot_block(ctx.few_shot));
  req.add_context("table_metadata", table_metadata(rec, ctx.catalog));
  if (validation_feedback) req.add_context("validation_feedback", *validation_feedback);
  req.user_text = request;
  req.output_schema_hint = "SqlGeneration";

  for (int attempt = 0; attempt < 2; ++attempt) {
    llm::ChatResponse resp;
    try {
      resp = call(req, ctx, "generate");
    } catch (const Error& e) {
      if (e.code() != ErrorCode::ParseFailure) throw;
      fail(ErrorCode::GenerationParseFailure, "no parseable SQL in generation reply");
    }
    Generation g;
    for (const auto& s : (*resp.parsed)["sub_questions"])
      if (s.is_string()) g.sub_questions.push_back(s.get<std::string>());
    g.sql = clean_sql((*resp.parsed)["sql"].get<std::string>());
    if (count_statements(g.sql) == 1) return g;
    req.add_context("previous_reply", resp.text);
    req.user_text = request + "\n\nYour previous reply contained " + std::to_string(count_statements(g.sql)) +
                    " statements. Return exactly one SQL statement.";
  }
  fail(ErrorCode::GenerationParseFailure, "generation did not produce a single SQL statement");
}

Execution execute_sql(const std::string& sql, db::Connection& connection, int attempt_index) {
  guard_statement(sql);
  Execution ex;
  ex.attempt.attempt_index = attempt_index;
  ex.attempt.sql_text = sql;
  try {
    if (!connection.is_read_only(sql)) fail(ErrorCode::ForbiddenStatement, "statement would modify the database");
    ex.result = connection.query(sql);
    ex.attempt.execution_ok = true;
    ex.attempt.row_count = static_cast<std::int64_t>(ex.result->rows.size());
  } catch (const Error& e) {
    if (e.code() != ErrorCode::DatabaseError) throw;
    ex.attempt.execution_ok = false;
    ex.attempt.error_message = e.detail();
    ex.result.reset();
  }
  return ex;
}

std::string self_correct(const SqlAttempt& previous, int attempts_so_far, const std::string& request,
                         const recommender::Recommendation& rec, GenerateContext& ctx) {
  require(!previous.execution_ok, "self_correct: previous attempt succeeded");
  if (attempts_so_far >= kMaxAttempts)
    fail(ErrorCode::AttemptsExhausted, "already made " + std::to_string(attempts_so_far) + " attempts");
  llm::ChatRequest req;
  req.system_text = kCorrectSystem;
  req.add_context("faulty_sql", previous.sql_text);
  req.add_context("error_message", previous.error_message.value_or(""));
  req.add_context("table_metadata", table_metadata(rec, ctx.catalog));
  req.add_context("user_request", request);
  req.user_text = "Return the corrected SQL statement.";
  req.output_schema_hint = "SqlCorrection";
  try {
    return clean_sql((*call(req, ctx, "self_correct").parsed)["sql"].get<std::string>());
  } catch (const Error& e) {
    if (e.code() != ErrorCode::ParseFailure) throw;
    fail(ErrorCode::GenerationParseFailure, "no parseable SQL in correction reply");
  }
}

ValidationVerdict validate_result(const std::string& request, const std::string& final_sql, const db::ResultSet& preview,
                                  const recommender::Recommendation& rec, GenerateContext& ctx) {
  llm::ChatRequest req;
  req.system_text = kValidateSystem;
  req.add_context("user_request", request);
  req.add_context("sql", final_sql);
  req.add_context("result_preview",
                  db::to_json(preview, kPreviewRows).dump() + "\n(" + std::to_string(preview.rows.size()) + " rows total)");
  req.add_context("table_metadata", table_metadata(rec, ctx.catalog));
  req.user_text = "Does the result answer the request?";
  req.output_schema_hint = "ValidationVerdict";

  ValidationVerdict v;
  nlohmann::json j;
  try {
    j = *call(req, ctx, "validate").parsed;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::ParseFailure) throw;
    v.feedback = "validation unavailable";
    return v;
  }
  v.satisfies_request = j["satisfies_request"].get<bool>();
  v.feedback = j.value("feedback", std::string());
  auto d = text::to_lower(j.value("diagnosis", std::string()));
  if (v.satisfies_request) {
    v.diagnosis = Diagnosis::Ok;
  } else {
    v.diagnosis = d == "overly_restrictive_logic" ? Diagnosis::OverlyRestrictiveLogic : Diagnosis::QueryConstructionFlaw;
  }
  return v;
}

SqlPipelineTrace run_pipeline(const std::string& request, const catalog::SchemaCatalog& catalog,
                              db::Connection& connection, const llm::Provider& provider,
                              const PipelineOptions& options) {
  SqlPipelineTrace trace;
  trace.request = request;
  try {
    trace.recommendation = recommender::recommend(request, catalog, provider, options.candidates);
  } catch (const Error& e) {
    trace.record("recommend_failed", {{"error", e.what()}});
    throw PipelineError(e, std::move(trace));
  }
  trace.record("recommend", recommender::to_json(trace.recommendation));
  auto rec = trace.recommendation;
  auto events = std::move(trace.events);
  auto out = run_pipeline_with(request, std::move(rec), catalog, connection, provider, options);
  events.insert(events.end(), out.events.begin(), out.events.end());
  out.events = std::move(events);
  return out;
}

SqlPipelineTrace run_pipeline_with(const std::string& request, recommender::Recommendation rec,
                                   const catalog::SchemaCatalog& catalog, db::Connection& connection,
                                   const llm::Provider& provider, const PipelineOptions& options) {
  SqlPipelineTrace trace;
  trace.request = request;
  trace.recommendation = std::move(rec);
  int max_attempts = std::clamp(options.max_attempts, 1, kMaxAttempts);
  GenerateContext ctx{catalog, provider, load_fewshot(), &trace};

  try {
    std::optional<std::string> feedback;
    for (int round = 1; round <= kMaxRounds; ++round) {
      auto gen = generate_sql(request, trace.recommendation, ctx, feedback);
      trace.sub_questions = gen.sub_questions;
      std::string sql = gen.sql;
      std::optional<db::ResultSet> result;
      for (int i = 1; i <= max_attempts; ++i) {
        Execution ex;
        try {
          ex = execute_sql(sql, connection, i);
        } catch (const Error& e) {
          if (e.code() != ErrorCode::ForbiddenStatement) throw;
          // Refused by the guard: counts as a failed attempt so the model can fix it.
          ex.attempt = {i, round, sql, false, e.detail(), std::nullopt};
        }
        ex.attempt.round = round;
        trace.attempts.push_back(ex.attempt);
        trace.record("execute", to_json(ex.attempt));
        if (ex.attempt.execution_ok) {
          result = std::move(ex.result);
          break;
        }
        if (i == max_attempts) break;
        sql = self_correct(ex.attempt, i, request, trace.recommendation, ctx);
      }
      if (!result) {
        trace.status = PipelineStatus::ExhaustedCorrections;
        trace.record("done", {{"status", to_string(trace.status)}});
        return trace;
      }
      auto verdict = validate_result(request, sql, *result, trace.recommendation, ctx);
      trace.validation_rounds.push_back(verdict);
      trace.record("validation", to_json(verdict));
      if (verdict.satisfies_request || round == kMaxRounds) {
        trace.status = verdict.satisfies_request ? PipelineStatus::Success : PipelineStatus::RejectedByValidation;
        if (verdict.satisfies_request) {
          trace.final_sql = sql;
          if (result->rows.size() > kPreviewRows) result->rows.resize(kPreviewRows);
          trace.result_preview = std::move(*result);
        }
        trace.record("done", {{"status", to_string(trace.status)}});
        return trace;
      }
      feedback = std::string(to_string(verdict.diagnosis)) + ": " + verdict.feedback;
    }
  } catch (const PipelineError&) {
    throw;
  } catch (const Error& e) {
    trace.record("error", {{"error", e.what()}});
    throw PipelineError(e, std::move(trace));
  }
  return trace;
}

}  // namespace orca::text2sql
