#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "orca/catalog/catalog.h"
#include "orca/common/error.h"
#include "orca/db/connection.h"
#include "orca/llm/provider.h"
#include "orca/recommender/recommender.h"

namespace orca::text2sql {

inline constexpr int kMaxAttempts = 3;
inline constexpr int kMaxRounds = 2;
inline constexpr std::size_t kPreviewRows = 50;

struct SqlAttempt {
  int attempt_index = 1;  // 1..3 within a round
  int round = 1;          // 1 = initial generation, 2 = after validation feedback
  std::string sql_text;
  bool execution_ok = false;
  std::optional<std::string> error_message;
  std::optional<std::int64_t> row_count;
};

enum class Diagnosis { Ok, OverlyRestrictiveLogic, QueryConstructionFlaw };
std::string_view to_string(Diagnosis d);

struct ValidationVerdict {
  bool satisfies_request = true;
  Diagnosis diagnosis = Diagnosis::Ok;
  std::string feedback;
};

enum class PipelineStatus { Success, ExhaustedCorrections, RejectedByValidation };
std::string_view to_string(PipelineStatus s);

/// One stage event. Provider calls carry the rendered prompt and the raw
/// reply so a run can be replayed.
struct TraceEvent {
  std::string stage;
  nlohmann::json payload;
};

struct SqlPipelineTrace {
  std::string request;
  std::vector<std::string> sub_questions;
  recommender::Recommendation recommendation;
  std::vector<SqlAttempt> attempts;
  std::vector<ValidationVerdict> validation_rounds;
  std::optional<std::string> final_sql;
  std::optional<db::ResultSet> result_preview;
  PipelineStatus status = PipelineStatus::ExhaustedCorrections;
  std::vector<TraceEvent> events;

  void record(std::string stage, nlohmann::json payload);
};

nlohmann::json to_json(const SqlAttempt& a);
nlohmann::json to_json(const ValidationVerdict& v);
nlohmann::json to_json(const SqlPipelineTrace& t);
/// One JSON object per line, one line per event.
std::string to_jsonl(const SqlPipelineTrace& t);

/// Thrown when a stage fails mid-pipeline; carries what ran so far.
class PipelineError : public Error {
 public:
  PipelineError(const Error& cause, SqlPipelineTrace trace)
      : Error(cause.code(), cause.detail()), trace_(std::move(trace)) {}
  const SqlPipelineTrace& trace() const { return trace_; }

 private:
  SqlPipelineTrace trace_;
};

struct FewShotExample {
  std::string question;
  std::string tables;
  std::vector<std::string> sub_questions;
  std::string sql;
};

/// Examples shipped under the data directory, `fewshot/<dialect>.json`.
std::vector<FewShotExample> load_fewshot(const std::string& dialect = "sqlite", const std::string& data_dir = ORCA_DATA_DIR);

struct Generation {
  std::vector<std::string> sub_questions;
  std::string sql;
};

/// Number of statements in `sql`, ignoring comments, string literals and a
/// trailing semicolon.
std::size_t count_statements(const std::string& sql);

/// Lexical half of the read-only guard: exactly one statement that starts
/// with SELECT, WITH or VALUES. Throws ForbiddenStatement.
void guard_statement(const std::string& sql);

struct GenerateContext {
  const catalog::SchemaCatalog& catalog;
  const llm::Provider& provider;
  std::vector<FewShotExample> few_shot;
  SqlPipelineTrace* trace = nullptr;  // optional event sink
};

Generation generate_sql(const std::string& request, const recommender::Recommendation& rec, GenerateContext& ctx,
                        const std::optional<std::string>& validation_feedback = std::nullopt);

struct Execution {
  SqlAttempt attempt;
  std::optional<db::ResultSet> result;
};

/// Runs a guarded read-only statement. Engine errors are captured in the
/// attempt; guard violations throw ForbiddenStatement without touching the
/// database.
Execution execute_sql(const std::string& sql, db::Connection& connection, int attempt_index = 1);

std::string self_correct(const SqlAttempt& previous, int attempts_so_far, const std::string& request,
                         const recommender::Recommendation& rec, GenerateContext& ctx);

ValidationVerdict validate_result(const std::string& request, const std::string& final_sql, const db::ResultSet& preview,
                                  const recommender::Recommendation& rec, GenerateContext& ctx);

struct PipelineOptions {
  int max_attempts = kMaxAttempts;
  std::size_t candidates = recommender::kDefaultCandidates;
};

SqlPipelineTrace run_pipeline(const std::string& request, const catalog::SchemaCatalog& catalog,
                              db::Connection& connection, const llm::Provider& provider,
                              const PipelineOptions& options = {});

/// Same pipeline with the recommendation supplied by the caller.
SqlPipelineTrace run_pipeline_with(const std::string& request, recommender::Recommendation rec,
                                   const catalog::SchemaCatalog& catalog, db::Connection& connection,
                                   const llm::Provider& provider, const PipelineOptions& options = {});

}  // namespace orca::text2sql
