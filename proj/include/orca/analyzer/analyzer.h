#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "orca/catalog/catalog.h"
#include "orca/causal/estimate.h"
#include "orca/causal/graph.h"
#include "orca/db/connection.h"
#include "orca/llm/provider.h"
#include "orca/text2sql/text2sql.h"

namespace orca::analyzer {

struct Binding {
  std::string table;
  std::string column;

  std::string qualified() const { return table + "." + column; }
  bool operator==(const Binding&) const = default;
};

/// "table.column", or a bare column name that is unique across the catalog.
Binding resolve_binding(const std::string& ref, const catalog::SchemaCatalog& catalog);

struct CausalQuery {
  std::string raw_text;
  std::string treatment;
  std::string outcome;
  causal::CausalGraph graph;
  std::map<std::string, Binding> variable_bindings;
  std::string effect_question;
  /// When set, this SQL feeds the analysis directly and text2sql is skipped.
  std::optional<std::string> oracle_sql;
};

nlohmann::json to_json(const CausalQuery& q);
/// Inverse of to_json; bindings are re-resolved against the catalog.
CausalQuery query_from_json(const nlohmann::json& j, const catalog::SchemaCatalog& catalog);

/// Checks treatment/outcome/graph against the bindings and the catalog.
/// Throws UnboundVariable.
void check_bindings(const CausalQuery& q, const catalog::SchemaCatalog& catalog);

/// Model-assisted extraction of a CausalQuery from free text. The graph must
/// be stated in the text (edge list) or returned by the model; otherwise
/// nullopt is returned together with a clarification question.
struct ParsedQuery {
  std::optional<CausalQuery> query;
  std::optional<std::string> clarification;
};
ParsedQuery parse_causal_query(const std::string& text, const catalog::SchemaCatalog& catalog,
                               const llm::Provider& provider);

enum class Encoding { None, Binary01, IntegerCodes, OneHot, EpochDays };
std::string_view to_string(Encoding e);

struct EncodingRecord {
  std::string original_type;
  Encoding encoding = Encoding::None;
  bool zscore = false;
  /// Category levels for binary01 / integer_codes / one_hot, in code order.
  std::vector<std::string> levels;
  /// Dataset columns that carry this variable (several for one_hot).
  std::vector<std::string> columns;
};

struct PreparedDataset {
  causal::Dataset data;
  std::map<std::string, EncodingRecord> encodings;
  std::size_t row_count = 0;
  std::size_t dropped_rows = 0;
  std::map<std::string, std::size_t> drop_reasons;
  std::string sql;

  /// Dataset columns of the given graph variables, in order.
  std::vector<std::string> columns_for(const std::vector<std::string>& variables) const;
  /// First `n` rows as JSON objects keyed by column.
  nlohmann::json sample(std::size_t n) const;
};

nlohmann::json to_json(const PreparedDataset& d);

inline constexpr std::size_t kMaxOneHotLevels = 10;
inline constexpr std::size_t kConfigSampleRows = 20;

struct PrepareOptions {
  bool normalize_covariates = false;
  text2sql::PipelineOptions sql;
};

/// Retrieval failure carrying the text2sql trace.
class RetrievalError : public Error {
 public:
  RetrievalError(const std::string& message, std::optional<text2sql::SqlPipelineTrace> trace)
      : Error(ErrorCode::RetrievalFailed, message), trace_(std::move(trace)) {}
  const std::optional<text2sql::SqlPipelineTrace>& trace() const { return trace_; }

 private:
  std::optional<text2sql::SqlPipelineTrace> trace_;
};

/// Encodes raw result rows; exposed so callers holding rows can reuse it.
PreparedDataset encode(const CausalQuery& q, const db::ResultSet& rows, const catalog::SchemaCatalog& catalog,
                       bool normalize_covariates);

PreparedDataset prepare_data(const CausalQuery& q, const catalog::SchemaCatalog& catalog, db::Connection& connection,
                             const llm::Provider& provider, const PrepareOptions& options = {},
                             std::optional<text2sql::SqlPipelineTrace>* trace_out = nullptr);

struct ConfigSelection {
  causal::CausalModelSpec spec;
  double confidence = 1.0;
  bool used_fallback = false;
  std::vector<std::string> notes;
};

ConfigSelection select_config(const CausalQuery& q, const PreparedDataset& data, const llm::Provider& provider,
                              std::uint64_t seed = 0);

/// Applies the deterministic repair rules to a requested spec.
void repair_spec(causal::CausalModelSpec& spec, const PreparedDataset& data, std::vector<std::string>& notes);

struct ModelResult {
  causal::Estimand estimand;
  causal::EffectEstimate estimate;
  std::optional<causal::RefutationResult> refutation;
};

struct ModelOptions {
  std::size_t bootstrap = 500;
  double ci_level = 0.95;
};

ModelResult implement_model(const causal::CausalModelSpec& spec, const PreparedDataset& data,
                            const ModelOptions& options = {});

struct Interpretation {
  std::string text;
  std::vector<std::string> notes;
};

inline constexpr std::size_t kMinSentences = 3;
inline constexpr std::size_t kMaxSentences = 6;

Interpretation interpret(const ModelResult& result, const CausalQuery& q, const llm::Provider& provider,
                         const std::optional<std::string>& extra_context = std::nullopt);

struct StageEvent {
  std::string stage;
  nlohmann::json payload;
};

struct AnalysisReport {
  std::string status = "complete";  // complete | failed
  std::optional<std::string> failed_stage;
  std::optional<std::string> error;
  std::optional<ErrorCode> error_code;
  CausalQuery query;
  std::optional<PreparedDataset> dataset;
  std::optional<causal::CausalModelSpec> spec;
  std::optional<ModelResult> result;
  std::string interpretation;
  std::vector<StageEvent> trace;

  bool complete() const { return status == "complete"; }
};

nlohmann::json to_json(const AnalysisReport& r, bool include_dataset = false);
/// Human-readable log in stage order.
std::string render_log(const AnalysisReport& r);

struct AnalyzeOptions {
  PrepareOptions prepare;
  ModelOptions model;
  std::uint64_t seed = 0;
  /// Overrides applied after config selection (expert feedback).
  std::optional<causal::Estimation> estimation;
  std::optional<std::optional<causal::Refutation>> refutation;
  /// Forwarded to the interpretation prompt.
  std::optional<std::string> feedback;
  /// Called as each trace event is recorded, for live progress.
  std::function<void(const StageEvent&)> on_stage;
};

/// Full pipeline. Stage failures produce a partial report instead of throwing.
AnalysisReport analyze(const CausalQuery& q, const catalog::SchemaCatalog& catalog, db::Connection& connection,
                       const llm::Provider& provider, const AnalyzeOptions& options = {});

/// Re-runs from model implementation on the report's prepared data with an
/// overridden spec; used for feedback refinement.
AnalysisReport rerun_model(const AnalysisReport& previous, const causal::CausalModelSpec& spec,
                           const llm::Provider& provider, const AnalyzeOptions& options = {});

}  // namespace orca::analyzer
