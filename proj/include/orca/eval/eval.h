#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "orca/catalog/catalog.h"
#include "orca/db/connection.h"
#include "orca/llm/provider.h"

namespace orca::eval {

// ---- table retrieval ------------------------------------------------------

struct RetrievalExample {
  std::string question;
  std::set<std::string> gold;
  std::set<std::string> recommended;
};

struct RetrievalScore {
  double recall = 0;
  double precision = 0;
  std::vector<double> per_recall;
  std::vector<double> per_precision;
  /// Indices of examples with no recommended table (precision counted as 0).
  std::vector<std::size_t> empty_recommendations;
};

/// Averages of |G n R| / |G| and |G n R| / |R|. Throws EmptyExampleSet, and
/// Precondition when an example has an empty gold set.
RetrievalScore recall_precision(const std::vector<RetrievalExample>& examples);

// ---- execution accuracy ---------------------------------------------------

struct SqlExample {
  std::string question;
  std::string gold_sql;
  std::string predicted_sql;
};

struct SqlScore {
  double accuracy = 0;
  std::vector<bool> matches;
  /// Error text of predicted queries that failed, by example index.
  std::vector<std::optional<std::string>> errors;
};

/// True when the statement ends in an ORDER BY outside any parenthesis.
bool has_top_level_order_by(const std::string& sql);

/// Result equality: the predicted columns are reordered to the gold
/// projection when their names are a permutation of it; rows compare as
/// multisets (or sequences when `ordered`); NULL equals NULL and 1 equals 1.0.
bool same_result(const db::ResultSet& gold, const db::ResultSet& predicted, bool ordered);

/// Throws EmptyExampleSet, GoldSqlFails.
SqlScore execution_accuracy(const std::vector<SqlExample>& examples, db::Connection& connection);

// ---- treatment effects ----------------------------------------------------

struct CausalEvalRecord {
  std::string query_id;
  double predicted_ate = 0;
  double true_ate = 0;
  double ci_low = 0;
  double ci_high = 0;

  bool covered() const { return ci_low <= predicted_ate && predicted_ate <= ci_high; }
};

struct CausalMetrics {
  double ci_coverage_pct = 0;
  double mae = 0;
  double mse = 0;
  double max_abs_error = 0;
  std::size_t n = 0;
};

/// Throws EmptyExampleSet.
CausalMetrics causal_metrics(const std::vector<CausalEvalRecord>& records);
nlohmann::json to_json(const CausalMetrics& m);

// ---- description judge ----------------------------------------------------

struct JudgeResult {
  /// On the 0-100 axis.
  double score = 0;
  /// The model's own number before scaling.
  double raw = 0;
  bool scaled = false;
  std::string rationale;
};

/// Scores a table description with a rubric prompt. Replies on the 1-5
/// rubric are multiplied by 20; replies already in (5, 100] are kept.
/// Throws JudgeUnavailable.
JudgeResult judge_description(const std::string& description, const std::string& table,
                              const catalog::SchemaCatalog& catalog, const llm::Provider& judge);

// ---- task runner ----------------------------------------------------------

using ProviderFactory = std::function<std::shared_ptr<llm::Provider>()>;

struct EvalContext {
  /// Database and catalog under test (tasks 1-3).
  const catalog::SchemaCatalog* catalog = nullptr;
  db::Connection* connection = nullptr;
  /// A fresh system-under-test provider per run (task 4 builds one per seed and mode).
  ProviderFactory provider;
  /// Judge for task 1; defaults to `provider`.
  ProviderFactory judge;
  /// Task 4.
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  std::vector<std::string> modes{"oracle", "agentic", "baseline"};
  std::size_t bootstrap = 500;
  std::size_t candidates = 20;
};

/// Loads line-delimited JSON records. Throws FixtureMissing.
std::vector<nlohmann::json> load_jsonl(const std::string& path);

/// Task 1: table list -> explorer description -> judge score.
/// Task 2: {question, tables} -> recommender -> recall/precision.
/// Task 3: {question, SQL} (BIRD field names) -> text2sql -> execution accuracy.
/// Task 4: ground-truth manifest -> causal analyzer per seed and mode -> effect metrics.
/// Throws FixtureMissing, Precondition (bad task or missing handles).
nlohmann::json run_task(int task, const std::string& fixtures, const EvalContext& context);

}  // namespace orca::eval
