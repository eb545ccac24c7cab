#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "orca/db/connection.h"
#include "orca/llm/provider.h"

namespace orca::catalog {

struct ColumnStats {
  std::string name;
  std::string declared_type;
  std::int64_t null_count = 0;
  std::int64_t row_count = 0;
  double null_ratio = 0.0;
  std::int64_t unique_count = 0;
  std::optional<double> mean;
  std::optional<double> median;
  /// Sample standard deviation; used by the outlier screen.
  std::optional<double> std_dev;
  std::optional<db::Value> min;
  std::optional<db::Value> max;
  std::optional<double> skewness;
  std::vector<db::Value> example_values;

  bool numeric() const;
  bool operator==(const ColumnStats&) const = default;
};

struct ForeignKeyEdge {
  std::string from_table;
  std::string from_column;
  std::string to_table;
  std::string to_column;

  auto operator<=>(const ForeignKeyEdge&) const = default;
};

struct TableInfo {
  std::string name;
  std::vector<ColumnStats> columns;
  std::vector<std::string> primary_key;
  std::int64_t row_count = 0;
  /// Rows that fed the distributional statistics (mean, median, skewness,
  /// examples). Equals row_count unless the table was sampled.
  std::int64_t sampled_rows = 0;

  const ColumnStats* find_column(const std::string& column) const;
  bool operator==(const TableInfo&) const = default;
};

struct SchemaCatalog {
  static constexpr int kFormatVersion = 1;

  std::string database_id;
  std::string connection;
  std::map<std::string, TableInfo> tables;
  std::vector<ForeignKeyEdge> fk_edges;
  std::map<std::string, llm::EmbeddingVector> embeddings;
  std::int64_t captured_at = 0;  // unix epoch milliseconds

  const TableInfo* find_table(const std::string& table) const;
  bool has_column(const std::string& table, const std::string& column) const;
  std::vector<ForeignKeyEdge> edges_touching(const std::string& table) const;
  bool operator==(const SchemaCatalog&) const = default;
};

struct MetadataDoc {
  enum class Kind { Table, Column };

  std::string doc_id;
  Kind kind = Kind::Table;
  std::string table;
  std::optional<std::string> column;
  std::string text;

  bool operator==(const MetadataDoc&) const = default;
};

struct SnapshotOptions {
  /// Tables larger than this are reservoir-sampled for distributional stats.
  std::int64_t max_scan_rows = 1'000'000;
  std::uint64_t sample_seed = 0;
};

SchemaCatalog snapshot(db::Connection& connection, const SnapshotOptions& options = {});

/// Stats of one column from raw values (NULLs included). Exposed for tests
/// and for callers that already hold the data.
ColumnStats compute_column_stats(const std::string& name, const std::string& declared_type,
                                 const std::vector<db::Value>& values);

std::vector<MetadataDoc> build_metadata_docs(const SchemaCatalog& catalog);

/// Embeds every metadata doc and stores the vectors keyed by doc id.
void attach_embeddings(SchemaCatalog& catalog, const llm::Provider& provider);

/// Compact one-paragraph description listing tables and columns.
std::string summarize(const SchemaCatalog& catalog);

/// Column and fk description of the given tables, used as prompt context.
std::string describe_tables(const SchemaCatalog& catalog, const std::vector<std::string>& tables);

nlohmann::json to_json(const SchemaCatalog& catalog);
SchemaCatalog catalog_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ColumnStats& stats);
nlohmann::json to_json(const ForeignKeyEdge& edge);

}  // namespace orca::catalog
