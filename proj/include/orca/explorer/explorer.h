#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "orca/catalog/catalog.h"
#include "orca/llm/provider.h"

namespace orca::explorer {

enum class AnomalyKind { HighNullRatio, SkewedDistribution, PotentialOutliers, ConstantColumn };

std::string_view to_string(AnomalyKind kind);

struct AnomalyFlag {
  std::string column;
  AnomalyKind kind;
  std::string evidence;

  bool operator==(const AnomalyFlag&) const = default;
};

struct RelatedTable {
  std::string table;
  catalog::ForeignKeyEdge via;

  bool operator==(const RelatedTable&) const = default;
};

struct TableOverview {
  std::string table;
  std::string description;
  std::map<std::string, std::string> column_notes;
  std::vector<AnomalyFlag> anomalies;
  std::vector<RelatedTable> related_tables;
  std::vector<std::string> suggested_analyses;
};

inline constexpr double kHighNullRatio = 0.3;
inline constexpr double kSkewThreshold = 2.0;
inline constexpr double kOutlierSpreadFactor = 5.0;
inline constexpr double kOutlierSigma = 4.0;

std::vector<AnomalyFlag> compute_anomalies(const std::vector<catalog::ColumnStats>& stats);

TableOverview explore(const std::string& table, const catalog::SchemaCatalog& catalog, const llm::Provider& provider);

nlohmann::json to_json(const TableOverview& overview);
std::string render_text(const TableOverview& overview);

}  // namespace orca::explorer
