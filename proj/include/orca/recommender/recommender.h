#pragma once

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "orca/catalog/catalog.h"
#include "orca/llm/provider.h"

namespace orca::recommender {

struct TableChoice {
  std::string table;
  std::string reason;

  bool operator==(const TableChoice&) const = default;
};

struct Recommendation {
  std::string objective;
  std::vector<TableChoice> tables;
  std::map<std::string, std::vector<std::string>> key_columns;
  std::string erd_doc;
  std::vector<std::string> candidate_pool;

  std::vector<std::string> table_names() const;
};

struct Candidate {
  catalog::MetadataDoc doc;
  double similarity = 0.0;
};

inline constexpr std::size_t kDefaultCandidates = 20;
inline constexpr std::size_t kObjectiveFallbackBytes = 512;
inline constexpr std::size_t kFallbackTables = 3;
inline constexpr const char* kBridgeReason = "join bridge";

std::string extract_objective(const std::string& query_or_document, const llm::Provider& provider);

std::vector<Candidate> candidate_search(const std::string& objective, const catalog::SchemaCatalog& catalog,
                                        const llm::Provider& provider, std::size_t k = kDefaultCandidates);

/// Tables one fk hop away from two selected tables that the selection
/// alone cannot join. Returned sorted by name.
std::vector<std::string> join_bridges(const std::vector<std::string>& selected, const catalog::SchemaCatalog& catalog);

Recommendation recommend(const std::string& query, const catalog::SchemaCatalog& catalog, const llm::Provider& provider,
                         std::size_t k = kDefaultCandidates);

/// Graphviz text for the given tables. Columns shown per node are taken from
/// `key_columns` when present, else the primary key plus fk columns.
std::string render_erd(const std::vector<std::string>& tables, const catalog::SchemaCatalog& catalog,
                       const std::map<std::string, std::vector<std::string>>& key_columns = {});

nlohmann::json to_json(const Recommendation& r);

}  // namespace orca::recommender
