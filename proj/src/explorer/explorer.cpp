#include "orca/explorer/explorer.h"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "orca/common/error.h"
#include "orca/common/text.h"

namespace orca::explorer {

using catalog::ColumnStats;

std::string_view to_string(AnomalyKind kind) {
  switch (kind) {
    case AnomalyKind::HighNullRatio: return "high_null_ratio";
    case AnomalyKind::SkewedDistribution: return "skewed_distribution";
    case AnomalyKind::PotentialOutliers: return "potential_outliers";
    case AnomalyKind::ConstantColumn: return "constant_column";
  }
  return "";
}

namespace {

std::optional<AnomalyKind> parse_anomaly_kind(std::string_view s) {
  auto v = text::to_lower(text::trim(s));
  for (auto k : {AnomalyKind::HighNullRatio, AnomalyKind::SkewedDistribution, AnomalyKind::PotentialOutliers,
                 AnomalyKind::ConstantColumn})
    if (v == to_string(k)) return k;
  return std::nullopt;
}

std::optional<std::string> outlier_evidence(const ColumnStats& s) {
  if (!s.mean || !s.min || !s.max) return std::nullopt;
  auto lo = db::as_number(*s.min);
  auto hi = db::as_number(*s.max);
  if (!lo || !hi) return std::nullopt;
  double mean = *s.mean;
  if (s.median) {
    double bound = mean + kOutlierSpreadFactor * (*hi - *s.median);
    if (*hi > bound) return "max " + text::fmt_num(*hi) + " > mean + 5*(max-median) = " + text::fmt_num(bound);
  }
  if (s.std_dev && *s.std_dev > 0) {
    double sd = *s.std_dev;
    if (*hi > mean + kOutlierSigma * sd)
      return "max " + text::fmt_num(*hi) + " exceeds mean + 4sd = " + text::fmt_num(mean + kOutlierSigma * sd);
    if (*lo < mean - kOutlierSigma * sd)
      return "min " + text::fmt_num(*lo) + " below mean - 4sd = " + text::fmt_num(mean - kOutlierSigma * sd);
  }
  return std::nullopt;
}

}  // namespace

std::vector<AnomalyFlag> compute_anomalies(const std::vector<ColumnStats>& stats) {
  std::vector<AnomalyFlag> flags;
  for (const auto& s : stats) {
    if (s.null_ratio > kHighNullRatio)
      flags.push_back({s.name, AnomalyKind::HighNullRatio, "null_ratio " + text::fmt_num(s.null_ratio, 4)});
    if (s.skewness && std::abs(*s.skewness) > kSkewThreshold)
      flags.push_back({s.name, AnomalyKind::SkewedDistribution, "skewness " + text::fmt_num(*s.skewness, 4)});
    if (auto ev = outlier_evidence(s)) flags.push_back({s.name, AnomalyKind::PotentialOutliers, *ev});
    if (s.unique_count <= 1)
      flags.push_back({s.name, AnomalyKind::ConstantColumn, "unique_count " + std::to_string(s.unique_count)});
  }
  return flags;
}

namespace {

const char* kExplorerSystem =
    "[task:table_explorer] You are a data analyst preparing a table for analysis. You are given summary "
    "statistics of one table, its foreign keys and locally detected anomalies. You do not see raw rows.\n"
    "Reply with JSON: {\"description\": \"what the table holds\", \"column_notes\": {\"column\": \"note\"}, "
    "\"anomalies\": [{\"column\": \"...\", \"kind\": \"high_null_ratio|skewed_distribution|potential_outliers|"
    "constant_column\", \"evidence\": \"...\"}], \"suggested_analyses\": [\"...\"]}";

std::string stats_context(const catalog::TableInfo& t) {
  nlohmann::json cols = nlohmann::json::array();
  for (const auto& c : t.columns) cols.push_back(catalog::to_json(c));
  nlohmann::json j = {{"table", t.name}, {"row_count", t.row_count}, {"primary_key", t.primary_key}, {"columns", cols}};
  return j.dump(1);
}

bool looks_temporal(const ColumnStats& c) {
  auto n = text::to_lower(c.name);
  auto ty = text::to_lower(c.declared_type);
  return text::contains(ty, "date") || text::contains(ty, "time") || text::contains(n, "date") ||
         text::contains(n, "_at") || text::contains(n, "time");
}

std::vector<std::string> default_analyses(const catalog::TableInfo& t, const std::vector<RelatedTable>& related) {
  std::vector<std::string> out;
  if (std::any_of(t.columns.begin(), t.columns.end(), looks_temporal))
    out.push_back("time-series trend analysis over the date columns");
  bool user_link = t.name == "users" || std::any_of(related.begin(), related.end(), [](const RelatedTable& r) {
                     return r.table == "users";
                   });
  if (user_link) out.push_back("user-level aggregation");
  if (!related.empty()) out.push_back("join with " + related.front().table + " for cohort comparison");
  out.push_back("distribution comparison across categorical segments");
  return out;
}

}  // namespace

TableOverview explore(const std::string& table, const catalog::SchemaCatalog& catalog, const llm::Provider& provider) {
  const auto* info = catalog.find_table(table);
  if (!info) fail(ErrorCode::UnknownTable, "table not in catalog: " + table);

  TableOverview out;
  out.table = table;
  out.anomalies = compute_anomalies(info->columns);
  for (const auto& e : catalog.edges_touching(table))
    out.related_tables.push_back({e.from_table == table ? e.to_table : e.from_table, e});

  llm::ChatRequest req;
  req.system_text = kExplorerSystem;
  req.add_context("table_statistics", stats_context(*info));
  {
    std::ostringstream os;
    for (const auto& r : out.related_tables)
      os << r.via.from_table << "." << r.via.from_column << " -> " << r.via.to_table << "." << r.via.to_column << "\n";
    req.add_context("foreign_keys", os.str().empty() ? "none" : os.str());
  }
  {
    std::ostringstream os;
    for (const auto& a : out.anomalies) os << a.column << ": " << to_string(a.kind) << " (" << a.evidence << ")\n";
    req.add_context("detected_anomalies", os.str().empty() ? "none" : os.str());
  }
  req.user_text = "Give an analysis-ready overview of table " + table + ".";
  req.output_schema_hint = "TableOverview";

  std::optional<nlohmann::json> reply;
  try {
    reply = provider.chat(req).parsed;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::ParseFailure) throw;
  }

  if (reply) {
    out.description = (*reply)["description"].get<std::string>();
    if (auto it = reply->find("column_notes"); it != reply->end() && it->is_object()) {
      for (const auto& [col, note] : it->items())
        if (info->find_column(col) && note.is_string()) out.column_notes[col] = note.get<std::string>();
    }
    // Model anomalies are kept only where a local rule also fired; the rest
    // become column notes so every flag stays backed by a statistic.
    if (auto it = reply->find("anomalies"); it != reply->end() && it->is_array()) {
      for (const auto& a : *it) {
        if (!a.is_object()) continue;
        auto col = a.value("column", std::string());
        auto kind = parse_anomaly_kind(a.value("kind", std::string()));
        if (!info->find_column(col) || !kind) continue;
        bool local = std::any_of(out.anomalies.begin(), out.anomalies.end(),
                                 [&](const AnomalyFlag& f) { return f.column == col && f.kind == *kind; });
        if (local) continue;
        auto& note = out.column_notes[col];
        if (!note.empty()) note += " ";
        note += "Model suspects " + std::string(to_string(*kind));
        if (auto ev = a.value("evidence", std::string()); !ev.empty()) note += ": " + ev;
        note += ".";
      }
    }
    if (auto it = reply->find("suggested_analyses"); it != reply->end() && it->is_array()) {
      for (const auto& s : *it)
        if (s.is_string() && !text::trim(s.get<std::string>()).empty()) out.suggested_analyses.push_back(s.get<std::string>());
    }
  } else {
    out.description = "Table " + table + " with " + std::to_string(info->row_count) + " rows and " +
                      std::to_string(info->columns.size()) + " columns.";
  }
  if (out.suggested_analyses.empty()) out.suggested_analyses = default_analyses(*info, out.related_tables);
  return out;
}

nlohmann::json to_json(const TableOverview& o) {
  nlohmann::json anomalies = nlohmann::json::array();
  for (const auto& a : o.anomalies)
    anomalies.push_back({{"column", a.column}, {"kind", to_string(a.kind)}, {"evidence", a.evidence}});
  nlohmann::json related = nlohmann::json::array();
  for (const auto& r : o.related_tables) related.push_back({{"table", r.table}, {"via", catalog::to_json(r.via)}});
  return {{"table", o.table},
          {"description", o.description},
          {"column_notes", o.column_notes},
          {"anomalies", anomalies},
          {"related_tables", related},
          {"suggested_analyses", o.suggested_analyses}};
}

std::string render_text(const TableOverview& o) {
  std::ostringstream os;
  os << "# " << o.table << "\n\n" << o.description << "\n";
  if (!o.column_notes.empty()) {
    os << "\nColumns:\n";
    for (const auto& [c, n] : o.column_notes) os << "  " << c << ": " << n << "\n";
  }
  os << "\nAnomalies:\n";
  if (o.anomalies.empty()) os << "  none\n";
  for (const auto& a : o.anomalies) os << "  " << a.column << " " << to_string(a.kind) << " (" << a.evidence << ")\n";
  os << "\nRelated tables:\n";
  if (o.related_tables.empty()) os << "  none\n";
  for (const auto& r : o.related_tables)
    os << "  " << r.table << " via " << r.via.from_table << "." << r.via.from_column << " -> " << r.via.to_table << "."
       << r.via.to_column << "\n";
  os << "\nSuggested analyses:\n";
  for (const auto& s : o.suggested_analyses) os << "  - " << s << "\n";
  return os.str();
}

}  // namespace orca::explorer
