#include "orca/catalog/catalog.h"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "orca/common/error.h"
#include "orca/common/rng.h"
#include "orca/common/text.h"

namespace orca::catalog {

namespace {

bool is_numeric_type(const std::string& declared) {
  std::string t = text::to_lower(declared);
  for (const char* key : {"int", "real", "floa", "doub", "numeric", "decimal", "bool"})
    if (t.find(key) != std::string::npos) return true;
  return false;
}

std::string quote_ident(const std::string& name) { return "\"" + name + "\""; }

struct Moments {
  double mean = 0;
  std::optional<double> std_dev;
  std::optional<double> skewness;
};

Moments moments(const std::vector<double>& xs) {
  Moments m;
  const double n = static_cast<double>(xs.size());
  double sum = 0;
  for (double x : xs) sum += x;
  m.mean = sum / n;
  double m2 = 0, m3 = 0;
  for (double x : xs) {
    double d = x - m.mean;
    m2 += d * d;
    m3 += d * d * d;
  }
  if (xs.size() > 1) m.std_dev = std::sqrt(m2 / (n - 1));
  m2 /= n;
  m3 /= n;
  if (m2 > 0) m.skewness = m3 / std::pow(m2, 1.5);
  return m;
}

double median_of(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  std::size_t n = xs.size();
  return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

/// Fills the distributional fields (mean/median/sd/skewness/examples) from scanned values.
void fill_distribution(ColumnStats& s, const std::vector<db::Value>& values) {
  std::vector<double> nums;
  for (const auto& v : values) {
    if (db::is_null(v)) continue;
    if (s.example_values.size() < 5 &&
        std::none_of(s.example_values.begin(), s.example_values.end(),
                     [&](const db::Value& e) { return db::compare(e, v) == 0; })) {
      s.example_values.push_back(v);
    }
    if (s.numeric()) {
      if (auto x = db::as_number(v)) nums.push_back(*x);
    }
  }
  if (!nums.empty()) {
    auto m = moments(nums);
    s.mean = m.mean;
    s.median = median_of(std::move(nums));
    s.std_dev = m.std_dev;
    s.skewness = m.skewness;
  }
}

}  // namespace

bool ColumnStats::numeric() const { return is_numeric_type(declared_type); }

const ColumnStats* TableInfo::find_column(const std::string& column) const {
  for (const auto& c : columns)
    if (c.name == column) return &c;
  return nullptr;
}

const TableInfo* SchemaCatalog::find_table(const std::string& table) const {
  auto it = tables.find(table);
  return it == tables.end() ? nullptr : &it->second;
}

bool SchemaCatalog::has_column(const std::string& table, const std::string& column) const {
  auto t = find_table(table);
  return t && t->find_column(column);
}

std::vector<ForeignKeyEdge> SchemaCatalog::edges_touching(const std::string& table) const {
  std::vector<ForeignKeyEdge> out;
  for (const auto& e : fk_edges)
    if (e.from_table == table || e.to_table == table) out.push_back(e);
  return out;
}

ColumnStats compute_column_stats(const std::string& name, const std::string& declared_type,
                                 const std::vector<db::Value>& values) {
  ColumnStats s;
  s.name = name;
  s.declared_type = declared_type;
  s.row_count = static_cast<std::int64_t>(values.size());
  std::vector<db::Value> distinct;
  for (const auto& v : values) {
    if (db::is_null(v)) {
      ++s.null_count;
      continue;
    }
    distinct.push_back(v);
  }
  std::sort(distinct.begin(), distinct.end(), [](const auto& a, const auto& b) { return db::compare(a, b) < 0; });
  distinct.erase(std::unique(distinct.begin(), distinct.end(),
                             [](const auto& a, const auto& b) { return db::compare(a, b) == 0; }),
                 distinct.end());
  s.unique_count = static_cast<std::int64_t>(distinct.size());
  if (!distinct.empty()) {
    s.min = distinct.front();
    s.max = distinct.back();
  }
  s.null_ratio = static_cast<double>(s.null_count) / static_cast<double>(std::max<std::int64_t>(s.row_count, 1));
  fill_distribution(s, values);
  return s;
}

SchemaCatalog snapshot(db::Connection& connection, const SnapshotOptions& options) {
  SchemaCatalog catalog;
  catalog.database_id = connection.database_id();
  catalog.connection = connection.path();

  auto tables = connection.user_tables();
  if (tables.empty()) fail(ErrorCode::EmptyDatabase, "database '" + catalog.database_id + "' has no user tables");

  for (const auto& table : tables) {
    TableInfo info;
    info.name = table;
    std::vector<std::pair<int, std::string>> pk;
    auto cols = connection.query("PRAGMA table_info(" + quote_ident(table) + ")");
    for (const auto& row : cols.rows) {
      ColumnStats s;
      s.name = std::get<std::string>(row[1]);
      s.declared_type = db::is_null(row[2]) ? "" : db::to_display(row[2]);
      info.columns.push_back(std::move(s));
      auto pk_pos = std::get<std::int64_t>(row[5]);
      if (pk_pos > 0) pk.emplace_back(static_cast<int>(pk_pos), info.columns.back().name);
    }
    std::sort(pk.begin(), pk.end());
    for (auto& [_, col] : pk) info.primary_key.push_back(col);

    info.row_count = std::get<std::int64_t>(connection.query("SELECT COUNT(*) FROM " + quote_ident(table)).rows[0][0]);

    // Exact counts, distinct counts, and extrema in one aggregate pass.
    std::string agg = "SELECT ";
    for (std::size_t i = 0; i < info.columns.size(); ++i) {
      const auto c = quote_ident(info.columns[i].name);
      if (i) agg += ", ";
      agg += "COUNT(" + c + "), COUNT(DISTINCT " + c + "), MIN(" + c + "), MAX(" + c + ")";
    }
    agg += " FROM " + quote_ident(table);
    auto aggregates = connection.query(agg).rows.at(0);
    for (std::size_t i = 0; i < info.columns.size(); ++i) {
      auto& s = info.columns[i];
      s.row_count = info.row_count;
      s.null_count = info.row_count - std::get<std::int64_t>(aggregates[4 * i]);
      s.unique_count = std::get<std::int64_t>(aggregates[4 * i + 1]);
      if (!db::is_null(aggregates[4 * i + 2])) s.min = aggregates[4 * i + 2];
      if (!db::is_null(aggregates[4 * i + 3])) s.max = aggregates[4 * i + 3];
      s.null_ratio = static_cast<double>(s.null_count) / static_cast<double>(std::max<std::int64_t>(info.row_count, 1));
    }

    // Distributional statistics: full scan up to the limit, reservoir sample beyond it.
    std::vector<db::Row> kept;
    const auto limit = static_cast<std::size_t>(std::max<std::int64_t>(options.max_scan_rows, 1));
    Rng rng(options.sample_seed, "catalog/" + table);
    std::size_t seen = 0;
    connection.for_each_row("SELECT * FROM " + quote_ident(table), [&](const db::Row& row) {
      if (kept.size() < limit) {
        kept.push_back(row);
      } else {
        auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(seen)));
        if (j < limit) kept[j] = row;
      }
      ++seen;
    });
    info.sampled_rows = static_cast<std::int64_t>(kept.size());
    for (std::size_t i = 0; i < info.columns.size(); ++i) {
      std::vector<db::Value> values;
      values.reserve(kept.size());
      for (const auto& row : kept) values.push_back(row[i]);
      fill_distribution(info.columns[i], values);
    }

    auto fks = connection.query("PRAGMA foreign_key_list(" + quote_ident(table) + ")");
    for (const auto& row : fks.rows) {
      ForeignKeyEdge e;
      e.from_table = table;
      e.from_column = std::get<std::string>(row[3]);
      e.to_table = std::get<std::string>(row[2]);
      e.to_column = db::is_null(row[4]) ? std::string() : std::get<std::string>(row[4]);
      catalog.fk_edges.push_back(std::move(e));
    }
    catalog.tables.emplace(table, std::move(info));
  }

  // Resolve implicit fk targets (REFERENCES t without a column) to t's primary key,
  // and keep only edges whose endpoints exist.
  std::vector<ForeignKeyEdge> edges;
  for (auto e : catalog.fk_edges) {
    auto target = catalog.find_table(e.to_table);
    if (!target) continue;
    if (e.to_column.empty()) {
      if (target->primary_key.size() != 1) continue;
      e.to_column = target->primary_key.front();
    }
    if (catalog.has_column(e.from_table, e.from_column) && catalog.has_column(e.to_table, e.to_column))
      edges.push_back(std::move(e));
  }
  std::sort(edges.begin(), edges.end());
  catalog.fk_edges = std::move(edges);
  return catalog;
}

namespace {

std::string column_doc_text(const TableInfo& table, const ColumnStats& c) {
  std::ostringstream os;
  os << "column " << table.name << "." << c.name << " type " << (c.declared_type.empty() ? "ANY" : c.declared_type)
     << "; null_ratio " << text::fmt_num(c.null_ratio, 3) << "; unique " << c.unique_count;
  if (c.mean) os << "; mean " << text::fmt_num(*c.mean, 6);
  if (c.median) os << "; median " << text::fmt_num(*c.median, 6);
  if (c.min) os << "; min " << db::to_display(*c.min);
  if (c.max) os << "; max " << db::to_display(*c.max);
  if (!c.example_values.empty()) {
    os << "; examples ";
    for (std::size_t i = 0; i < c.example_values.size(); ++i) os << (i ? ", " : "") << db::to_display(c.example_values[i]);
  }
  return os.str();
}

std::string table_doc_text(const SchemaCatalog& catalog, const TableInfo& table) {
  std::ostringstream os;
  os << "table " << table.name << " (" << table.row_count << " rows); columns: ";
  for (std::size_t i = 0; i < table.columns.size(); ++i) os << (i ? ", " : "") << table.columns[i].name;
  if (!table.primary_key.empty()) os << "; primary key: " << text::join(table.primary_key, ", ");
  for (const auto& e : catalog.fk_edges) {
    if (e.from_table == table.name) os << "; references " << e.to_table << " via " << e.from_column;
  }
  for (const auto& e : catalog.fk_edges) {
    if (e.to_table == table.name) os << "; referenced by " << e.from_table << "." << e.from_column;
  }
  return os.str();
}

}  // namespace

std::vector<MetadataDoc> build_metadata_docs(const SchemaCatalog& catalog) {
  std::vector<MetadataDoc> docs;
  for (const auto& [name, table] : catalog.tables) {
    docs.push_back({"table:" + name, MetadataDoc::Kind::Table, name, std::nullopt, table_doc_text(catalog, table)});
    for (const auto& c : table.columns) {
      docs.push_back({"column:" + name + "." + c.name, MetadataDoc::Kind::Column, name, c.name, column_doc_text(table, c)});
    }
  }
  return docs;
}

void attach_embeddings(SchemaCatalog& catalog, const llm::Provider& provider) {
  auto docs = build_metadata_docs(catalog);
  catalog.embeddings.clear();
  constexpr std::size_t kBatch = 256;
  for (std::size_t start = 0; start < docs.size(); start += kBatch) {
    std::vector<std::string> texts;
    std::size_t end = std::min(docs.size(), start + kBatch);
    for (std::size_t i = start; i < end; ++i) texts.push_back(docs[i].text);
    auto vectors = provider.embed(texts);
    for (std::size_t i = start; i < end; ++i) catalog.embeddings[docs[i].doc_id] = std::move(vectors[i - start]);
  }
}

std::string summarize(const SchemaCatalog& catalog) {
  std::ostringstream os;
  os << "database " << catalog.database_id << " with " << catalog.tables.size() << " tables:";
  for (const auto& [name, table] : catalog.tables) {
    os << "\n- " << name << "(";
    for (std::size_t i = 0; i < table.columns.size(); ++i) os << (i ? ", " : "") << table.columns[i].name;
    os << ")";
  }
  return os.str();
}

std::string describe_tables(const SchemaCatalog& catalog, const std::vector<std::string>& tables) {
  std::ostringstream os;
  std::set<std::string> wanted(tables.begin(), tables.end());
  for (const auto& name : wanted) {
    auto t = catalog.find_table(name);
    if (!t) continue;
    os << "table " << name << " (" << t->row_count << " rows)\n";
    for (const auto& c : t->columns) {
      os << "  - " << c.name << " " << (c.declared_type.empty() ? "ANY" : c.declared_type);
      if (std::find(t->primary_key.begin(), t->primary_key.end(), c.name) != t->primary_key.end()) os << " PRIMARY KEY";
      if (!c.example_values.empty()) {
        os << " e.g. ";
        for (std::size_t i = 0; i < std::min<std::size_t>(3, c.example_values.size()); ++i)
          os << (i ? ", " : "") << db::to_display(c.example_values[i]);
      }
      os << "\n";
    }
  }
  os << "foreign keys:\n";
  for (const auto& e : catalog.fk_edges) {
    if (wanted.count(e.from_table) && wanted.count(e.to_table))
      os << "  " << e.from_table << "." << e.from_column << " -> " << e.to_table << "." << e.to_column << "\n";
  }
  return os.str();
}

namespace {

nlohmann::json opt_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

std::optional<double> opt_double(const nlohmann::json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<double>();
}

std::optional<db::Value> opt_value(const nlohmann::json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return db::from_json(*it);
}

}  // namespace

nlohmann::json to_json(const ColumnStats& c) {
  nlohmann::json examples = nlohmann::json::array();
  for (const auto& v : c.example_values) examples.push_back(db::to_json(v));
  return {{"name", c.name},
          {"declared_type", c.declared_type},
          {"null_count", c.null_count},
          {"row_count", c.row_count},
          {"null_ratio", c.null_ratio},
          {"unique_count", c.unique_count},
          {"mean", opt_json(c.mean)},
          {"median", opt_json(c.median)},
          {"std_dev", opt_json(c.std_dev)},
          {"min", c.min ? db::to_json(*c.min) : nlohmann::json(nullptr)},
          {"max", c.max ? db::to_json(*c.max) : nlohmann::json(nullptr)},
          {"skewness", opt_json(c.skewness)},
          {"example_values", examples}};
}

nlohmann::json to_json(const ForeignKeyEdge& e) {
  return {{"from_table", e.from_table}, {"from_column", e.from_column}, {"to_table", e.to_table}, {"to_column", e.to_column}};
}

nlohmann::json to_json(const SchemaCatalog& catalog) {
  nlohmann::json tables = nlohmann::json::object();
  for (const auto& [name, t] : catalog.tables) {
    nlohmann::json cols = nlohmann::json::array();
    for (const auto& c : t.columns) cols.push_back(to_json(c));
    tables[name] = {{"columns", cols}, {"primary_key", t.primary_key}, {"row_count", t.row_count}, {"sampled_rows", t.sampled_rows}};
  }
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& e : catalog.fk_edges) edges.push_back(to_json(e));
  nlohmann::json embeddings = nlohmann::json::object();
  for (const auto& [id, v] : catalog.embeddings) embeddings[id] = {{"model_id", v.model_id}, {"values", v.values}};
  return {{"format", "orca.catalog"},
          {"version", SchemaCatalog::kFormatVersion},
          {"database_id", catalog.database_id},
          {"connection", catalog.connection},
          {"captured_at", catalog.captured_at},
          {"tables", tables},
          {"fk_edges", edges},
          {"embeddings", embeddings}};
}

SchemaCatalog catalog_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "orca.catalog") fail(ErrorCode::InvalidConfig, "not a catalog document");
  if (j.value("version", 0) != SchemaCatalog::kFormatVersion)
    fail(ErrorCode::InvalidConfig, "unsupported catalog version " + std::to_string(j.value("version", 0)));
  SchemaCatalog c;
  c.database_id = j.at("database_id").get<std::string>();
  c.connection = j.value("connection", "");
  c.captured_at = j.value("captured_at", std::int64_t{0});
  for (const auto& [name, t] : j.at("tables").items()) {
    TableInfo info;
    info.name = name;
    info.primary_key = t.at("primary_key").get<std::vector<std::string>>();
    info.row_count = t.at("row_count").get<std::int64_t>();
    info.sampled_rows = t.value("sampled_rows", info.row_count);
    for (const auto& cj : t.at("columns")) {
      ColumnStats s;
      s.name = cj.at("name").get<std::string>();
      s.declared_type = cj.at("declared_type").get<std::string>();
      s.null_count = cj.at("null_count").get<std::int64_t>();
      s.row_count = cj.at("row_count").get<std::int64_t>();
      s.null_ratio = cj.at("null_ratio").get<double>();
      s.unique_count = cj.at("unique_count").get<std::int64_t>();
      s.mean = opt_double(cj, "mean");
      s.median = opt_double(cj, "median");
      s.std_dev = opt_double(cj, "std_dev");
      s.min = opt_value(cj, "min");
      s.max = opt_value(cj, "max");
      s.skewness = opt_double(cj, "skewness");
      for (const auto& v : cj.at("example_values")) s.example_values.push_back(db::from_json(v));
      info.columns.push_back(std::move(s));
    }
    c.tables.emplace(name, std::move(info));
  }
  for (const auto& e : j.at("fk_edges")) {
    c.fk_edges.push_back({e.at("from_table"), e.at("from_column"), e.at("to_table"), e.at("to_column")});
  }
  for (const auto& [id, v] : j.at("embeddings").items()) {
    c.embeddings[id] = {v.at("values").get<std::vector<double>>(), v.at("model_id").get<std::string>()};
  }
  return c;
}

}  // namespace orca::catalog
