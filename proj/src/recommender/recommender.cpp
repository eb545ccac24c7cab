#include "orca/recommender/recommender.h"

#include <algorithm>
#include <functional>
#include <set>
#include <sstream>

#include "orca/common/error.h"
#include "orca/common/text.h"

namespace orca::recommender {

using catalog::SchemaCatalog;

std::vector<std::string> Recommendation::table_names() const {
  std::vector<std::string> out;
  for (const auto& t : tables) out.push_back(t.table);
  return out;
}

std::string extract_objective(const std::string& input, const llm::Provider& provider) {
  require(!text::trim(input).empty(), "extract_objective: input is empty");
  llm::ChatRequest req;
  req.system_text =
      "[task:objective] Summarize the analytical objective behind the user's request or document in one "
      "sentence. Reply with JSON: {\"objective\": \"...\"}";
  req.user_text = input;
  req.output_schema_hint = "Objective";
  try {
    auto objective = text::trim((*provider.chat(req).parsed)["objective"].get<std::string>());
    if (!objective.empty()) return objective;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::ParseFailure) throw;
  }
  return text::utf8_truncate(input, kObjectiveFallbackBytes);
}

std::vector<Candidate> candidate_search(const std::string& objective, const SchemaCatalog& catalog,
                                        const llm::Provider& provider, std::size_t k) {
  require(k > 0, "candidate_search: k must be positive");
  if (catalog.embeddings.empty()) fail(ErrorCode::EmbeddingsMissing, "catalog has no embeddings; run catalog sync");
  auto query = provider.embed({objective}).front();
  std::vector<Candidate> out;
  for (auto& doc : catalog::build_metadata_docs(catalog)) {
    auto it = catalog.embeddings.find(doc.doc_id);
    if (it == catalog.embeddings.end()) continue;
    double sim = llm::cosine(query, it->second);
    out.push_back({std::move(doc), sim});
  }
  if (out.empty()) fail(ErrorCode::EmbeddingsMissing, "no metadata doc has an embedding");
  std::sort(out.begin(), out.end(), [](const Candidate& a, const Candidate& b) {
    if (a.similarity != b.similarity) return a.similarity > b.similarity;
    return a.doc.doc_id < b.doc.doc_id;
  });
  if (out.size() > k) out.resize(k);
  return out;
}

namespace {

std::map<std::string, std::set<std::string>> adjacency(const SchemaCatalog& catalog) {
  std::map<std::string, std::set<std::string>> adj;
  for (const auto& e : catalog.fk_edges) {
    if (e.from_table == e.to_table) continue;
    adj[e.from_table].insert(e.to_table);
    adj[e.to_table].insert(e.from_table);
  }
  return adj;
}

}  // namespace

std::vector<std::string> join_bridges(const std::vector<std::string>& selected, const SchemaCatalog& catalog) {
  auto adj = adjacency(catalog);
  std::set<std::string> chosen(selected.begin(), selected.end());

  // Components of the fk graph restricted to the selection.
  std::map<std::string, int> component;
  int next = 0;
  for (const auto& s : chosen) {
    if (component.count(s)) continue;
    std::vector<std::string> stack{s};
    component[s] = next;
    while (!stack.empty()) {
      auto cur = stack.back();
      stack.pop_back();
      for (const auto& n : adj[cur])
        if (chosen.count(n) && !component.count(n)) {
          component[n] = next;
          stack.push_back(n);
        }
    }
    ++next;
  }

  std::set<std::string> bridges;
  std::vector<std::string> sel(chosen.begin(), chosen.end());
  for (std::size_t i = 0; i < sel.size(); ++i)
    for (std::size_t j = i + 1; j < sel.size(); ++j) {
      if (component[sel[i]] == component[sel[j]]) continue;
      for (const auto& mid : adj[sel[i]])
        if (!chosen.count(mid) && adj[sel[j]].count(mid)) bridges.insert(mid);
    }
  return {bridges.begin(), bridges.end()};
}

namespace {

const char* kSelectSystem =
    "[task:table_recommender] You recommend the database tables and key columns needed for an analytical "
    "objective. Choose only among the candidate tables listed. Reply with JSON: {\"tables\": [{\"table\": "
    "\"...\", \"reason\": \"...\", \"columns\": [\"...\"]}]}";

std::vector<std::string> default_key_columns(const std::string& table, const std::set<std::string>& selection,
                                             const SchemaCatalog& catalog) {
  std::vector<std::string> cols;
  const auto* t = catalog.find_table(table);
  if (!t) return cols;
  auto add = [&](const std::string& c) {
    if (std::find(cols.begin(), cols.end(), c) == cols.end()) cols.push_back(c);
  };
  for (const auto& pk : t->primary_key) add(pk);
  for (const auto& e : catalog.fk_edges) {
    if (e.from_table == table && selection.count(e.to_table)) add(e.from_column);
    if (e.to_table == table && selection.count(e.from_table)) add(e.to_column);
  }
  return cols;
}

}  // namespace

Recommendation recommend(const std::string& query, const SchemaCatalog& catalog, const llm::Provider& provider,
                         std::size_t k) {
  Recommendation rec;
  if (catalog.embeddings.empty()) fail(ErrorCode::EmbeddingsMissing, "catalog has no embeddings; run catalog sync");
  rec.objective = extract_objective(query, provider);
  auto candidates = candidate_search(rec.objective, catalog, provider, k);

  std::vector<std::string> pool_tables;  // in ranking order, distinct
  std::map<std::string, std::vector<std::string>> pool_columns;
  std::ostringstream docs;
  for (const auto& c : candidates) {
    rec.candidate_pool.push_back(c.doc.doc_id);
    if (std::find(pool_tables.begin(), pool_tables.end(), c.doc.table) == pool_tables.end())
      pool_tables.push_back(c.doc.table);
    if (c.doc.column) pool_columns[c.doc.table].push_back(*c.doc.column);
    docs << "[" << c.doc.doc_id << "] " << c.doc.text << "\n";
  }

  llm::ChatRequest req;
  req.system_text = kSelectSystem;
  req.add_context("objective", rec.objective);
  req.add_context("candidates", docs.str());
  {
    std::ostringstream fks;
    std::set<std::string> pool(pool_tables.begin(), pool_tables.end());
    for (const auto& e : catalog.fk_edges)
      if (pool.count(e.from_table) || pool.count(e.to_table))
        fks << e.from_table << "." << e.from_column << " -> " << e.to_table << "." << e.to_column << "\n";
    req.add_context("foreign_keys", fks.str().empty() ? "none" : fks.str());
  }
  req.user_text = query;
  req.output_schema_hint = "TableSelection";

  std::optional<nlohmann::json> reply;
  try {
    reply = provider.chat(req).parsed;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::ParseFailure) throw;
  }

  std::set<std::string> pool(pool_tables.begin(), pool_tables.end());
  if (reply) {
    for (const auto& item : (*reply)["tables"]) {
      std::string name, reason;
      std::vector<std::string> cols;
      if (item.is_string()) {
        name = item.get<std::string>();
      } else if (item.is_object()) {
        name = item.value("table", std::string());
        reason = item.value("reason", std::string());
        if (auto it = item.find("columns"); it != item.end() && it->is_array())
          for (const auto& c : *it)
            if (c.is_string()) cols.push_back(c.get<std::string>());
      }
      name = text::trim(name);
      if (!pool.count(name) || !catalog.find_table(name)) continue;
      if (std::any_of(rec.tables.begin(), rec.tables.end(), [&](const TableChoice& t) { return t.table == name; }))
        continue;
      rec.tables.push_back({name, reason.empty() ? "selected for the objective" : reason});
      auto& keys = rec.key_columns[name];
      for (const auto& c : cols)
        if (catalog.has_column(name, c) && std::find(keys.begin(), keys.end(), c) == keys.end()) keys.push_back(c);
    }
  }
  if (rec.tables.empty()) {
    for (const auto& t : pool_tables) {
      if (rec.tables.size() >= kFallbackTables) break;
      rec.tables.push_back({t, "top-ranked candidate"});
      auto& keys = rec.key_columns[t];
      for (const auto& c : pool_columns[t])
        if (std::find(keys.begin(), keys.end(), c) == keys.end()) keys.push_back(c);
    }
  }
  if (rec.tables.empty()) fail(ErrorCode::NoTablesSelected, "no tables selected for: " + query);

  for (const auto& b : join_bridges(rec.table_names(), catalog)) rec.tables.push_back({b, kBridgeReason});

  auto names = rec.table_names();
  std::set<std::string> selection(names.begin(), names.end());
  for (const auto& t : names) {
    auto& keys = rec.key_columns[t];
    for (const auto& c : default_key_columns(t, selection, catalog))
      if (std::find(keys.begin(), keys.end(), c) == keys.end()) keys.push_back(c);
  }
  rec.erd_doc = render_erd(names, catalog, rec.key_columns);
  return rec;
}

namespace {

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

std::string record_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (std::string_view("{}|<> \"\\").find(c) != std::string_view::npos) out += '\\';
    out += c;
  }
  return out;
}

}  // namespace

std::string render_erd(const std::vector<std::string>& tables, const SchemaCatalog& catalog,
                       const std::map<std::string, std::vector<std::string>>& key_columns) {
  std::set<std::string> names(tables.begin(), tables.end());
  for (const auto& t : names)
    if (!catalog.find_table(t)) fail(ErrorCode::UnknownTable, "table not in catalog: " + t);

  std::ostringstream os;
  os << "digraph erd {\n  rankdir=LR;\n  node [shape=record];\n";
  for (const auto& t : names) {
    auto it = key_columns.find(t);
    auto cols = it != key_columns.end() && !it->second.empty() ? it->second : default_key_columns(t, names, catalog);
    os << "  " << quote(t) << " [label=\"{" << record_escape(t) << "|";
    for (const auto& c : cols) os << record_escape(c) << "\\l";
    os << "}\"];\n";
  }
  std::vector<std::string> edges;
  for (const auto& e : catalog.fk_edges)
    if (names.count(e.from_table) && names.count(e.to_table))
      edges.push_back("  " + quote(e.from_table) + " -> " + quote(e.to_table) + " [label=" +
                      quote(e.from_column + "→" + e.to_column) + "];\n");
  std::sort(edges.begin(), edges.end());
  for (const auto& e : edges) os << e;
  os << "}\n";
  return os.str();
}

nlohmann::json to_json(const Recommendation& r) {
  nlohmann::json tables = nlohmann::json::array();
  for (const auto& t : r.tables) tables.push_back({{"table", t.table}, {"reason", t.reason}});
  return {{"objective", r.objective},
          {"tables", tables},
          {"key_columns", r.key_columns},
          {"erd_doc", r.erd_doc},
          {"candidate_pool", r.candidate_pool}};
}

}  // namespace orca::recommender
