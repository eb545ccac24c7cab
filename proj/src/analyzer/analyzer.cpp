#include "orca/analyzer/analyzer.h"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "orca/common/text.h"
#include "orca/recommender/recommender.h"

namespace orca::analyzer {

using causal::CausalModelSpec;
using causal::Estimation;

Binding resolve_binding(const std::string& ref, const catalog::SchemaCatalog& catalog) {
  auto r = text::trim(ref);
  if (auto dot = r.find('.'); dot != std::string::npos) {
    Binding b{r.substr(0, dot), r.substr(dot + 1)};
    if (!catalog.has_column(b.table, b.column)) fail(ErrorCode::UnboundVariable, "no column " + r + " in the catalog");
    return b;
  }
  std::vector<Binding> hits;
  for (const auto& [name, t] : catalog.tables)
    if (t.find_column(r)) hits.push_back({name, r});
  if (hits.size() == 1) return hits.front();
  if (hits.empty()) fail(ErrorCode::UnboundVariable, "no column named " + r);
  std::vector<std::string> where;
  for (const auto& h : hits) where.push_back(h.qualified());
  fail(ErrorCode::UnboundVariable, "column " + r + " is ambiguous: " + text::join(where, ", "));
}

nlohmann::json to_json(const CausalQuery& q) {
  nlohmann::json bindings = nlohmann::json::object();
  for (const auto& [v, b] : q.variable_bindings) bindings[v] = b.qualified();
  nlohmann::json j = {{"raw_text", q.raw_text},     {"treatment", q.treatment},
                      {"outcome", q.outcome},       {"graph", causal::format_graph(q.graph)},
                      {"bindings", bindings},       {"effect_question", q.effect_question}};
  if (q.oracle_sql) j["oracle_sql"] = *q.oracle_sql;
  return j;
}

CausalQuery query_from_json(const nlohmann::json& j, const catalog::SchemaCatalog& catalog) {
  CausalQuery q;
  q.raw_text = j.value("raw_text", std::string());
  q.treatment = j.at("treatment").get<std::string>();
  q.outcome = j.at("outcome").get<std::string>();
  q.graph = causal::parse_graph(j.at("graph").get<std::string>());
  for (const auto& [v, ref] : j.at("bindings").items()) q.variable_bindings[v] = resolve_binding(ref.get<std::string>(), catalog);
  q.effect_question = j.value("effect_question", std::string());
  if (j.contains("oracle_sql")) q.oracle_sql = j["oracle_sql"].get<std::string>();
  return q;
}

namespace {

std::vector<std::string> observed_nodes(const causal::CausalGraph& g) {
  std::vector<std::string> out;
  for (const auto& n : g.nodes)
    if (!g.latent.count(n)) out.push_back(n);
  return out;
}

}  // namespace

void check_bindings(const CausalQuery& q, const catalog::SchemaCatalog& catalog) {
  for (const auto& v : {q.treatment, q.outcome}) {
    if (!q.variable_bindings.count(v)) fail(ErrorCode::UnboundVariable, "variable " + v + " has no column binding");
    if (!q.graph.has_node(v)) fail(ErrorCode::UnknownVariable, "variable " + v + " is not in the causal graph");
  }
  for (const auto& n : observed_nodes(q.graph))
    if (!q.variable_bindings.count(n)) fail(ErrorCode::UnboundVariable, "graph node " + n + " has no column binding");
  for (const auto& [v, b] : q.variable_bindings)
    if (!catalog.has_column(b.table, b.column))
      fail(ErrorCode::UnboundVariable, "variable " + v + " is bound to missing column " + b.qualified());
}

ParsedQuery parse_causal_query(const std::string& input, const catalog::SchemaCatalog& catalog,
                               const llm::Provider& provider) {
  ParsedQuery out;
  std::string edge_text;
  for (const auto& line : text::split(input, '\n'))
    if (text::contains(line, "->")) edge_text += line + "\n";

  llm::ChatRequest req;
  req.system_text =
      "[task:causal_parse] Extract the causal question from the user's message. Identify the treatment and the "
      "outcome variables, bind every variable to a table.column of the database, and give the causal graph as "
      "edges \"A -> B\" if the user stated one. Reply with JSON: {\"treatment\": \"...\", \"outcome\": \"...\", "
      "\"bindings\": {\"variable\": \"table.column\"}, \"graph\": \"A -> B; ...\", \"effect_question\": \"...\", "
      "\"clarification\": \"question for the user if something is missing\"}";
  req.add_context("catalog", catalog::summarize(catalog));
  req.user_text = input;
  req.output_schema_hint = "CausalParse";

  nlohmann::json j;
  try {
    j = *provider.chat(req).parsed;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::ParseFailure) throw;
    out.clarification = "Please name the treatment, the outcome and the causal graph as edges like `A -> B`.";
    return out;
  }
  auto str = [&](const char* k) {
    auto it = j.find(k);
    return it != j.end() && it->is_string() ? text::trim(it->get<std::string>()) : std::string();
  };

  CausalQuery q;
  q.raw_text = input;
  q.treatment = str("treatment");
  q.outcome = str("outcome");
  q.effect_question = str("effect_question").empty() ? input : str("effect_question");
  auto graph_text = edge_text.empty() ? str("graph") : edge_text;
  if (q.treatment.empty() || q.outcome.empty()) {
    out.clarification = str("clarification").empty() ? "Which variable is the treatment and which is the outcome?"
                                                      : str("clarification");
    return out;
  }
  if (graph_text.empty()) {
    out.clarification = "Please provide the causal graph as edges like `" + q.treatment + " -> " + q.outcome +
                        "`, including the confounders to consider.";
    return out;
  }
  try {
    q.graph = causal::parse_graph(graph_text);
  } catch (const Error& e) {
    out.clarification = "The causal graph could not be read (" + e.detail() + "). Please restate it as `A -> B` edges.";
    return out;
  }

  if (auto it = j.find("bindings"); it != j.end() && it->is_object())
    for (const auto& [v, ref] : it->items())
      if (ref.is_string()) {
        try {
          q.variable_bindings[v] = resolve_binding(ref.get<std::string>(), catalog);
        } catch (const Error&) {
        }
      }
  std::vector<std::string> unbound;
  for (const auto& n : observed_nodes(q.graph)) {
    if (q.variable_bindings.count(n)) continue;
    try {
      q.variable_bindings[n] = resolve_binding(n, catalog);
    } catch (const Error&) {
      unbound.push_back(n);
    }
  }
  if (!unbound.empty()) {
    out.clarification = "Which table.column holds " + text::join(unbound, ", ") + "?";
    return out;
  }
  try {
    check_bindings(q, catalog);
  } catch (const Error& e) {
    out.clarification = e.detail() + ". Please clarify.";
    return out;
  }
  out.query = std::move(q);
  return out;
}

std::string_view to_string(Encoding e) {
  switch (e) {
    case Encoding::None: return "none";
    case Encoding::Binary01: return "binary01";
    case Encoding::IntegerCodes: return "integer_codes";
    case Encoding::OneHot: return "one_hot";
    case Encoding::EpochDays: return "epoch_days";
  }
  return "none";
}

std::vector<std::string> PreparedDataset::columns_for(const std::vector<std::string>& variables) const {
  std::vector<std::string> out;
  for (const auto& v : variables) {
    auto it = encodings.find(v);
    if (it == encodings.end()) {
      out.push_back(v);
    } else {
      out.insert(out.end(), it->second.columns.begin(), it->second.columns.end());
    }
  }
  return out;
}

nlohmann::json PreparedDataset::sample(std::size_t n) const {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < std::min(n, data.rows()); ++i) {
    nlohmann::json row = nlohmann::json::object();
    for (const auto& [name, col] : data.columns) row[name] = col[i];
    rows.push_back(row);
  }
  return rows;
}

nlohmann::json to_json(const PreparedDataset& d) {
  nlohmann::json enc = nlohmann::json::object();
  for (const auto& [v, e] : d.encodings)
    enc[v] = {{"original_type", e.original_type},
              {"encoding", to_string(e.encoding)},
              {"normalization", e.zscore ? "zscore" : "none"},
              {"levels", e.levels},
              {"columns", e.columns}};
  return {{"row_count", d.row_count},
          {"dropped_rows", d.dropped_rows},
          {"drop_reasons", d.drop_reasons},
          {"encodings", enc},
          {"sql", d.sql}};
}

namespace {

/// Days since 1970-01-01 for an ISO date or datetime string.
std::optional<double> epoch_days(const std::string& s) {
  int y, m, d, hh = 0, mm = 0;
  double ss = 0;
  char sep = 0;
  if (s.size() < 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
  int n = std::sscanf(s.c_str(), "%4d-%2d-%2d%c%2d:%2d:%lf", &y, &m, &d, &sep, &hh, &mm, &ss);
  if (n < 3 || m < 1 || m > 12 || d < 1 || d > 31) return std::nullopt;
  if (s.size() > 10 && (n < 6 || (sep != 'T' && sep != ' '))) return std::nullopt;
  // Civil-from-days inverse (Howard Hinnant's algorithm).
  y -= m <= 2;
  int era = (y >= 0 ? y : y - 399) / 400;
  unsigned yoe = static_cast<unsigned>(y - era * 400);
  unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + static_cast<unsigned>(d) - 1;
  unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  double days = era * 146097.0 + static_cast<double>(doe) - 719468.0;
  return days + (hh * 3600.0 + mm * 60.0 + ss) / 86400.0;
}

std::optional<std::size_t> find_column(const db::ResultSet& rs, const std::string& var, const Binding& b) {
  for (const auto& want : {var, b.column, b.qualified()})
    for (std::size_t i = 0; i < rs.columns.size(); ++i)
      if (text::to_lower(rs.columns[i]) == text::to_lower(want)) return i;
  return std::nullopt;
}

bool is_bool_word(const std::string& s) {
  static const std::set<std::string> words{"true", "false", "t", "f", "yes", "no"};
  return words.count(text::to_lower(s)) > 0;
}

bool truthy(const std::string& s) {
  auto v = text::to_lower(s);
  return v == "true" || v == "t" || v == "yes";
}

}  // namespace

PreparedDataset encode(const CausalQuery& q, const db::ResultSet& rs, const catalog::SchemaCatalog& catalog,
                       bool normalize_covariates) {
  auto vars = observed_nodes(q.graph);
  std::sort(vars.begin(), vars.end());
  std::vector<std::size_t> col_idx;
  for (const auto& v : vars) {
    auto idx = find_column(rs, v, q.variable_bindings.at(v));
    if (!idx) fail(ErrorCode::RetrievalFailed, "retrieved data has no column for variable " + v);
    col_idx.push_back(*idx);
  }

  PreparedDataset out;
  std::vector<const db::Row*> kept;
  for (const auto& row : rs.rows) {
    std::optional<std::string> null_var;
    for (std::size_t k = 0; k < vars.size() && !null_var; ++k)
      if (db::is_null(row[col_idx[k]])) null_var = vars[k];
    if (null_var) {
      ++out.dropped_rows;
      ++out.drop_reasons["null " + *null_var];
    } else {
      kept.push_back(&row);
    }
  }
  if (kept.empty()) fail(ErrorCode::EmptyDataset, "no complete rows among " + std::to_string(rs.rows.size()) + " retrieved");
  out.row_count = kept.size();

  for (std::size_t k = 0; k < vars.size(); ++k) {
    const auto& v = vars[k];
    const auto& b = q.variable_bindings.at(v);
    EncodingRecord rec;
    if (const auto* t = catalog.find_table(b.table))
      if (const auto* c = t->find_column(b.column)) rec.original_type = c->declared_type;
    bool is_t = v == q.treatment, is_y = v == q.outcome;

    bool numeric = std::all_of(kept.begin(), kept.end(), [&](const db::Row* r) {
      return !std::holds_alternative<std::string>((*r)[col_idx[k]]);
    });
    std::vector<double> values;
    values.reserve(kept.size());
    if (numeric) {
      for (const auto* r : kept) values.push_back(*db::as_number((*r)[col_idx[k]]));
      bool zero_one = std::all_of(values.begin(), values.end(), [](double x) { return x == 0.0 || x == 1.0; });
      if (text::icontains(rec.original_type, "bool") && zero_one) rec.encoding = Encoding::Binary01;
      rec.columns = {v};
      out.data.add(v, std::move(values));
    } else {
      std::vector<std::string> raw;
      for (const auto* r : kept) raw.push_back(db::to_display((*r)[col_idx[k]]));
      std::vector<double> days;
      for (const auto& s : raw) {
        auto d = epoch_days(s);
        if (!d) break;
        days.push_back(*d);
      }
      if (days.size() == raw.size()) {
        rec.encoding = Encoding::EpochDays;
        rec.columns = {v};
        out.data.add(v, std::move(days));
      } else if (std::all_of(raw.begin(), raw.end(), is_bool_word)) {
        rec.encoding = Encoding::Binary01;
        rec.levels = {"false", "true"};
        for (const auto& s : raw) values.push_back(truthy(s) ? 1.0 : 0.0);
        rec.columns = {v};
        out.data.add(v, std::move(values));
      } else {
        std::set<std::string> distinct(raw.begin(), raw.end());
        rec.levels.assign(distinct.begin(), distinct.end());
        auto code = [&](const std::string& s) {
          return static_cast<double>(std::lower_bound(rec.levels.begin(), rec.levels.end(), s) - rec.levels.begin());
        };
        if (is_t || is_y) {
          if (rec.levels.size() == 2) {
            rec.encoding = Encoding::Binary01;
          } else if (is_t) {
            fail(ErrorCode::TreatmentNotBinaryOrNumeric,
                 "treatment " + v + " has " + std::to_string(rec.levels.size()) + " text levels");
          } else {
            rec.encoding = Encoding::IntegerCodes;
          }
          for (const auto& s : raw) values.push_back(code(s));
          rec.columns = {v};
          out.data.add(v, std::move(values));
        } else {
          if (rec.levels.size() > kMaxOneHotLevels)
            fail(ErrorCode::HighCardinalityCovariate,
                 "covariate " + v + " has " + std::to_string(rec.levels.size()) + " distinct values");
          rec.encoding = Encoding::OneHot;
          // k-1 dummies; the first level is the reference.
          for (std::size_t l = 1; l < rec.levels.size(); ++l) {
            std::vector<double> dummy;
            dummy.reserve(raw.size());
            for (const auto& s : raw) dummy.push_back(s == rec.levels[l] ? 1.0 : 0.0);
            auto name = v + "=" + rec.levels[l];
            rec.columns.push_back(name);
            out.data.add(name, std::move(dummy));
          }
        }
      }
    }
    if (normalize_covariates && !is_t && !is_y) {
      for (const auto& c : rec.columns) {
        auto col = out.data.column(c);
        double mean = 0, ss = 0;
        for (double x : col) mean += x;
        mean /= static_cast<double>(col.size());
        for (double x : col) ss += (x - mean) * (x - mean);
        double sd = col.size() > 1 ? std::sqrt(ss / static_cast<double>(col.size() - 1)) : 0.0;
        if (sd == 0) continue;
        for (double& x : col) x = (x - mean) / sd;
        out.data.add(c, std::move(col));
        rec.zscore = true;
      }
    }
    out.encodings[v] = std::move(rec);
  }
  return out;
}

namespace {

std::string retrieval_request(const CausalQuery& q) {
  auto vars = observed_nodes(q.graph);
  std::sort(vars.begin(), vars.end());
  std::ostringstream os;
  os << "Retrieve the data for this causal question: " << q.effect_question
     << "\nReturn one row per unit with exactly these columns, each aliased to the variable name:";
  for (const auto& v : vars) os << "\n- " << v << " = " << q.variable_bindings.at(v).qualified();
  return os.str();
}

}  // namespace

PreparedDataset prepare_data(const CausalQuery& q, const catalog::SchemaCatalog& catalog, db::Connection& connection,
                             const llm::Provider& provider, const PrepareOptions& options,
                             std::optional<text2sql::SqlPipelineTrace>* trace_out) {
  check_bindings(q, catalog);
  std::string sql;
  if (q.oracle_sql) {
    sql = *q.oracle_sql;
  } else {
    recommender::Recommendation rec;
    rec.objective = q.effect_question;
    std::set<std::string> tables;
    for (const auto& [v, b] : q.variable_bindings) {
      tables.insert(b.table);
      auto& keys = rec.key_columns[b.table];
      if (std::find(keys.begin(), keys.end(), b.column) == keys.end()) keys.push_back(b.column);
    }
    for (const auto& t : tables) rec.tables.push_back({t, "holds a bound variable"});
    for (const auto& b : recommender::join_bridges({tables.begin(), tables.end()}, catalog))
      rec.tables.push_back({b, recommender::kBridgeReason});
    rec.erd_doc = recommender::render_erd(rec.table_names(), catalog, rec.key_columns);

    text2sql::SqlPipelineTrace trace;
    try {
      trace = text2sql::run_pipeline_with(retrieval_request(q), rec, catalog, connection, provider, options.sql);
    } catch (const text2sql::PipelineError& e) {
      if (trace_out) *trace_out = e.trace();
      throw RetrievalError(std::string("text2sql failed: ") + e.what(), e.trace());
    }
    if (trace_out) *trace_out = trace;
    if (trace.status != text2sql::PipelineStatus::Success)
      throw RetrievalError("text2sql ended with status " + std::string(text2sql::to_string(trace.status)), trace);
    sql = *trace.final_sql;
  }
  auto ex = text2sql::execute_sql(sql, connection);
  if (!ex.attempt.execution_ok)
    throw RetrievalError("retrieval SQL failed: " + ex.attempt.error_message.value_or(""), std::nullopt);
  auto out = encode(q, *ex.result, catalog, options.normalize_covariates);
  out.sql = sql;
  return out;
}

namespace {

bool binary_column(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0 || x == 1.0; });
}

const char* kConfigSystem =
    "[task:config_selector] You choose a causal inference strategy for the question, variables and data sample. "
    "The task is effect_estimation and identification uses the backdoor criterion. Options:\n"
    "- linear_regression: OLS of outcome on treatment and the adjustment set; any numeric treatment.\n"
    "- propensity_weighting: inverse propensity weighting; binary treatment only.\n"
    "- propensity_stratification: compare arms within propensity score strata; binary treatment only.\n"
    "- propensity_matching: nearest-neighbour matching on the propensity score; binary treatment only.\n"
    "Refutation (optional):\n"
    "- placebo_treatment: replace the treatment with a random permutation; the effect should vanish.\n"
    "- random_common_cause: add a random confounder; the estimate should not move.\n"
    "- data_subset: re-estimate on a random 80% subset; the interval should stay compatible.\n"
    "Reply with JSON: {\"task\": \"effect_estimation\", \"identification\": \"backdoor\", \"estimation\": \"...\", "
    "\"refutation\": \"... or null\", \"rationale\": \"...\"}";

}  // namespace

void repair_spec(CausalModelSpec& spec, const PreparedDataset& data, std::vector<std::string>& notes) {
  if (causal::is_propensity(spec.estimation) && !binary_column(data.data.column(spec.treatment))) {
    notes.push_back("repaired: " + std::string(causal::to_string(spec.estimation)) +
                    " needs a binary treatment; using linear_regression");
    spec.estimation = Estimation::LinearRegression;
  }
}

ConfigSelection select_config(const CausalQuery& q, const PreparedDataset& data, const llm::Provider& provider,
                              std::uint64_t seed) {
  ConfigSelection sel;
  sel.spec.graph = q.graph;
  sel.spec.treatment = q.treatment;
  sel.spec.outcome = q.outcome;
  sel.spec.seed = seed;

  llm::ChatRequest req;
  req.system_text = kConfigSystem;
  req.add_context("question", q.effect_question);
  {
    nlohmann::json vars = {{"treatment", q.treatment},
                           {"outcome", q.outcome},
                           {"treatment_is_binary", binary_column(data.data.column(q.treatment))},
                           {"graph", causal::format_graph(q.graph)},
                           {"encodings", to_json(data)["encodings"]}};
    req.add_context("variables", vars.dump(1));
  }
  req.add_context("data_sample", data.sample(kConfigSampleRows).dump());
  req.user_text = "Select the estimation method and an optional refutation.";
  req.output_schema_hint = "CausalConfig";

  nlohmann::json j;
  try {
    j = *provider.chat(req).parsed;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::ParseFailure) throw;
    sel.used_fallback = true;
    sel.confidence = 0.5;
    sel.spec.estimation = Estimation::LinearRegression;
    sel.spec.refutation = causal::Refutation::PlaceboTreatment;
    sel.notes.push_back("fallback: configuration reply unparseable; using linear_regression with placebo_treatment");
    return sel;
  }
  auto est_text = j["estimation"].get<std::string>();
  if (auto e = causal::parse_estimation(est_text)) {
    sel.spec.estimation = *e;
  } else {
    sel.spec.estimation = Estimation::LinearRegression;
    sel.notes.push_back("repaired: unknown estimation '" + est_text + "'; using linear_regression");
  }
  if (auto it = j.find("refutation"); it != j.end() && it->is_string() && !text::trim(it->get<std::string>()).empty() &&
                                      text::to_lower(it->get<std::string>()) != "none") {
    if (auto r = causal::parse_refutation(it->get<std::string>())) {
      sel.spec.refutation = *r;
    } else {
      sel.notes.push_back("repaired: unknown refutation '" + it->get<std::string>() + "'; none applied");
    }
  }
  repair_spec(sel.spec, data, sel.notes);
  return sel;
}

ModelResult implement_model(const CausalModelSpec& spec, const PreparedDataset& data, const ModelOptions& options) {
  causal::validate_graph(spec.graph);
  ModelResult out;
  out.estimand = causal::identify_backdoor(spec.graph, spec.treatment, spec.outcome);
  // The engine works on dataset columns; one-hot variables expand to dummies.
  causal::Estimand engine = out.estimand;
  engine.adjustment_set = data.columns_for(out.estimand.adjustment_set);
  causal::EstimateOptions eo;
  eo.ci_level = options.ci_level;
  eo.bootstrap = options.bootstrap;
  eo.seed = spec.seed;
  out.estimate = causal::estimate(data.data, spec, engine, eo);
  if (spec.refutation) out.refutation = causal::refute(spec, engine, data.data, out.estimate, *spec.refutation, eo);
  return out;
}

namespace {

const char* kInterpretSystem =
    "[task:interpreter] Explain a causal effect estimate to a business analyst in 3 to 6 sentences. State the "
    "estimated effect with its confidence interval, whether it is statistically significant, the main assumptions "
    "(the adjustment set and the causal graph) and any limitation raised by the refutation test. Plain prose only.";

std::string describe_variable(const CausalQuery& q, const std::string& v) {
  auto it = q.variable_bindings.find(v);
  return v + (it != q.variable_bindings.end() ? " (" + it->second.qualified() + ")" : "");
}

std::string clip_sentences(const std::vector<std::string>& s, std::size_t n) {
  std::vector<std::string> head(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(std::min(n, s.size())));
  return text::join(head, " ");
}

}  // namespace

Interpretation interpret(const ModelResult& r, const CausalQuery& q, const llm::Provider& provider,
                         const std::optional<std::string>& extra_context) {
  const auto& e = r.estimate;
  bool significant = !e.covers(0.0);
  llm::ChatRequest req;
  req.system_text = kInterpretSystem;
  {
    std::ostringstream os;
    os << "ATE = " << text::fmt_num(e.ate) << ", " << text::fmt_num(e.ci_level * 100, 3) << "% CI ["
       << text::fmt_num(e.ci_low) << ", " << text::fmt_num(e.ci_high) << "], method " << e.method << ", n = " << e.n_used;
    req.add_context("estimate", os.str());
  }
  req.add_context("significance", significant ? "statistically significant: the confidence interval excludes 0"
                                              : "NOT statistically significant: the confidence interval covers 0; "
                                                "the summary must say the effect is not distinguishable from zero");
  {
    std::ostringstream os;
    os << "treatment: " << describe_variable(q, q.treatment) << "\noutcome: " << describe_variable(q, q.outcome)
       << "\nadjustment set: "
       << (r.estimand.adjustment_set.empty() ? "none" : text::join(r.estimand.adjustment_set, ", "))
       << "\nestimand: " << r.estimand.expression_text;
    if (!r.estimand.directed_path) os << "\nwarning: the graph has no directed path from treatment to outcome";
    req.add_context("variables", os.str());
  }
  req.add_context("refutation", r.refutation ? std::string(r.refutation->passed ? "passed" : "suspicious") + " (" +
                                                   std::string(causal::to_string(r.refutation->technique)) + "): " +
                                                   r.refutation->detail
                                             : "none run");
  if (extra_context) req.add_context("user_feedback", *extra_context);
  req.user_text = q.effect_question.empty() ? q.raw_text : q.effect_question;
  if (text::trim(req.user_text).empty()) req.user_text = "Interpret the effect of " + q.treatment + " on " + q.outcome + ".";

  Interpretation out;
  auto text = text::trim(provider.chat(req).text);
  auto s = text::sentences(text);
  if (s.size() < kMinSentences || s.size() > kMaxSentences) {
    out.notes.push_back("regenerated: first reply had " + std::to_string(s.size()) + " sentences");
    req.add_context("previous_reply", text);
    req.user_text += "\n\nYour previous answer had " + std::to_string(s.size()) +
                     " sentences. Answer again in 3 to 6 sentences.";
    text = text::trim(provider.chat(req).text);
    s = text::sentences(text);
  }
  if (s.size() > kMaxSentences) {
    out.notes.push_back("truncated from " + std::to_string(s.size()) + " to 6 sentences");
    text = clip_sentences(s, kMaxSentences);
  } else if (s.size() < kMinSentences) {
    out.notes.push_back("accepted with " + std::to_string(s.size()) + " sentences after one regeneration");
  }
  out.text = text;
  return out;
}

nlohmann::json to_json(const AnalysisReport& r, bool include_dataset) {
  nlohmann::json trace = nlohmann::json::array();
  for (const auto& e : r.trace) trace.push_back({{"stage", e.stage}, {"data", e.payload}});
  nlohmann::json j = {{"status", r.status}, {"query", to_json(r.query)}, {"interpretation", r.interpretation}, {"trace", trace}};
  if (r.failed_stage) j["failed_stage"] = *r.failed_stage;
  if (r.error) j["error"] = *r.error;
  if (r.spec) j["spec"] = causal::to_json(*r.spec);
  if (r.result) {
    j["estimand"] = causal::to_json(r.result->estimand);
    j["estimate"] = causal::to_json(r.result->estimate);
    if (r.result->refutation) j["refutation"] = causal::to_json(*r.result->refutation);
  }
  if (r.dataset) {
    j["dataset"] = to_json(*r.dataset);
    if (include_dataset) j["dataset"]["preview"] = r.dataset->sample(50);
  }
  return j;
}

std::string render_log(const AnalysisReport& r) {
  std::ostringstream os;
  os << "Question: " << (r.query.effect_question.empty() ? r.query.raw_text : r.query.effect_question) << "\n";
  os << "Treatment: " << r.query.treatment << "  Outcome: " << r.query.outcome << "\n";
  if (r.dataset) {
    os << "\n[data] " << r.dataset->row_count << " rows (" << r.dataset->dropped_rows << " dropped)\nSQL: "
       << r.dataset->sql << "\n";
  }
  if (r.spec) {
    os << "\n[config] estimation " << causal::to_string(r.spec->estimation) << ", refutation "
       << (r.spec->refutation ? std::string(causal::to_string(*r.spec->refutation)) : "none") << "\n";
  }
  if (r.result) {
    const auto& e = r.result->estimate;
    os << "\n[estimand] " << r.result->estimand.expression_text << "\n";
    os << "[estimate] ATE " << text::fmt_num(e.ate) << "  95% CI [" << text::fmt_num(e.ci_low) << ", "
       << text::fmt_num(e.ci_high) << "]  n=" << e.n_used << "\n";
    if (r.result->refutation)
      os << "[refutation] " << causal::to_string(r.result->refutation->technique) << ": "
         << (r.result->refutation->passed ? "passed" : "suspicious") << " - " << r.result->refutation->detail << "\n";
  }
  if (!r.interpretation.empty()) os << "\n" << r.interpretation << "\n";
  if (!r.complete()) os << "\nFAILED at " << r.failed_stage.value_or("?") << ": " << r.error.value_or("") << "\n";
  return os.str();
}

namespace {

nlohmann::json model_payload(const ModelResult& m) {
  nlohmann::json j = {{"estimand", causal::to_json(m.estimand)}, {"estimate", causal::to_json(m.estimate)}};
  if (m.refutation) j["refutation"] = causal::to_json(*m.refutation);
  return j;
}

void emit(AnalysisReport& r, const AnalyzeOptions& options, StageEvent e) {
  r.trace.push_back(std::move(e));
  if (options.on_stage) options.on_stage(r.trace.back());
}

void fail_stage(AnalysisReport& r, const AnalyzeOptions& options, const std::string& stage, const Error& e) {
  r.status = "failed";
  r.failed_stage = stage;
  r.error = e.what();
  r.error_code = e.code();
  emit(r, options, {"error", {{"stage", stage}, {"error", e.what()}}});
}

void finish_from_model(AnalysisReport& report, const llm::Provider& provider, const AnalyzeOptions& options) {
  std::string stage = "implement_model";
  try {
    report.result = implement_model(*report.spec, *report.dataset, options.model);
    emit(report, options, {stage, model_payload(*report.result)});
    stage = "interpret";
    auto interp = interpret(*report.result, report.query, provider, options.feedback);
    report.interpretation = interp.text;
    emit(report, options, {stage, {{"text", interp.text}, {"notes", interp.notes}}});
  } catch (const Error& e) {
    fail_stage(report, options, stage, e);
  }
}

}  // namespace

AnalysisReport analyze(const CausalQuery& q, const catalog::SchemaCatalog& catalog, db::Connection& connection,
                       const llm::Provider& provider, const AnalyzeOptions& options) {
  AnalysisReport report;
  report.query = q;
  emit(report, options, {"parse", to_json(q)});

  std::optional<text2sql::SqlPipelineTrace> sql_trace;
  try {
    report.dataset = prepare_data(q, catalog, connection, provider, options.prepare, &sql_trace);
    nlohmann::json payload = to_json(*report.dataset);
    payload["mode"] = q.oracle_sql ? "oracle" : "agentic";
    if (sql_trace) payload["text2sql"] = text2sql::to_json(*sql_trace);
    emit(report, options, {"prepare_data", payload});
    emit(report, options, {"data_preview", report.dataset->sample(10)});
  } catch (const Error& e) {
    if (sql_trace) emit(report, options, {"text2sql", text2sql::to_json(*sql_trace)});
    fail_stage(report, options, "prepare_data", e);
    return report;
  }

  try {
    auto sel = select_config(q, *report.dataset, provider, options.seed);
    if (options.estimation) sel.spec.estimation = *options.estimation;
    if (options.refutation) sel.spec.refutation = *options.refutation;
    if (options.estimation || options.refutation) {
      sel.notes.push_back("override applied from user feedback");
      repair_spec(sel.spec, *report.dataset, sel.notes);
    }
    report.spec = sel.spec;
    emit(report, options, {"select_config",
                            {{"spec", causal::to_json(sel.spec)},
                             {"confidence", sel.confidence},
                             {"fallback", sel.used_fallback},
                             {"notes", sel.notes}}});
  } catch (const Error& e) {
    fail_stage(report, options, "select_config", e);
    return report;
  }
  finish_from_model(report, provider, options);
  return report;
}

AnalysisReport rerun_model(const AnalysisReport& previous, const CausalModelSpec& spec, const llm::Provider& provider,
                           const AnalyzeOptions& options) {
  require(previous.dataset.has_value(), "rerun_model: previous report has no prepared data");
  AnalysisReport report;
  report.query = previous.query;
  report.dataset = previous.dataset;
  auto s = spec;
  std::vector<std::string> notes;
  repair_spec(s, *report.dataset, notes);
  report.spec = s;
  emit(report, options, {"select_config", {{"spec", causal::to_json(s)}, {"override", true}, {"notes", notes}}});
  finish_from_model(report, provider, options);
  return report;
}

}  // namespace orca::analyzer
