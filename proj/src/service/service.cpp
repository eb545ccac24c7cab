#include "orca/service/service.h"

#include <algorithm>
#include <random>
#include <sstream>

#include "orca/analyzer/analyzer.h"
#include "orca/catalog/store.h"
#include "orca/common/error.h"
#include "orca/common/text.h"
#include "orca/db/connection.h"
#include "orca/explorer/explorer.h"
#include "orca/recommender/recommender.h"
#include "orca/router/router.h"
#include "orca/service/feedback.h"
#include "orca/text2sql/text2sql.h"

namespace orca::service {

namespace fs = std::filesystem;
using nlohmann::json;

struct SessionRuntime {
  mutable std::mutex mutex;
  mutable std::condition_variable cv;
  SessionState state;
  std::unique_ptr<EventLog> log;
  bool running = false;
  /// Latest completed causal report with its prepared data. Not persisted:
  /// after a restart refinement re-runs from the logged query instead.
  std::optional<analyzer::AnalysisReport> last_report;

  /// Caller holds `mutex`.
  Event append_locked(const std::string& request, std::string stage, json payload, bool terminal) {
    Event e{state.last_seq() + 1, std::move(stage), std::move(payload), terminal, request};
    log->append(e);
    state.apply(e);
    cv.notify_all();
    return e;
  }

  Event append(const std::string& request, std::string stage, json payload, bool terminal) {
    std::lock_guard lock(mutex);
    return append_locked(request, std::move(stage), std::move(payload), terminal);
  }
};

namespace {

fs::path sessions_dir(const AppConfig& c) { return c.state_dir / "sessions"; }

std::string new_session_id() {
  std::random_device rd;
  char buf[17];
  std::snprintf(buf, sizeof buf, "%08x%08x", rd(), rd());
  return buf;
}

router::RoutedQuery routed_from_json(const json& j) {
  router::RoutedQuery r;
  r.raw_text = j.at("raw_text").get<std::string>();
  if (auto k = router::parse_kind(j.value("kind", std::string()))) r.kind = *k;
  if (auto s = router::parse_sub_intent(j.value("sub_intent", std::string()))) r.sub_intent = *s;
  r.confidence = j.value("confidence", 0.0);
  r.used_fallback = j.value("used_fallback", false);
  if (j.contains("clarification_needed")) r.clarification_needed = j["clarification_needed"].get<std::string>();
  if (j.contains("target_table")) r.target_table = j["target_table"].get<std::string>();
  return r;
}

json error_payload(const Error& e) {
  return {{"error", e.detail()}, {"code", std::string(to_string(e.code()))}};
}

std::string trace_jsonl(const std::vector<analyzer::StageEvent>& trace) {
  std::string out;
  for (const auto& e : trace) out += json{{"stage", e.stage}, {"payload", e.payload}}.dump() + "\n";
  return out;
}

/// A table named in the text, longest name first.
std::optional<std::string> mentioned_table(const std::string& text, const catalog::SchemaCatalog& cat) {
  auto lower = text::to_lower(text);
  std::optional<std::string> best;
  for (const auto& [name, info] : cat.tables) {
    auto n = text::to_lower(name);
    for (auto pos = lower.find(n); pos != std::string::npos; pos = lower.find(n, pos + 1)) {
      auto word = [&](std::size_t i) {
        return i < lower.size() && (std::isalnum(static_cast<unsigned char>(lower[i])) || lower[i] == '_');
      };
      if ((pos == 0 || !word(pos - 1)) && !word(pos + n.size())) {
        if (!best || name.size() > best->size()) best = name;
        break;
      }
    }
  }
  return best;
}

}  // namespace

/// Everything one request needs while it runs on a worker.
struct RequestRun {
  Service& svc;
  SessionRuntime& rt;
  std::string request;
  std::shared_ptr<const catalog::SchemaCatalog> cat;
  std::optional<db::Connection> conn;

  const llm::Provider& provider() const { return *svc.provider_; }

  Event emit(std::string stage, json payload, bool terminal = false) {
    return rt.append(request, std::move(stage), std::move(payload), terminal);
  }

  std::string artifact(const std::string& kind, const std::string& content_type, std::string body) {
    std::string id;
    {
      std::lock_guard lock(rt.mutex);
      id = "art-" + std::to_string(rt.state.artifacts.size() + 1);
      rt.append_locked(request, kArtifact,
                       {{"artifact_id", id}, {"kind", kind}, {"content_type", content_type}, {"body", std::move(body)}},
                       false);
    }
    return id;
  }

  db::Connection& connection() {
    if (!conn) {
      auto it = svc.config_.databases.find(cat->database_id);
      conn = db::Connection::open(it != svc.config_.databases.end() ? it->second : cat->connection,
                                  db::OpenMode::ReadOnly);
    }
    return *conn;
  }

  void ask(const std::string& stage, const std::string& question, json context) {
    emit(kAwaiting, {{"stage", stage}, {"awaiting", "clarification"}, {"question", question}, {"context", context}});
  }

  analyzer::AnalyzeOptions analyze_options() {
    analyzer::AnalyzeOptions o;
    o.seed = svc.config_.seed;
    o.model.bootstrap = svc.config_.bootstrap;
    o.prepare.sql.max_attempts = svc.config_.max_attempts;
    o.prepare.sql.candidates = svc.config_.candidates;
    o.on_stage = [this](const analyzer::StageEvent& e) { emit(e.stage, e.payload); };
    return o;
  }

  void route(const std::string& text) {
    auto routed = router::route(text, catalog::summarize(*cat), provider());
    routed_then_dispatch(routed);
  }

  void routed_then_dispatch(const router::RoutedQuery& routed) {
    emit("routed", router::to_json(routed));
    if (routed.clarification_needed) {
      ask("route", *routed.clarification_needed, {{"routed", router::to_json(routed)}});
      return;
    }
    if (routed.kind == router::QueryKind::Causal || routed.sub_intent == router::SubIntent::EffectEstimation) {
      causal_from_text(routed.raw_text);
      return;
    }
    switch (routed.sub_intent) {
      case router::SubIntent::ExploreTable: {
        auto table = routed.target_table;
        if (!table || !cat->find_table(*table)) table = mentioned_table(routed.raw_text, *cat);
        if (!table) {
          std::vector<std::string> names;
          for (const auto& [n, t] : cat->tables) names.push_back(n);
          ask("explore", "Which table should I explore? Tables: " + text::join(names, ", "),
              {{"text", routed.raw_text}});
          return;
        }
        explore(*table);
        return;
      }
      case router::SubIntent::RecommendTables: recommend(routed.raw_text); return;
      case router::SubIntent::Text2Sql:
      case router::SubIntent::EffectEstimation: sql(routed.raw_text); return;
    }
  }

  void explore(const std::string& table) {
    auto overview = explorer::explore(table, *cat, provider());
    emit("overview", explorer::to_json(overview));
    emit(kComplete, {{"result_kind", "table_overview"}, {"table", table}, {"text", explorer::render_text(overview)}},
         true);
  }

  void recommend(const std::string& text) {
    auto rec = recommender::recommend(text, *cat, provider(), svc.config_.candidates);
    emit("recommendation", recommender::to_json(rec));
    auto erd = artifact("erd", "text/vnd.graphviz", recommender::render_erd(rec.table_names(), *cat, rec.key_columns));
    emit(kComplete, {{"result_kind", "recommendation"}, {"tables", rec.table_names()}, {"artifacts", {erd}}}, true);
  }

  void sql(const std::string& text) {
    text2sql::PipelineOptions opts;
    opts.max_attempts = svc.config_.max_attempts;
    opts.candidates = svc.config_.candidates;
    text2sql::SqlPipelineTrace trace;
    try {
      trace = text2sql::run_pipeline(text, *cat, connection(), provider(), opts);
    } catch (const text2sql::PipelineError& e) {
      for (const auto& ev : e.trace().events) emit(ev.stage, ev.payload);
      throw;
    }
    for (const auto& ev : trace.events) emit(ev.stage, ev.payload);
    std::vector<std::string> arts;
    if (!trace.recommendation.tables.empty())
      arts.push_back(artifact("erd", "text/vnd.graphviz",
                              recommender::render_erd(trace.recommendation.table_names(), *cat,
                                                      trace.recommendation.key_columns)));
    arts.push_back(artifact("trace", "application/x-ndjson", text2sql::to_jsonl(trace)));
    json preview;
    if (trace.result_preview) {
      preview = db::to_json(*trace.result_preview, 20);
      arts.push_back(artifact("dataset_preview", "application/json", preview.dump(1)));
    }
    emit(kComplete,
         {{"result_kind", "sql_result"},
          {"status", std::string(text2sql::to_string(trace.status))},
          {"final_sql", trace.final_sql ? json(*trace.final_sql) : json()},
          {"attempts", trace.attempts.size()},
          {"preview", preview},
          {"artifacts", arts}},
         true);
  }

  void causal_from_text(const std::string& text) {
    auto parsed = analyzer::parse_causal_query(text, *cat, provider());
    if (!parsed.query) {
      ask("parse", parsed.clarification.value_or("Please state the treatment, the outcome and the causal graph."),
          {{"text", text}});
      return;
    }
    run_causal(*parsed.query, analyze_options());
  }

  void run_causal(const analyzer::CausalQuery& q, const analyzer::AnalyzeOptions& opts) {
    finish_causal(analyzer::analyze(q, *cat, connection(), provider(), opts));
  }

  void finish_causal(const analyzer::AnalysisReport& report) {
    std::vector<std::string> arts;
    auto doc = analyzer::to_json(report);
    arts.push_back(artifact("report", "application/json", doc.dump(1)));
    arts.push_back(artifact("trace", "application/x-ndjson", trace_jsonl(report.trace)));
    if (report.dataset)
      arts.push_back(artifact("dataset_preview", "application/json", report.dataset->sample(20).dump(1)));
    json payload = {{"result_kind", "causal_report"}, {"report", doc}, {"log", analyzer::render_log(report)},
                    {"artifacts", arts}};
    if (report.complete()) {
      {
        std::lock_guard lock(rt.mutex);
        rt.last_report = report;
      }
      emit(kComplete, payload, true);
    } else {
      payload["error"] = report.error.value_or("");
      payload["code"] = report.error_code ? json(std::string(to_string(*report.error_code))) : json();
      payload["failed_stage"] = report.failed_stage.value_or("");
      emit(kFailed, payload, true);
    }
  }

  void resume(const Pending& pending, const std::string& reply) {
    if (pending.stage == "route") {
      auto routed = router::request_clarification(routed_from_json(pending.context.at("routed")), reply,
                                                  catalog::summarize(*cat), provider());
      routed_then_dispatch(routed);
    } else if (pending.stage == "parse") {
      causal_from_text(pending.context.at("text").get<std::string>() + "\n" + reply);
    } else if (pending.stage == "explore") {
      auto table = mentioned_table(reply, *cat).value_or(text::trim(reply));
      explore(table);
    } else {
      fail(ErrorCode::Precondition, "cannot resume stage '" + pending.stage + "'");
    }
  }

  void refine(const std::string& text, const json& last) {
    auto d = parse_feedback(text);
    std::optional<analyzer::AnalysisReport> previous;
    {
      std::lock_guard lock(rt.mutex);
      previous = rt.last_report;
    }
    auto opts = analyze_options();
    if (!d.remainder.empty()) opts.feedback = d.remainder;
    auto query = [&] {
      return previous ? previous->query : analyzer::query_from_json(last.at("report").at("query"), *cat);
    };
    json note = {{"directives", to_json(d)}};

    if (!d.rebindings.empty()) {
      auto q = query();
      for (const auto& [var, ref] : d.rebindings) q.variable_bindings[var] = analyzer::resolve_binding(ref, *cat);
      q.oracle_sql.reset();
      opts.estimation = d.estimation;
      opts.refutation = d.refutation;
      note["rerun_from"] = "prepare_data";
      emit("feedback_parsed", note);
      run_causal(q, opts);
      return;
    }
    if (!previous) {
      // Prepared data is not kept across restarts; re-run with the overrides.
      opts.estimation = d.estimation;
      opts.refutation = d.refutation;
      note["rerun_from"] = "prepare_data";
      note["reason"] = "prepared data not in memory";
      emit("feedback_parsed", note);
      run_causal(query(), opts);
      return;
    }
    if (d.estimation || d.refutation) {
      auto spec = *previous->spec;
      if (d.estimation) spec.estimation = *d.estimation;
      if (d.refutation) spec.refutation = *d.refutation;
      note["rerun_from"] = "implement_model";
      emit("feedback_parsed", note);
      finish_causal(analyzer::rerun_model(*previous, spec, provider(), opts));
      return;
    }
    note["rerun_from"] = "interpret";
    emit("feedback_parsed", note);
    auto report = *previous;
    report.trace.clear();
    auto interp = analyzer::interpret(*report.result, report.query, provider(), text);
    report.interpretation = interp.text;
    report.trace.push_back({"interpret", {{"text", interp.text}, {"notes", interp.notes}}});
    emit("interpret", report.trace.back().payload);
    finish_causal(report);
  }
};

Service::Service(AppConfig config, std::shared_ptr<const llm::Provider> provider)
    : config_(std::move(config)), provider_(std::move(provider)) {
  require(provider_ != nullptr, "Service needs a provider");
  std::error_code ec;
  fs::create_directories(sessions_dir(config_), ec);
  if (ec || !fs::is_directory(sessions_dir(config_)))
    fail(ErrorCode::StateDirUnwritable, "cannot create " + sessions_dir(config_).string());
  recover();
  for (int i = 0; i < config_.workers; ++i) workers_.emplace_back([this] { worker_loop(); });
}

Service::~Service() { shutdown(); }

void Service::shutdown() {
  {
    std::lock_guard lock(queue_mutex_);
    if (stopping_ && workers_.empty()) return;
    stopping_ = true;
  }
  queue_cv_.notify_all();
  for (auto& w : workers_)
    if (w.joinable()) w.join();
  workers_.clear();
}

void Service::recover() {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(sessions_dir(config_)))
    if (entry.path().extension() == ".jsonl") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  for (const auto& path : files) {
    auto id = path.stem().string();
    auto loaded = EventLog::read(path);
    auto rt = std::make_shared<SessionRuntime>();
    rt->state = replay(id, loaded.events);
    rt->log = std::make_unique<EventLog>(path);
    if (rt->state.open_request && !rt->state.pending) {
      rt->append(*rt->state.open_request, kInterrupted,
                 {{"reason", "the service stopped before the request finished"},
                  {"truncated_bytes", loaded.truncated_bytes}},
                 true);
      recovered_.push_back(id);
    }
    sessions_[id] = rt;
  }
}

std::shared_ptr<SessionRuntime> Service::runtime(const std::string& session_id) const {
  std::lock_guard lock(sessions_mutex_);
  auto it = sessions_.find(session_id);
  if (it == sessions_.end()) fail(ErrorCode::UnknownSession, "no session '" + session_id + "'");
  return it->second;
}

std::shared_ptr<const catalog::SchemaCatalog> Service::catalog_for(const std::string& database_id) {
  std::lock_guard lock(catalogs_mutex_);
  auto it = catalogs_.find(database_id);
  if (it != catalogs_.end()) return it->second;
  catalog::CatalogStore store(config_.state_dir);
  if (!store.exists(database_id))
    fail(ErrorCode::UnknownDatabaseId, "no catalog for database '" + database_id + "'; run catalog sync");
  auto cat = std::make_shared<const catalog::SchemaCatalog>(store.load(database_id));
  catalogs_[database_id] = cat;
  return cat;
}

SessionState Service::create_session(const std::string& database_id) {
  catalog_for(database_id);
  auto rt = std::make_shared<SessionRuntime>();
  std::string id;
  {
    std::lock_guard lock(sessions_mutex_);
    do {
      id = new_session_id();
    } while (sessions_.count(id) || fs::exists(sessions_dir(config_) / (id + ".jsonl")));
    rt->state.session_id = id;
    rt->log = std::make_unique<EventLog>(sessions_dir(config_) / (id + ".jsonl"));
    sessions_[id] = rt;
  }
  rt->append("", kSessionCreated, {{"database_id", database_id}}, false);
  std::lock_guard lock(rt->mutex);
  return rt->state;
}

void Service::enqueue(std::function<void()> job) {
  {
    std::lock_guard lock(queue_mutex_);
    if (stopping_) fail(ErrorCode::Precondition, "service is shutting down");
    queue_.push_back(std::move(job));
  }
  queue_cv_.notify_one();
}

void Service::worker_loop() {
  for (;;) {
    std::function<void()> job;
    {
      std::unique_lock lock(queue_mutex_);
      queue_cv_.wait(lock, [&] { return stopping_ || !queue_.empty(); });
      if (queue_.empty()) return;
      job = std::move(queue_.front());
      queue_.pop_front();
    }
    job();
  }
}

std::string Service::start(const std::shared_ptr<SessionRuntime>& rt, const std::string& stage,
                           const std::string& text, const std::string& continues, bool wait,
                           std::function<void(const std::string&)> job) {
  std::string request = continues;
  {
    std::lock_guard lock(rt->mutex);
    if (request.empty()) request = "req-" + std::to_string(rt->state.last_seq() + 1);
    rt->append_locked(request, stage, {{"text", text}}, false);
    rt->running = true;
  }
  auto run = [this, rt, request, job = std::move(job)] {
    try {
      job(request);
    } catch (const Error& e) {
      try {
        rt->append(request, kFailed, error_payload(e), true);
      } catch (...) {
      }
    } catch (const std::exception& e) {
      try {
        rt->append(request, kFailed, {{"error", e.what()}, {"code", "Internal"}}, true);
      } catch (...) {
      }
    }
    std::lock_guard lock(rt->mutex);
    rt->running = false;
    rt->cv.notify_all();
  };
  try {
    enqueue(std::move(run));
  } catch (...) {
    std::lock_guard lock(rt->mutex);
    rt->running = false;
    throw;
  }
  if (wait) wait_idle(rt->state.session_id);
  return request;
}

std::string Service::submit_query(const std::string& session_id, const std::string& text, bool wait) {
  auto rt = runtime(session_id);
  if (text::trim(text).empty()) fail(ErrorCode::EmptyQuery, "query text is empty");
  {
    std::lock_guard lock(rt->mutex);
    if (rt->running) fail(ErrorCode::SessionBusy, "session " + session_id + " is running a request");
    if (rt->state.pending)
      fail(ErrorCode::SessionBusy, "session " + session_id + " is waiting for a reply to: " +
                                       rt->state.pending->context.dump());
  }
  return start(rt, kUserQuery, text, "", wait, [this, rt, text](const std::string& request) {
    RequestRun run{*this, *rt, request, catalog_for(rt->state.database_id), std::nullopt};
    run.route(text);
  });
}

std::string Service::submit_feedback(const std::string& session_id, const std::string& text, bool wait) {
  auto rt = runtime(session_id);
  if (text::trim(text).empty()) fail(ErrorCode::EmptyQuery, "feedback text is empty");
  std::optional<Pending> pending;
  std::optional<json> last;
  {
    std::lock_guard lock(rt->mutex);
    if (rt->running) fail(ErrorCode::SessionBusy, "session " + session_id + " is running a request");
    pending = rt->state.pending;
    last = rt->state.last_causal;
    if (!pending && !last) fail(ErrorCode::NothingToRefine, "no pending question and no causal report to refine");
  }
  // A reply continues the paused request; a refinement is a new one.
  auto continues = pending ? pending->request_id : std::string();
  return start(rt, kUserFeedback, text, continues, wait, [this, rt, text, pending, last](const std::string& request) {
    RequestRun run{*this, *rt, request, catalog_for(rt->state.database_id), std::nullopt};
    if (pending) {
      run.resume(*pending, text);
    } else {
      run.refine(text, *last);
    }
  });
}

std::vector<Event> Service::events(const std::string& session_id, std::int64_t after) const {
  auto rt = runtime(session_id);
  std::lock_guard lock(rt->mutex);
  const auto& h = rt->state.history;
  auto first = std::max<std::int64_t>(after, 0);
  if (first >= static_cast<std::int64_t>(h.size())) return {};
  return {h.begin() + first, h.end()};
}

std::vector<Event> Service::wait_events(const std::string& session_id, std::int64_t after,
                                        std::chrono::milliseconds timeout) const {
  auto rt = runtime(session_id);
  std::unique_lock lock(rt->mutex);
  rt->cv.wait_for(lock, timeout, [&] { return rt->state.last_seq() > after; });
  const auto& h = rt->state.history;
  auto first = std::max<std::int64_t>(after, 0);
  if (first >= static_cast<std::int64_t>(h.size())) return {};
  return {h.begin() + first, h.end()};
}

Artifact Service::artifact(const std::string& session_id, const std::string& artifact_id) const {
  auto rt = runtime(session_id);
  std::lock_guard lock(rt->mutex);
  auto it = rt->state.artifacts.find(artifact_id);
  if (it == rt->state.artifacts.end())
    fail(ErrorCode::UnknownArtifact, "no artifact '" + artifact_id + "' in session " + session_id);
  return it->second;
}

SessionState Service::state(const std::string& session_id) const {
  auto rt = runtime(session_id);
  std::lock_guard lock(rt->mutex);
  return rt->state;
}

bool Service::running(const std::string& session_id) const {
  auto rt = runtime(session_id);
  std::lock_guard lock(rt->mutex);
  return rt->running;
}

void Service::wait_idle(const std::string& session_id) const {
  auto rt = runtime(session_id);
  std::unique_lock lock(rt->mutex);
  rt->cv.wait(lock, [&] { return !rt->running; });
}

std::vector<std::string> Service::session_ids() const {
  std::lock_guard lock(sessions_mutex_);
  std::vector<std::string> out;
  for (const auto& [id, rt] : sessions_) out.push_back(id);
  return out;
}

}  // namespace orca::service
