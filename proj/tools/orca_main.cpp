// Command-line front end: catalog sync, the single-step agents, the causal
// analyzer, the synthetic database generator, evaluation, and the service.

#include <csignal>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "orca/analyzer/analyzer.h"
#include "orca/catalog/store.h"
#include "orca/common/error.h"
#include "orca/common/text.h"
#include "orca/eval/eval.h"
#include "orca/explorer/explorer.h"
#include "orca/recommender/recommender.h"
#include "orca/reef/reef.h"
#include "orca/service/config.h"
#include "orca/service/service.h"
#include "orca/text2sql/text2sql.h"

// After Eigen: <resolv.h> defines _res.
#include "orca/service/http.h"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace orca;

namespace {

struct Globals {
  std::string config_path;
  std::string state_dir;
  std::string mock_script;
  std::optional<std::uint64_t> seed;
};

service::AppConfig app_config(const Globals& g) {
  auto c = g.config_path.empty() ? service::AppConfig{} : service::load_config(g.config_path);
  if (!g.state_dir.empty()) c.state_dir = g.state_dir;
  if (!g.mock_script.empty()) {
    c.provider.kind = "mock";
    c.provider.mock_script_path = g.mock_script;
  }
  if (g.seed) c.seed = *g.seed;
  return c;
}

void write_file(const std::string& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  out << body;
  if (!out) fail(ErrorCode::IoError, "cannot write " + path);
}

/// The given id, or the only synced catalog when none is given.
catalog::SchemaCatalog load_catalog(const service::AppConfig& c, const std::string& db_id) {
  catalog::CatalogStore store(c.state_dir);
  if (!db_id.empty()) {
    if (!store.exists(db_id)) fail(ErrorCode::UnknownDatabaseId, "no catalog for '" + db_id + "'; run catalog sync");
    return store.load(db_id);
  }
  auto ids = store.list();
  if (ids.size() != 1)
    fail(ErrorCode::Precondition, ids.empty() ? "no synced catalog; run catalog sync" : "several catalogs; pass --db");
  return store.load(ids.front());
}

db::Connection open_db(const service::AppConfig& c, const catalog::SchemaCatalog& cat) {
  auto it = c.databases.find(cat.database_id);
  return db::Connection::open(it != c.databases.end() ? it->second : cat.connection, db::OpenMode::ReadOnly);
}

analyzer::AnalyzeOptions analyze_options(const service::AppConfig& c) {
  analyzer::AnalyzeOptions o;
  o.seed = c.seed;
  o.model.bootstrap = c.bootstrap;
  o.prepare.sql.max_attempts = c.max_attempts;
  o.prepare.sql.candidates = c.candidates;
  return o;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot read " + path);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> out;
  for (const auto& part : text::split(text, ',')) {
    auto t = text::trim(part);
    if (auto dash = t.find('-'); dash != std::string::npos) {
      auto lo = std::stoull(t.substr(0, dash)), hi = std::stoull(t.substr(dash + 1));
      for (auto s = lo; s <= hi; ++s) out.push_back(s);
    } else if (!t.empty()) {
      out.push_back(std::stoull(t));
    }
  }
  return out;
}

/// Blocks SIGINT/SIGTERM in every thread and stops the server on the first one.
std::thread stop_on_signal(service::HttpServer& server) {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);
  return std::thread([set, &server] {
    int sig = 0;
    sigwait(&set, &sig);
    server.stop();
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"orca: agentic causal analysis over relational databases"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "JSON config file")->check(CLI::ExistingFile);
  app.add_option("--state-dir", g.state_dir, "State directory (catalogs, sessions)");
  app.add_option("--mock-script", g.mock_script, "Use the mock provider with this script");
  app.add_option("--seed", g.seed, "Analysis seed");

  std::function<int()> action;

  // catalog sync
  auto* cat_cmd = app.add_subcommand("catalog", "Schema catalog");
  cat_cmd->require_subcommand(1);
  std::string sync_db;
  auto* sync = cat_cmd->add_subcommand("sync", "Snapshot a database into the state directory");
  sync->add_option("--db", sync_db, "Connection string")->required();
  sync->callback([&] {
    action = [&] {
      auto c = app_config(g);
      auto conn = db::Connection::open(sync_db, db::OpenMode::ReadOnly);
      auto cat = catalog::snapshot(conn);
      catalog::attach_embeddings(cat, *llm::make_provider(c.provider));
      auto stored = catalog::CatalogStore(c.state_dir).persist(std::move(cat));
      std::cout << "synced " << stored.database_id << ": " << stored.tables.size() << " tables -> "
                << catalog::CatalogStore(c.state_dir).path_for(stored.database_id).string() << "\n";
      return 0;
    };
  });

  // explore
  std::string table, db_id, format = "text";
  auto* explore = app.add_subcommand("explore", "Overview of one table");
  explore->add_option("table", table)->required();
  explore->add_option("--db", db_id, "Database id");
  explore->add_option("--format", format)->check(CLI::IsMember({"text", "json"}));
  explore->callback([&] {
    action = [&] {
      auto c = app_config(g);
      auto cat = load_catalog(c, db_id);
      auto o = explorer::explore(table, cat, *llm::make_provider(c.provider));
      std::cout << (format == "json" ? explorer::to_json(o).dump(2) : explorer::render_text(o)) << "\n";
      return 0;
    };
  });

  // recommend
  std::string question, erd_out;
  std::size_t k = recommender::kDefaultCandidates;
  auto* recommend = app.add_subcommand("recommend", "Tables relevant to a question");
  recommend->add_option("question", question)->required();
  recommend->add_option("--db", db_id, "Database id");
  recommend->add_option("--k", k, "Candidate pool size")->check(CLI::PositiveNumber);
  recommend->add_option("--erd-out", erd_out, "Write the ERD (Graphviz) here");
  recommend->add_option("--format", format)->check(CLI::IsMember({"text", "json"}));
  recommend->callback([&] {
    action = [&] {
      auto c = app_config(g);
      auto cat = load_catalog(c, db_id);
      auto rec = recommender::recommend(question, cat, *llm::make_provider(c.provider), k);
      if (!erd_out.empty()) write_file(erd_out, recommender::render_erd(rec.table_names(), cat, rec.key_columns));
      if (format == "json") {
        std::cout << recommender::to_json(rec).dump(2) << "\n";
      } else {
        std::cout << "objective: " << rec.objective << "\n";
        for (const auto& t : rec.tables) std::cout << "  " << t.table << " - " << t.reason << "\n";
      }
      return 0;
    };
  });

  // sql
  int max_attempts = 0;
  std::string trace_out;
  auto* sql = app.add_subcommand("sql", "Answer a question with SQL");
  sql->add_option("question", question)->required();
  sql->add_option("--db", db_id, "Database id");
  sql->add_option("--max-attempts", max_attempts, "Execution attempts including corrections")
      ->check(CLI::PositiveNumber);
  sql->add_option("--trace-out", trace_out, "Write the stage log (JSON lines) here");
  sql->add_option("--format", format)->check(CLI::IsMember({"text", "json"}));
  sql->callback([&] {
    action = [&] {
      auto c = app_config(g);
      auto cat = load_catalog(c, db_id);
      auto conn = open_db(c, cat);
      text2sql::PipelineOptions opts;
      opts.max_attempts = max_attempts > 0 ? max_attempts : c.max_attempts;
      opts.candidates = c.candidates;
      text2sql::SqlPipelineTrace trace;
      try {
        trace = text2sql::run_pipeline(question, cat, conn, *llm::make_provider(c.provider), opts);
      } catch (const text2sql::PipelineError& e) {
        if (!trace_out.empty()) write_file(trace_out, text2sql::to_jsonl(e.trace()));
        throw;
      }
      if (!trace_out.empty()) write_file(trace_out, text2sql::to_jsonl(trace));
      if (format == "json") {
        std::cout << text2sql::to_json(trace).dump(2) << "\n";
      } else {
        std::cout << "status: " << text2sql::to_string(trace.status) << " after " << trace.attempts.size()
                  << " attempt(s)\n";
        if (trace.final_sql) std::cout << *trace.final_sql << "\n";
        if (trace.result_preview) std::cout << db::to_json(*trace.result_preview, 20).dump(1) << "\n";
      }
      return trace.status == text2sql::PipelineStatus::Success ? 0 : 1;
    };
  });

  // causal
  std::string treatment, outcome, graph_file, report_out;
  std::vector<std::string> binds;
  std::optional<std::size_t> bootstrap;
  auto* causal_cmd = app.add_subcommand("causal", "Estimate a treatment effect");
  causal_cmd->add_option("question", question, "Effect question in words");
  causal_cmd->add_option("--treatment", treatment)->required();
  causal_cmd->add_option("--outcome", outcome)->required();
  causal_cmd->add_option("--graph", graph_file, "Edge list file, one `A -> B` per line")
      ->required()
      ->check(CLI::ExistingFile);
  causal_cmd->add_option("--db", db_id, "Database id");
  causal_cmd->add_option("--bind", binds, "var=table.column (bare column names are resolved)");
  causal_cmd->add_option("--bootstrap", bootstrap, "Bootstrap resamples");
  causal_cmd->add_option("--report-out", report_out, "Write the report JSON here");
  causal_cmd->add_option("--format", format)->check(CLI::IsMember({"text", "json"}));
  causal_cmd->callback([&] {
    action = [&] {
      auto c = app_config(g);
      if (bootstrap) c.bootstrap = *bootstrap;
      auto cat = load_catalog(c, db_id);
      auto conn = open_db(c, cat);
      analyzer::CausalQuery q;
      q.graph = causal::parse_graph(read_file(graph_file));
      q.treatment = treatment;
      q.outcome = outcome;
      q.effect_question = question.empty() ? "What is the effect of " + treatment + " on " + outcome + "?" : question;
      q.raw_text = q.effect_question;
      for (const auto& b : binds) {
        auto eq = b.find('=');
        if (eq == std::string::npos) fail(ErrorCode::Precondition, "--bind expects var=table.column, got " + b);
        q.variable_bindings[text::trim(b.substr(0, eq))] = analyzer::resolve_binding(text::trim(b.substr(eq + 1)), cat);
      }
      for (const auto& n : q.graph.nodes)
        if (!q.graph.latent.count(n) && !q.variable_bindings.count(n)) {
          try {
            q.variable_bindings[n] = analyzer::resolve_binding(n, cat);
          } catch (const Error&) {
            // Left unbound; check_bindings reports it.
          }
        }
      auto report = analyzer::analyze(q, cat, conn, *llm::make_provider(c.provider), analyze_options(c));
      if (!report_out.empty()) write_file(report_out, analyzer::to_json(report).dump(2));
      std::cout << (format == "json" ? analyzer::to_json(report).dump(2) : analyzer::render_log(report)) << "\n";
      return report.complete() ? 0 : 1;
    };
  });

  // reef generate
  auto* reef_cmd = app.add_subcommand("reef", "Synthetic e-commerce database");
  reef_cmd->require_subcommand(1);
  std::uint64_t reef_seed = 42;
  std::string scale, out, dgp_path, queries_path;
  bool force = false;
  auto* gen = reef_cmd->add_subcommand("generate", "Generate a database and its ground-truth manifest");
  gen->add_option("--seed", reef_seed);
  gen->add_option("--scale", scale, "e.g. users=10000,orders=40000");
  gen->add_option("--out", out, "Database file, or a directory to hold reef.db")->required();
  gen->add_option("--config", dgp_path, "Generator config (JSON)")->check(CLI::ExistingFile);
  gen->add_option("--queries", queries_path, "Causal questions (JSON)")->check(CLI::ExistingFile);
  gen->add_flag("--force", force, "Replace existing tables");
  gen->callback([&] {
    action = [&] {
      auto cfg = dgp_path.empty() ? reef::default_config() : reef::load_config(dgp_path);
      cfg.seed = reef_seed;
      if (!scale.empty())
        for (const auto& [entity, n] : reef::parse_scale(scale)) cfg.scale[entity] = n;
      cfg.validate();
      fs::path db_path = out;
      if (fs::is_directory(db_path) || out.back() == '/') {
        fs::create_directories(db_path);
        db_path /= "reef.db";
      }
      auto queries = queries_path.empty() ? reef::default_queries() : reef::load_queries(queries_path);
      auto database = reef::generate(cfg);
      auto conn = db::Connection::open(db_path.string(), db::OpenMode::Create);
      reef::load_into(database, conn, force);
      auto manifest = db_path;
      manifest.replace_extension(".manifest.json");
      write_file(manifest.string(), reef::to_json(reef::compute_ground_truth(cfg, queries)).dump(2));
      std::size_t rows = 0;
      for (const auto& t : database.tables) rows += t.rows.size();
      std::cout << "wrote " << database.tables.size() << " tables (" << rows << " rows) to " << db_path.string()
                << "\nground truth: " << manifest.string() << "\n";
      return 0;
    };
  });

  // eval
  int task = 0;
  std::string fixtures, report_path, seeds_text, modes_text;
  auto* eval_cmd = app.add_subcommand("eval", "Run an evaluation task");
  eval_cmd->add_option("--task", task)->required()->check(CLI::Range(1, 4));
  eval_cmd->add_option("--fixtures", fixtures, "Fixture file (task 4: ground-truth manifest)")->required();
  eval_cmd->add_option("--report", report_path, "Write the report JSON here");
  eval_cmd->add_option("--db", db_id, "Database id (tasks 1-3)");
  eval_cmd->add_option("--seeds", seeds_text, "Task 4 seeds, e.g. 1-10 or 1,3,5");
  eval_cmd->add_option("--modes", modes_text, "Task 4 modes, e.g. oracle,agentic");
  eval_cmd->add_option("--bootstrap", bootstrap, "Bootstrap resamples");
  eval_cmd->callback([&] {
    action = [&] {
      auto c = app_config(g);
      eval::EvalContext ctx;
      ctx.bootstrap = bootstrap.value_or(c.bootstrap);
      ctx.candidates = c.candidates;
      ctx.provider = [pc = c.provider] { return llm::make_provider(pc); };
      if (c.judge) ctx.judge = [pc = *c.judge] { return llm::make_provider(pc); };
      if (!seeds_text.empty()) ctx.seeds = parse_seeds(seeds_text);
      if (!modes_text.empty()) {
        ctx.modes.clear();
        for (const auto& m : text::split(modes_text, ',')) ctx.modes.push_back(text::trim(m));
      }
      std::optional<catalog::SchemaCatalog> cat;
      std::optional<db::Connection> conn;
      if (task != 4) {
        cat = load_catalog(c, db_id);
        conn = open_db(c, *cat);
        ctx.catalog = &*cat;
        ctx.connection = &*conn;
      }
      auto report = eval::run_task(task, fixtures, ctx);
      if (!report_path.empty()) write_file(report_path, report.dump(2));
      json summary = report;
      if (summary.contains("per_seed")) summary.erase("per_seed");
      if (summary.contains("examples")) summary.erase("examples");
      std::cout << summary.dump(2) << "\n";
      return 0;
    };
  });

  // serve
  int port = 8080;
  std::string host = "127.0.0.1";
  auto* serve = app.add_subcommand("serve", "Run the HTTP service");
  serve->add_option("--port", port, "0 picks a free port")->check(CLI::Range(0, 65535));
  serve->add_option("--host", host);
  serve->callback([&] {
    action = [&] {
      auto c = app_config(g);
      service::Service svc(c, llm::make_provider(c.provider));
      for (const auto& id : svc.recovered()) std::cerr << "recovered session " << id << " (interrupted)\n";
      service::HttpServer server(svc);
      auto signals = stop_on_signal(server);
      int bound = server.bind(host, port);
      std::cout << "listening on http://" << host << ":" << bound << std::endl;
      server.serve();
      if (signals.joinable()) signals.detach();
      svc.shutdown();
      return 0;
    };
  });

  // ask
  auto* ask = app.add_subcommand("ask", "One-shot question; prints events as JSON lines");
  ask->add_option("question", question)->required();
  ask->add_option("--db", db_id, "Database id")->required();
  ask->callback([&] {
    action = [&] {
      auto c = app_config(g);
      service::Service svc(c, llm::make_provider(c.provider));
      auto id = svc.create_session(db_id).session_id;
      std::int64_t seen = 0;
      auto drain = [&] {
        for (const auto& e : svc.events(id, seen)) {
          std::cout << service::to_json(e).dump() << "\n";
          seen = e.seq;
        }
        std::cout.flush();
      };
      svc.submit_query(id, question, true);
      for (;;) {
        drain();
        auto st = svc.state(id);
        if (!st.pending) break;
        // Clarification: the next stdin line is the reply.
        std::string reply;
        if (!std::getline(std::cin, reply) || text::trim(reply).empty()) return 3;
        svc.submit_feedback(id, reply, true);
      }
      auto last = svc.events(id, 0).back();
      return last.stage == service::kComplete ? 0 : 1;
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  try {
    return action ? action() : 0;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
