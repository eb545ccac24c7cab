#pragma once

#include <chrono>
#include <condition_variable>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "orca/catalog/catalog.h"
#include "orca/llm/provider.h"
#include "orca/service/config.h"
#include "orca/service/session.h"

namespace orca::service {

struct SessionRuntime;

/// Sessions, request dispatch and the feedback channel. Every session is an
/// append-only event log under <state_dir>/sessions/<id>.jsonl; the state in
/// memory is always the fold of that log. At most one request runs per
/// session; requests of different sessions share a worker pool.
class Service {
 public:
  Service(AppConfig config, std::shared_ptr<const llm::Provider> provider);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Throws UnknownDatabaseId when no catalog was synced for the id.
  SessionState create_session(const std::string& database_id);

  /// Starts a request and returns its id. With `wait`, returns once the
  /// request has ended or is waiting for the user.
  /// Throws UnknownSession, SessionBusy, EmptyQuery.
  std::string submit_query(const std::string& session_id, const std::string& text, bool wait = false);

  /// Answers a pending question, or refines the latest causal report.
  /// Throws UnknownSession, SessionBusy, NothingToRefine, EmptyQuery.
  std::string submit_feedback(const std::string& session_id, const std::string& text, bool wait = false);

  std::vector<Event> events(const std::string& session_id, std::int64_t after) const;
  /// Blocks until there is an event after `after` or the timeout passes.
  std::vector<Event> wait_events(const std::string& session_id, std::int64_t after,
                                 std::chrono::milliseconds timeout) const;
  Artifact artifact(const std::string& session_id, const std::string& artifact_id) const;
  SessionState state(const std::string& session_id) const;
  bool running(const std::string& session_id) const;
  void wait_idle(const std::string& session_id) const;
  std::vector<std::string> session_ids() const;

  /// Sessions whose unfinished request was closed with an `interrupted`
  /// event while loading.
  const std::vector<std::string>& recovered() const { return recovered_; }
  const AppConfig& config() const { return config_; }

  /// Stops the workers after the queued requests finish.
  void shutdown();

 private:
  std::shared_ptr<SessionRuntime> runtime(const std::string& session_id) const;
  std::shared_ptr<const catalog::SchemaCatalog> catalog_for(const std::string& database_id);
  /// Logs the user message and queues `job`. `continues` names the request a
  /// clarification reply resumes; empty starts a new one.
  std::string start(const std::shared_ptr<SessionRuntime>& rt, const std::string& stage, const std::string& text,
                    const std::string& continues, bool wait, std::function<void(const std::string&)> job);
  void enqueue(std::function<void()> job);
  void worker_loop();
  void recover();

  friend struct RequestRun;

  AppConfig config_;
  std::shared_ptr<const llm::Provider> provider_;

  mutable std::mutex sessions_mutex_;
  std::map<std::string, std::shared_ptr<SessionRuntime>> sessions_;
  std::vector<std::string> recovered_;

  std::mutex catalogs_mutex_;
  std::map<std::string, std::shared_ptr<const catalog::SchemaCatalog>> catalogs_;

  std::mutex queue_mutex_;
  std::condition_variable queue_cv_;
  std::deque<std::function<void()>> queue_;
  bool stopping_ = false;
  std::vector<std::thread> workers_;
};

}  // namespace orca::service
