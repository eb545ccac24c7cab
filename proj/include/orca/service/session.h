#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace orca::service {

/// One line of a session log. Sequence numbers start at 1 and are gapless.
struct Event {
  std::int64_t seq = 0;
  std::string stage;
  nlohmann::json payload = nlohmann::json::object();
  bool terminal = false;
  /// Request the event belongs to; empty for session-level events.
  std::string request_id;

  bool operator==(const Event&) const = default;
};

nlohmann::json to_json(const Event& e);
Event event_from_json(const nlohmann::json& j);

// Stage names with meaning to the session state.
inline constexpr const char* kSessionCreated = "session_created";
inline constexpr const char* kUserQuery = "user_query";
inline constexpr const char* kUserFeedback = "user_feedback";
inline constexpr const char* kAwaiting = "awaiting";
inline constexpr const char* kArtifact = "artifact";
inline constexpr const char* kComplete = "complete";
inline constexpr const char* kFailed = "failed";
inline constexpr const char* kInterrupted = "interrupted";

struct Pending {
  std::string stage;
  std::string awaiting;  // clarification | feedback
  std::string request_id;
  nlohmann::json context;

  bool operator==(const Pending&) const = default;
};

struct Artifact {
  std::string artifact_id;
  std::string kind;  // erd | trace | report | dataset_preview
  std::string content_type;
  std::string body;

  bool operator==(const Artifact&) const = default;
};

/// Session state is a left fold of its events.
struct SessionState {
  std::string session_id;
  std::string database_id;
  std::vector<Event> history;
  std::optional<Pending> pending;
  std::map<std::string, Artifact> artifacts;
  /// Payload of the latest completed causal report, the refinement target.
  std::optional<nlohmann::json> last_causal;
  /// Request that has started but not yet produced its terminal event.
  std::optional<std::string> open_request;

  std::int64_t last_seq() const { return history.empty() ? 0 : history.back().seq; }

  /// Throws IoError when `e` does not continue the sequence.
  void apply(const Event& e);

  bool operator==(const SessionState&) const = default;
};

SessionState replay(const std::string& session_id, const std::vector<Event>& events);

/// Summary without the history (events are served separately).
nlohmann::json to_json(const SessionState& s);

/// Append-only JSON-lines file, flushed and synced per event.
class EventLog {
 public:
  struct Loaded {
    std::vector<Event> events;
    /// Bytes cut from an unterminated or unparseable final line.
    std::size_t truncated_bytes = 0;
  };

  /// Reads a log, truncating a torn final line in place. Throws IoError on
  /// corruption before the final line.
  static Loaded read(const std::filesystem::path& path);

  explicit EventLog(std::filesystem::path path);
  ~EventLog();
  EventLog(const EventLog&) = delete;
  EventLog& operator=(const EventLog&) = delete;

  void append(const Event& e);
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::FILE* file_ = nullptr;
};

}  // namespace orca::service
