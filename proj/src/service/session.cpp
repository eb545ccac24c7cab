#include "orca/service/session.h"

#include <fstream>
#include <sstream>

#include <unistd.h>

#include "orca/common/error.h"

namespace orca::service {

nlohmann::json to_json(const Event& e) {
  nlohmann::json j = {{"seq", e.seq}, {"stage", e.stage}, {"payload", e.payload}, {"terminal", e.terminal}};
  if (!e.request_id.empty()) j["request_id"] = e.request_id;
  return j;
}

Event event_from_json(const nlohmann::json& j) {
  Event e;
  e.seq = j.at("seq").get<std::int64_t>();
  e.stage = j.at("stage").get<std::string>();
  e.payload = j.value("payload", nlohmann::json::object());
  e.terminal = j.value("terminal", false);
  e.request_id = j.value("request_id", std::string());
  return e;
}

void SessionState::apply(const Event& e) {
  if (e.seq != last_seq() + 1)
    fail(ErrorCode::IoError, "session " + session_id + ": event " + std::to_string(e.seq) + " follows " +
                                 std::to_string(last_seq()));
  if (e.stage == kSessionCreated) {
    database_id = e.payload.at("database_id").get<std::string>();
  } else if (e.stage == kUserQuery) {
    open_request = e.request_id;
  } else if (e.stage == kUserFeedback) {
    // A reply to a pending question continues that request.
    pending.reset();
    open_request = e.request_id;
  } else if (e.stage == kAwaiting) {
    pending = Pending{e.payload.at("stage").get<std::string>(), e.payload.at("awaiting").get<std::string>(),
                      e.request_id, e.payload.value("context", nlohmann::json::object())};
  } else if (e.stage == kArtifact) {
    Artifact a;
    a.artifact_id = e.payload.at("artifact_id").get<std::string>();
    a.kind = e.payload.at("kind").get<std::string>();
    a.content_type = e.payload.value("content_type", std::string("application/json"));
    a.body = e.payload.at("body").get<std::string>();
    artifacts[a.artifact_id] = std::move(a);
  }
  if (e.terminal) {
    open_request.reset();
    pending.reset();
    if (e.stage == kComplete && e.payload.value("result_kind", std::string()) == "causal_report" &&
        e.payload.contains("report") && e.payload["report"].value("status", std::string()) == "complete")
      last_causal = e.payload;
  }
  history.push_back(e);
}

SessionState replay(const std::string& session_id, const std::vector<Event>& events) {
  SessionState s;
  s.session_id = session_id;
  for (const auto& e : events) s.apply(e);
  return s;
}

nlohmann::json to_json(const SessionState& s) {
  nlohmann::json j = {{"session_id", s.session_id}, {"database_id", s.database_id}, {"last_seq", s.last_seq()},
                      {"event_count", s.history.size()}};
  if (s.pending) {
    j["pending"] = {{"stage", s.pending->stage}, {"awaiting", s.pending->awaiting},
                    {"request_id", s.pending->request_id}, {"context", s.pending->context}};
  } else {
    j["pending"] = nullptr;
  }
  nlohmann::json arts = nlohmann::json::array();
  for (const auto& [id, a] : s.artifacts)
    arts.push_back({{"artifact_id", id}, {"kind", a.kind}, {"content_type", a.content_type}, {"size", a.body.size()}});
  j["artifacts"] = arts;
  j["open_request"] = s.open_request ? nlohmann::json(*s.open_request) : nlohmann::json();
  j["has_report"] = s.last_causal.has_value();
  return j;
}

EventLog::Loaded EventLog::read(const std::filesystem::path& path) {
  std::string data;
  {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::IoError, "cannot read " + path.string());
    std::ostringstream os;
    os << in.rdbuf();
    data = os.str();
  }
  Loaded out;
  std::size_t pos = 0, good_end = 0;
  while (pos < data.size()) {
    auto nl = data.find('\n', pos);
    bool last = nl == std::string::npos || nl + 1 == data.size();
    std::string line = data.substr(pos, nl == std::string::npos ? std::string::npos : nl - pos);
    try {
      if (nl == std::string::npos) throw std::runtime_error("unterminated line");
      out.events.push_back(event_from_json(nlohmann::json::parse(line)));
      good_end = nl + 1;
    } catch (const std::exception& e) {
      if (!last)
        fail(ErrorCode::IoError, path.string() + ": corrupt event at byte " + std::to_string(pos) + ": " + e.what());
      break;  // torn tail from a crash mid-write
    }
    pos = nl + 1;
  }
  if (good_end < data.size()) {
    out.truncated_bytes = data.size() - good_end;
    std::filesystem::resize_file(path, good_end);
  }
  return out;
}

EventLog::EventLog(std::filesystem::path path) : path_(std::move(path)) {
  file_ = std::fopen(path_.c_str(), "ab");
  if (!file_) fail(ErrorCode::StateDirUnwritable, "cannot open " + path_.string() + " for appending");
}

EventLog::~EventLog() {
  if (file_) std::fclose(file_);
}

void EventLog::append(const Event& e) {
  auto line = to_json(e).dump() + "\n";
  if (std::fwrite(line.data(), 1, line.size(), file_) != line.size() || std::fflush(file_) != 0)
    fail(ErrorCode::IoError, "write to " + path_.string() + " failed");
  ::fsync(fileno(file_));
}

}  // namespace orca::service
