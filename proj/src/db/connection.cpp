#include "orca/db/connection.h"

#include <sqlite3.h>

#include <cmath>
#include <filesystem>

#include "orca/common/error.h"
#include "orca/common/text.h"

namespace orca::db {

std::optional<double> as_number(const Value& v) {
  if (auto i = std::get_if<std::int64_t>(&v)) return static_cast<double>(*i);
  if (auto d = std::get_if<double>(&v)) return *d;
  return std::nullopt;
}

std::string to_display(const Value& v) {
  if (is_null(v)) return "NULL";
  if (auto i = std::get_if<std::int64_t>(&v)) return std::to_string(*i);
  if (auto d = std::get_if<double>(&v)) return text::fmt_num(*d, 10);
  return std::get<std::string>(v);
}

nlohmann::json to_json(const Value& v) {
  if (is_null(v)) return nullptr;
  if (auto i = std::get_if<std::int64_t>(&v)) return *i;
  if (auto d = std::get_if<double>(&v)) return *d;
  return std::get<std::string>(v);
}

Value from_json(const nlohmann::json& j) {
  if (j.is_null()) return std::monostate{};
  if (j.is_number_integer()) return j.get<std::int64_t>();
  if (j.is_number()) return j.get<double>();
  if (j.is_boolean()) return static_cast<std::int64_t>(j.get<bool>());
  if (j.is_string()) return j.get<std::string>();
  return j.dump();
}

int compare(const Value& a, const Value& b) {
  auto rank = [](const Value& v) {
    if (is_null(v)) return 0;
    if (std::holds_alternative<std::string>(v)) return 2;
    return 1;
  };
  int ra = rank(a);
  int rb = rank(b);
  if (ra != rb) return ra < rb ? -1 : 1;
  if (ra == 0) return 0;
  if (ra == 2) {
    int c = std::get<std::string>(a).compare(std::get<std::string>(b));
    return c < 0 ? -1 : (c > 0 ? 1 : 0);
  }
  auto ia = std::get_if<std::int64_t>(&a);
  auto ib = std::get_if<std::int64_t>(&b);
  if (ia && ib) return *ia < *ib ? -1 : (*ia > *ib ? 1 : 0);
  double x = *as_number(a);
  double y = *as_number(b);
  return x < y ? -1 : (x > y ? 1 : 0);
}

std::optional<std::size_t> ResultSet::column_index(std::string_view name) const {
  for (std::size_t i = 0; i < columns.size(); ++i)
    if (columns[i] == name) return i;
  return std::nullopt;
}

nlohmann::json to_json(const ResultSet& rs, std::size_t max_rows) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t r = 0; r < rs.rows.size() && r < max_rows; ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (const auto& v : rs.rows[r]) row.push_back(to_json(v));
    rows.push_back(std::move(row));
  }
  return {{"columns", rs.columns}, {"rows", std::move(rows)}, {"total_rows", rs.rows.size()}};
}

std::string strip_connection_prefix(const std::string& connection_string) {
  std::string s = connection_string;
  if (s.rfind("sqlite://", 0) == 0) return s.substr(9);
  if (s.rfind("sqlite:", 0) == 0) return s.substr(7);
  return s;
}

std::string database_id_from_path(const std::string& path) {
  if (path == ":memory:") return "memory";
  return std::filesystem::path(path).stem().string();
}

namespace {

class Statement {
 public:
  Statement(sqlite3* db, const std::string& sql, const char** tail = nullptr) : db_(db) {
    const char* t = nullptr;
    if (sqlite3_prepare_v2(db, sql.c_str(), static_cast<int>(sql.size()), &stmt_, &t) != SQLITE_OK) {
      std::string msg = sqlite3_errmsg(db);
      sqlite3_finalize(stmt_);
      stmt_ = nullptr;
      fail(ErrorCode::DatabaseError, msg);
    }
    if (tail) *tail = t;
  }
  Statement(const Statement&) = delete;
  Statement& operator=(const Statement&) = delete;
  ~Statement() { sqlite3_finalize(stmt_); }

  sqlite3_stmt* get() const { return stmt_; }

  void bind(const std::vector<Value>& params) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      int idx = static_cast<int>(i) + 1;
      const Value& v = params[i];
      int rc = SQLITE_OK;
      if (is_null(v)) {
        rc = sqlite3_bind_null(stmt_, idx);
      } else if (auto p = std::get_if<std::int64_t>(&v)) {
        rc = sqlite3_bind_int64(stmt_, idx, *p);
      } else if (auto d = std::get_if<double>(&v)) {
        rc = sqlite3_bind_double(stmt_, idx, *d);
      } else {
        const auto& s = std::get<std::string>(v);
        rc = sqlite3_bind_text(stmt_, idx, s.c_str(), static_cast<int>(s.size()), SQLITE_TRANSIENT);
      }
      if (rc != SQLITE_OK) fail(ErrorCode::DatabaseError, sqlite3_errmsg(db_));
    }
  }

  /// Returns true while a row is available.
  bool step() {
    int rc = sqlite3_step(stmt_);
    if (rc == SQLITE_ROW) return true;
    if (rc == SQLITE_DONE) return false;
    fail(ErrorCode::DatabaseError, sqlite3_errmsg(db_));
  }

  Row row() const {
    int n = sqlite3_column_count(stmt_);
    Row out;
    out.reserve(static_cast<std::size_t>(n));
    for (int c = 0; c < n; ++c) {
      switch (sqlite3_column_type(stmt_, c)) {
        case SQLITE_INTEGER: out.emplace_back(static_cast<std::int64_t>(sqlite3_column_int64(stmt_, c))); break;
        case SQLITE_FLOAT: out.emplace_back(sqlite3_column_double(stmt_, c)); break;
        case SQLITE_NULL: out.emplace_back(std::monostate{}); break;
        default: {
          const auto* p = reinterpret_cast<const char*>(sqlite3_column_text(stmt_, c));
          out.emplace_back(std::string(p ? p : "", static_cast<std::size_t>(sqlite3_column_bytes(stmt_, c))));
        }
      }
    }
    return out;
  }

  std::vector<std::string> columns() const {
    std::vector<std::string> out;
    int n = sqlite3_column_count(stmt_);
    for (int c = 0; c < n; ++c) out.emplace_back(sqlite3_column_name(stmt_, c));
    return out;
  }

 private:
  sqlite3* db_;
  sqlite3_stmt* stmt_ = nullptr;
};

}  // namespace

Connection::Connection(sqlite3* handle, std::string path, OpenMode mode)
    : handle_(handle), path_(std::move(path)), database_id_(database_id_from_path(path_)), mode_(mode) {}

Connection Connection::open(const std::string& connection_string, OpenMode mode) {
  std::string path = strip_connection_prefix(connection_string);
  if (path.empty()) fail(ErrorCode::ConnectionFailed, "empty connection string");
  int flags = 0;
  switch (mode) {
    case OpenMode::ReadOnly: flags = SQLITE_OPEN_READONLY; break;
    case OpenMode::ReadWrite: flags = SQLITE_OPEN_READWRITE; break;
    case OpenMode::Create: flags = SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE; break;
  }
  flags |= SQLITE_OPEN_NOMUTEX;
  sqlite3* handle = nullptr;
  if (sqlite3_open_v2(path.c_str(), &handle, flags, nullptr) != SQLITE_OK) {
    std::string msg = handle ? sqlite3_errmsg(handle) : "out of memory";
    sqlite3_close(handle);
    fail(ErrorCode::ConnectionFailed, path + ": " + msg);
  }
  sqlite3_busy_timeout(handle, 5000);
  Connection conn(handle, path, mode);
  if (mode != OpenMode::ReadOnly) conn.exec("PRAGMA foreign_keys = ON");
  return conn;
}

Connection::Connection(Connection&& other) noexcept
    : handle_(std::exchange(other.handle_, nullptr)),
      path_(std::move(other.path_)),
      database_id_(std::move(other.database_id_)),
      mode_(other.mode_) {}

Connection& Connection::operator=(Connection&& other) noexcept {
  if (this != &other) {
    sqlite3_close(handle_);
    handle_ = std::exchange(other.handle_, nullptr);
    path_ = std::move(other.path_);
    database_id_ = std::move(other.database_id_);
    mode_ = other.mode_;
  }
  return *this;
}

Connection::~Connection() { sqlite3_close(handle_); }

void Connection::exec(const std::string& sql) {
  char* err = nullptr;
  if (sqlite3_exec(handle_, sql.c_str(), nullptr, nullptr, &err) != SQLITE_OK) {
    std::string msg = err ? err : "unknown error";
    sqlite3_free(err);
    fail(ErrorCode::DatabaseError, msg);
  }
}

void Connection::exec(const std::string& sql, const std::vector<Value>& params) {
  Statement stmt(handle_, sql);
  stmt.bind(params);
  while (stmt.step()) {
  }
}

ResultSet Connection::query(const std::string& sql, const std::vector<Value>& params) {
  Statement stmt(handle_, sql);
  stmt.bind(params);
  ResultSet rs;
  rs.columns = stmt.columns();
  while (stmt.step()) rs.rows.push_back(stmt.row());
  return rs;
}

std::size_t Connection::for_each_row(const std::string& sql, const std::function<void(const Row&)>& on_row) {
  Statement stmt(handle_, sql);
  std::size_t n = 0;
  while (stmt.step()) {
    on_row(stmt.row());
    ++n;
  }
  return n;
}

bool Connection::is_read_only(const std::string& sql) {
  Statement stmt(handle_, sql);
  return stmt.get() == nullptr || sqlite3_stmt_readonly(stmt.get()) != 0;
}

std::vector<std::string> Connection::user_tables() {
  std::vector<std::string> out;
  auto rs = query("SELECT name FROM sqlite_master WHERE type = 'table' AND name NOT LIKE 'sqlite_%' ORDER BY name");
  for (const auto& row : rs.rows) out.push_back(std::get<std::string>(row[0]));
  return out;
}

void Connection::insert_rows(const std::string& table, const std::vector<std::string>& columns,
                             const std::vector<Row>& rows) {
  std::string sql = "INSERT INTO \"" + table + "\" (";
  std::string marks;
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (i) {
      sql += ", ";
      marks += ", ";
    }
    sql += "\"" + columns[i] + "\"";
    marks += "?";
  }
  sql += ") VALUES (" + marks + ")";
  exec("BEGIN");
  try {
    Statement stmt(handle_, sql);
    for (const auto& row : rows) {
      stmt.bind(row);
      stmt.step();
      sqlite3_reset(stmt.get());
      sqlite3_clear_bindings(stmt.get());
    }
    exec("COMMIT");
  } catch (...) {
    exec("ROLLBACK");
    throw;
  }
}

}  // namespace orca::db
