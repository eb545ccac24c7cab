#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

struct sqlite3;

namespace orca::db {

/// A single SQL scalar. monostate is NULL.
using Value = std::variant<std::monostate, std::int64_t, double, std::string>;

inline bool is_null(const Value& v) { return std::holds_alternative<std::monostate>(v); }
std::optional<double> as_number(const Value& v);
std::string to_display(const Value& v);
nlohmann::json to_json(const Value& v);
Value from_json(const nlohmann::json& j);

/// Total order used for sorting and multiset comparison: NULL < numbers < text.
/// Integers and reals compare numerically, so 1 and 1.0 are equal.
int compare(const Value& a, const Value& b);

using Row = std::vector<Value>;

struct ResultSet {
  std::vector<std::string> columns;
  std::vector<Row> rows;

  std::optional<std::size_t> column_index(std::string_view name) const;
};

nlohmann::json to_json(const ResultSet& rs, std::size_t max_rows = SIZE_MAX);

enum class OpenMode { ReadOnly, ReadWrite, Create };

/// Owning handle to a SQLite database. Connection strings are a file path,
/// optionally prefixed with "sqlite:" or "sqlite://".
class Connection {
 public:
  static Connection open(const std::string& connection_string, OpenMode mode = OpenMode::ReadWrite);

  Connection(Connection&& other) noexcept;
  Connection& operator=(Connection&& other) noexcept;
  Connection(const Connection&) = delete;
  Connection& operator=(const Connection&) = delete;
  ~Connection();

  /// Runs one statement (or a script when there are no results) and discards output.
  void exec(const std::string& sql);
  void exec(const std::string& sql, const std::vector<Value>& params);

  ResultSet query(const std::string& sql, const std::vector<Value>& params = {});

  /// Streams rows to `on_row`; returns the number of rows visited.
  std::size_t for_each_row(const std::string& sql, const std::function<void(const Row&)>& on_row);

  /// True when the statement compiles and does not write to the database.
  /// Throws DatabaseError with the engine's message when it does not compile.
  bool is_read_only(const std::string& sql);

  std::vector<std::string> user_tables();

  const std::string& path() const { return path_; }
  const std::string& database_id() const { return database_id_; }
  bool read_only() const { return mode_ == OpenMode::ReadOnly; }

  /// Bulk inserts inside one transaction.
  void insert_rows(const std::string& table, const std::vector<std::string>& columns, const std::vector<Row>& rows);

 private:
  Connection(sqlite3* handle, std::string path, OpenMode mode);

  sqlite3* handle_ = nullptr;
  std::string path_;
  std::string database_id_;
  OpenMode mode_ = OpenMode::ReadWrite;
};

std::string strip_connection_prefix(const std::string& connection_string);
std::string database_id_from_path(const std::string& path);

}  // namespace orca::db
