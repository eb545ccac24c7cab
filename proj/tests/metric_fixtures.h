#pragma once

// Ten-example fixtures for the retrieval and execution-accuracy metrics,
// with per-example values computed by hand.

#include <set>
#include <string>
#include <vector>

#include "orca/db/connection.h"
#include "orca/eval/eval.h"

namespace orca::testing {

inline eval::RetrievalExample ex(std::set<std::string> gold, std::set<std::string> rec) {
  return {"q", std::move(gold), std::move(rec)};
}

// Hand-computed per-example (recall, precision).
struct Expected {
  double r, p;
};

inline std::vector<eval::RetrievalExample> ten_examples() {
  return {ex({"a", "b"}, {"a", "c"}),      ex({"a"}, {"a"}),
          ex({"a", "b", "c"}, {"a"}),      ex({"a"}, {"b"}),
          ex({"a", "b"}, {}),              ex({"a", "b"}, {"a", "b", "c", "d"}),
          ex({"x"}, {"x", "y", "z"}),      ex({"a", "b", "c", "d"}, {"b", "d"}),
          ex({"p", "q"}, {"q"}),           ex({"a", "b", "c"}, {"a", "b", "c", "e"})};
}

inline const std::vector<Expected> kTen = {{0.5, 0.5}, {1, 1},   {1.0 / 3, 1}, {0, 0},   {0, 0},
                                           {1, 0.5},   {1, 1.0 / 3}, {0.5, 1}, {0.5, 1}, {1, 0.75}};

inline db::Connection small_db() {
  auto c = db::Connection::open(":memory:", db::OpenMode::Create);
  c.exec("CREATE TABLE t (id INTEGER PRIMARY KEY, a INTEGER, b TEXT, c REAL)");
  c.exec("INSERT INTO t VALUES (1, 1, 'x', 1.5), (2, 2, 'y', NULL), (3, 2, 'z', 0.25), (4, NULL, 'x', 3.0)");
  return c;
}

/// Runs against small_db(); exactly half match.
inline std::vector<eval::SqlExample> ten_sql_examples() {
  return {
      {"same rows, other order", "SELECT a, b FROM t", "SELECT a, b FROM t ORDER BY id DESC"},
      {"columns permuted", "SELECT a, b FROM t", "SELECT b, a FROM t"},
      {"ordered gold needs order", "SELECT id FROM t ORDER BY id", "SELECT id FROM t ORDER BY id DESC"},
      {"ordered gold, same order", "SELECT id FROM t ORDER BY id", "SELECT id FROM t ORDER BY 0 - id DESC"},
      {"null equals null", "SELECT c FROM t WHERE id = 2", "SELECT c FROM t WHERE b = 'y'"},
      {"integer equals real", "SELECT 1", "SELECT 1.0"},
      {"extra row", "SELECT a FROM t", "SELECT a FROM t UNION ALL SELECT 9"},
      {"broken prediction", "SELECT a FROM t", "SELECT nope FROM t"},
      {"duplicates count", "SELECT a FROM t", "SELECT DISTINCT a FROM t"},
      {"wrong column", "SELECT a FROM t", "SELECT id FROM t"},
  };
}

inline const std::vector<bool> kTenSqlMatches = {true, true, false, true, true, true, false, false, false, false};

}  // namespace orca::testing
