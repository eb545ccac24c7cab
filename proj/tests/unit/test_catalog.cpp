#include <filesystem>
#include <fstream>

#include "orca/catalog/catalog.h"
#include "orca/catalog/store.h"
#include "orca/llm/mock_provider.h"
#include "support.h"

using namespace orca;
using namespace orca::catalog;

namespace {

db::Connection two_table_db(const std::string& path) {
  auto conn = db::Connection::open(path, db::OpenMode::Create);
  conn.exec(
      "CREATE TABLE users (user_id INTEGER PRIMARY KEY, name TEXT, score REAL);"
      "CREATE TABLE orders (order_id INTEGER PRIMARY KEY, user_id INTEGER REFERENCES users(user_id),"
      " amount REAL, note TEXT);"
      "INSERT INTO users VALUES (1,'ann',1),(2,'bob',2),(3,'cy',3),(4,'di',4),(5,'ed',NULL),(6,'flo',NULL);"
      "INSERT INTO orders VALUES (10,1,5.0,'a'),(11,1,7.0,NULL),(12,2,9.0,'b');");
  return conn;
}

}  // namespace

TEST_CASE("column stats arithmetic") {
  std::vector<db::Value> values = {std::int64_t{1}, std::int64_t{2}, std::int64_t{3},
                                   std::int64_t{4}, std::monostate{}, std::monostate{}};
  auto s = compute_column_stats("x", "INTEGER", values);
  CHECK(s.null_count == 2);
  CHECK(s.row_count == 6);
  CHECK(s.null_ratio == doctest::Approx(1.0 / 3.0));
  CHECK(s.unique_count == 4);
  CHECK(*s.mean == doctest::Approx(2.5));
  CHECK(*s.median == doctest::Approx(2.5));
  CHECK(*s.skewness == doctest::Approx(0.0));
  CHECK(s.example_values.size() == 4);
}

TEST_CASE("skewness is the standardized third central moment") {
  // values 0,0,0,3: mean .75, m2 = 1.6875, m3 = 2.53125
  std::vector<db::Value> values = {0.0, 0.0, 0.0, 3.0};
  auto s = compute_column_stats("x", "REAL", values);
  CHECK(*s.skewness == doctest::Approx(2.53125 / std::pow(1.6875, 1.5)));
}

TEST_CASE("zero variance leaves skewness absent; strings get lexicographic extrema only") {
  auto s = compute_column_stats("x", "REAL", {5.0, 5.0});
  CHECK_FALSE(s.skewness.has_value());
  auto t = compute_column_stats("t", "TEXT", {std::string("pear"), std::string("apple"), std::monostate{}});
  CHECK_FALSE(t.mean.has_value());
  CHECK_FALSE(t.median.has_value());
  CHECK(std::get<std::string>(*t.min) == "apple");
  CHECK(std::get<std::string>(*t.max) == "pear");
}

TEST_CASE("snapshot of a small database") {
  testing::TempDir dir;
  auto path = dir.file("shop.sqlite");
  { two_table_db(path); }
  auto ro = db::Connection::open(path, db::OpenMode::ReadOnly);
  auto c = snapshot(ro);
  CHECK(c.database_id == "shop");
  REQUIRE(c.tables.size() == 2);
  const auto& users = c.tables.at("users");
  CHECK(users.row_count == 6);
  CHECK(users.primary_key == std::vector<std::string>{"user_id"});
  const auto* score = users.find_column("score");
  REQUIRE(score);
  CHECK(score->null_count == 2);
  CHECK(score->unique_count == 4);
  CHECK(*score->mean == doctest::Approx(2.5));
  CHECK(*score->median == doctest::Approx(2.5));
  CHECK_FALSE(users.find_column("name")->mean.has_value());
  REQUIRE(c.fk_edges.size() == 1);
  CHECK(c.fk_edges[0] == ForeignKeyEdge{"orders", "user_id", "users", "user_id"});
  for (const auto& [_, t] : c.tables)
    for (const auto& col : t.columns) {
      CHECK(col.null_ratio >= 0.0);
      CHECK(col.null_ratio <= 1.0);
      CHECK(col.unique_count <= col.row_count);
    }
}

TEST_CASE("sampling beyond the scan limit keeps exact counts") {
  testing::TempDir dir;
  auto path = dir.file("big.sqlite");
  auto conn = db::Connection::open(path, db::OpenMode::Create);
  conn.exec("CREATE TABLE t (v INTEGER)");
  std::vector<db::Row> rows;
  for (int i = 0; i < 500; ++i) rows.push_back({std::int64_t{i}});
  conn.insert_rows("t", {"v"}, rows);
  auto c = snapshot(conn, SnapshotOptions{100, 7});
  const auto& t = c.tables.at("t");
  CHECK(t.row_count == 500);
  CHECK(t.sampled_rows == 100);
  CHECK(t.columns[0].unique_count == 500);
  CHECK(*t.columns[0].mean > 150);
  CHECK(*t.columns[0].mean < 350);
}

TEST_CASE("empty database and bad connection") {
  testing::TempDir dir;
  auto conn = db::Connection::open(dir.file("empty.sqlite"), db::OpenMode::Create);
  CHECK_CODE(snapshot(conn), ErrorCode::EmptyDatabase);
  CHECK_CODE(db::Connection::open(dir.file("missing.sqlite"), db::OpenMode::ReadOnly), ErrorCode::ConnectionFailed);
}

TEST_CASE("metadata docs: counts, content, ordering") {
  testing::TempDir dir;
  auto conn = two_table_db(dir.file("shop.sqlite"));
  auto c = snapshot(conn);
  auto docs = build_metadata_docs(c);
  CHECK(docs.size() == 2 + 3 + 4);
  CHECK(docs[0].doc_id == "table:orders");
  CHECK(docs[1].doc_id == "column:orders.order_id");
  CHECK(docs[5].doc_id == "table:users");
  const auto& amount = docs[3];
  CHECK(amount.column == std::optional<std::string>("amount"));
  CHECK(amount.text.find("amount") != std::string::npos);
  CHECK(amount.text.find("REAL") != std::string::npos);
  CHECK(amount.text.find("null_ratio") != std::string::npos);
  CHECK(build_metadata_docs(snapshot(conn)) == docs);
}

TEST_CASE("persist / load round trip") {
  testing::TempDir dir;
  auto conn = two_table_db(dir.file("shop.sqlite"));
  auto c = snapshot(conn);
  llm::MockProvider mock;
  attach_embeddings(c, mock);
  CHECK(c.embeddings.size() == build_metadata_docs(c).size());

  CatalogStore store(dir.path() / "state");
  auto saved = store.persist(c);
  auto loaded = store.load("shop");
  CHECK(loaded == saved);
  c.captured_at = saved.captured_at;
  CHECK(loaded == c);

  auto again = store.persist(c);
  CHECK(again.captured_at > saved.captured_at);
  CHECK(store.load("shop").captured_at == again.captured_at);
  CHECK(store.list() == std::vector<std::string>{"shop"});
  CHECK_CODE(store.load("nope"), ErrorCode::UnknownDatabaseId);
}

TEST_CASE("unwritable state dir") {
  testing::TempDir dir;
  auto blocker = dir.file("file");
  { std::ofstream(blocker) << "x"; }
  CatalogStore store(blocker);
  SchemaCatalog c;
  c.database_id = "x";
  CHECK_CODE(store.persist(c), ErrorCode::StateDirUnwritable);
}
