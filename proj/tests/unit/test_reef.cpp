#include <cmath>
#include <set>

#include "orca/catalog/catalog.h"
#include "orca/reef/reef.h"
#include "support.h"

using namespace orca;
using namespace orca::reef;

namespace {

DgpConfig small(std::uint64_t seed = 5) {
  auto c = default_config();
  c.seed = seed;
  c.scale = {{"users", 300}, {"products", 60}, {"promotions", 5}, {"orders", 1200},
             {"carts", 100}, {"sessions", 200}, {"wishlists", 100}};
  return c;
}

std::map<std::int64_t, double> column_by_order(const Table& t, const std::string& value_col,
                                               const std::string& filter_col = "", const std::string& filter = "") {
  std::map<std::int64_t, double> out;
  auto oi = t.column_index("order_id"), vi = t.column_index(value_col);
  for (const auto& row : t.rows) {
    if (!filter_col.empty() && std::get<std::string>(row[t.column_index(filter_col)]) != filter) continue;
    out[std::get<std::int64_t>(row[oi])] = *db::as_number(row[vi]);
  }
  return out;
}

}  // namespace

TEST_CASE("eighteen tables, prices in range, integrity after load") {
  auto g = generate(small());
  CHECK(g.tables.size() == kTableCount);
  std::set<std::string> names;
  for (const auto& t : g.tables) names.insert(t.name);
  CHECK(names.size() == 18);
  for (const auto* n : {"users", "products", "orders", "promotions", "point_transaction", "reviews", "coupons"})
    CHECK(names.count(n));

  const auto& products = g.table("products");
  auto pi = products.column_index("price");
  for (const auto& row : products.rows) {
    double p = std::get<double>(row[pi]);
    CHECK(p >= 5.0);
    CHECK(p <= 500.0);
  }

  testing::TempDir dir;
  auto conn = db::Connection::open(dir.file("reef.sqlite"), db::OpenMode::Create);
  load_into(g, conn);
  for (const auto& t : g.tables) {
    auto n = conn.query("SELECT COUNT(*) FROM \"" + t.name + "\"").rows[0][0];
    CHECK(std::get<std::int64_t>(n) == static_cast<std::int64_t>(t.rows.size()));
  }
  for (const auto& e : g.fk_edges) {
    auto orphans = conn.query("SELECT COUNT(*) FROM \"" + e.from_table + "\" c WHERE c.\"" + e.from_column +
                              "\" IS NOT NULL AND NOT EXISTS (SELECT 1 FROM \"" + e.to_table + "\" p WHERE p.\"" +
                              e.to_column + "\" = c.\"" + e.from_column + "\")");
    INFO(e.from_table << "." << e.from_column);
    CHECK(std::get<std::int64_t>(orphans.rows[0][0]) == 0);
  }
  CHECK(conn.query("PRAGMA foreign_key_check").rows.empty());

  auto cat = catalog::snapshot(conn);
  CHECK(cat.fk_edges.size() == g.fk_edges.size());
  bool users_points = false;
  for (const auto& e : cat.fk_edges)
    users_points |= e.from_table == "point_transaction" && e.from_column == "user_id" && e.to_table == "users";
  CHECK(users_points);

  CHECK_CODE(load_into(g, conn), ErrorCode::TargetNotEmpty);
  auto g2 = generate(small(6));
  load_into(g2, conn, true);
  CHECK(conn.user_tables().size() == 18);
  CHECK(std::get<std::int64_t>(conn.query("SELECT COUNT(*) FROM orders").rows[0][0]) == 1200);
}

TEST_CASE("determinism and seed sensitivity") {
  auto a = generate(small(9));
  auto b = generate(small(9));
  auto c = generate(small(10));
  bool differs = false;
  for (std::size_t i = 0; i < a.tables.size(); ++i) {
    CHECK(a.tables[i].rows == b.tables[i].rows);
    differs |= a.tables[i].rows != c.tables[i].rows;
  }
  CHECK(differs);
  CHECK(to_json(a.config).dump() == to_json(b.config).dump());
}

TEST_CASE("activity mechanism") {
  auto c = default_config();
  CHECK(activity_probability(c, c.activity_sigmoid.midpoint_days) == 0.5);
  double prev = 1.0;
  for (int d = 0; d <= 730; d += 10) {
    double p = activity_probability(c, d);
    CHECK(p <= prev);
    prev = p;
  }
  // Signup ages uniform on [0, 360] are symmetric around the 180-day midpoint,
  // so the population activity rate is exactly 0.5 in expectation.
  c.max_signup_days = 360;
  c.scale = {{"users", 20000}, {"products", 10}, {"promotions", 1}, {"orders", 1},
             {"carts", 1}, {"sessions", 1}, {"wishlists", 1}};
  auto g = generate(c);
  const auto& users = g.table("users");
  auto ai = users.column_index("is_active"), di = users.column_index("signup_days_ago");
  double active = 0, young = 0, old = 0, n_young = 0, n_old = 0;
  for (const auto& row : users.rows) {
    auto a = std::get<std::int64_t>(row[ai]);
    active += a;
    if (std::get<std::int64_t>(row[di]) < 180) {
      young += a;
      ++n_young;
    } else {
      old += a;
      ++n_old;
    }
  }
  double n = static_cast<double>(users.rows.size());
  double se = std::sqrt(0.25 / n);
  CHECK(std::abs(active / n - 0.5) <= 4 * se);
  CHECK(young / n_young > old / n_old);
}

TEST_CASE("factual replay reproduces stored outcomes bit for bit") {
  auto cfg = small(11);
  auto g = generate(cfg);
  auto reviews = column_by_order(g.table("reviews"), "review_score");
  auto points = column_by_order(g.table("point_transaction"), "points", "transaction_type", "earn");
  auto charged = column_by_order(g.table("payments"), "amount");
  struct Case {
    const char* outcome;
    const std::map<std::int64_t, double>* stored;
  };
  for (auto [outcome, stored] : {Case{"reviews.review_score", &reviews}, Case{"point_transaction.points", &points},
                                 Case{"payments.amount", &charged}}) {
    for (const auto* treatment : {"orders.coupon_redeemed", "users.is_active"}) {
      auto r = replay(cfg, treatment, outcome, std::nullopt);
      REQUIRE(r.unit_ids.size() == stored->size());
      std::size_t equal = 0;
      for (std::size_t i = 0; i < r.unit_ids.size(); ++i) equal += stored->at(r.unit_ids[i]) == r.outcomes[i];
      CHECK(equal == r.unit_ids.size());
    }
  }
}

TEST_CASE("ground truth by replay") {
  auto cfg = small(12);
  auto queries = default_queries();
  REQUIRE(queries.size() == 3);
  auto truth = compute_ground_truth(cfg, queries);
  REQUIRE(truth.queries.size() == 3);
  for (const auto& e : truth.queries) {
    CHECK(e.ci_low <= e.true_ate);
    CHECK(e.true_ate <= e.ci_high);
  }

  // Oracle: paired differences recomputed from two forced replays.
  auto one = replay(cfg, "orders.coupon_redeemed", "reviews.review_score", 1);
  auto zero = replay(cfg, "orders.coupon_redeemed", "reviews.review_score", 0);
  double sum = 0;
  for (std::size_t i = 0; i < one.outcomes.size(); ++i) sum += one.outcomes[i] - zero.outcomes[i];
  CHECK(truth.queries[0].true_ate == doctest::Approx(sum / static_cast<double>(one.outcomes.size())).epsilon(1e-12));

  auto null_cfg = cfg;
  null_cfg.review_model.coefficients["coupon_redeemed"] = 0.0;
  null_cfg.points_model.coefficients["coupon_redeemed"] = 0.0;
  auto null_truth = compute_ground_truth(null_cfg, queries);
  CHECK(null_truth.queries[0].true_ate == 0.0);
  CHECK(null_truth.queries[0].ci_low == 0.0);
  CHECK(null_truth.queries[1].true_ate == 0.0);

  QuerySpec random_var = queries[0];
  random_var.treatment = "promotions.name";
  CHECK_CODE(compute_ground_truth(cfg, {random_var}), ErrorCode::TreatmentNotInDgp);
  CHECK_CODE(replay(cfg, "orders.coupon_redeemed", "users.gender", 1), ErrorCode::TreatmentNotInDgp);

  auto round = ground_truth_from_json(nlohmann::json::parse(to_json(truth).dump()));
  CHECK(round.queries[1].true_ate == truth.queries[1].true_ate);
  CHECK(round.queries[1].query.oracle_sql == queries[1].oracle_sql);
  CHECK(round.config.review_model.score_cutpoints == cfg.review_model.score_cutpoints);
}

TEST_CASE("oversampled replay agrees with the default-size truth") {
  auto base = default_config();
  base.seed = 21;
  // Same catalog (products and promotions come from their own substreams),
  // ten times the users and orders: the effect is a property of the catalog
  // and the mechanisms, so the two truths must agree within their intervals.
  auto big = base;
  for (auto& [k, v] : big.scale)
    if (k != "products" && k != "promotions") v *= 10;
  auto queries = default_queries();
  auto a = compute_ground_truth(base, queries);
  auto b = compute_ground_truth(big, queries);
  for (std::size_t q = 0; q < queries.size(); ++q) {
    double se_a = (a.queries[q].ci_high - a.queries[q].ci_low) / (2 * 1.959963984540054);
    double se_b = (b.queries[q].ci_high - b.queries[q].ci_low) / (2 * 1.959963984540054);
    INFO(queries[q].id << " " << a.queries[q].true_ate << " vs " << b.queries[q].true_ate);
    CHECK(std::abs(a.queries[q].true_ate - b.queries[q].true_ate) <= 3 * std::hypot(se_a, se_b));
  }
}

TEST_CASE("randomized treatment: difference of means matches the replay truth") {
  auto cfg = default_config();
  cfg.seed = 31;
  cfg.coupon_model.randomized = true;
  auto g = generate(cfg);
  testing::TempDir dir;
  auto conn = db::Connection::open(dir.file("r.sqlite"), db::OpenMode::Create);
  load_into(g, conn);
  auto queries = default_queries();
  auto truth = compute_ground_truth(cfg, queries);
  for (std::size_t q = 1; q < 3; ++q) {  // outcomes observed for every order
    auto naive = naive_difference(conn, queries[q]);
    auto rs = conn.query(queries[q].oracle_sql);
    double s[2] = {0, 0}, ss[2] = {0, 0}, n[2] = {0, 0};
    for (const auto& row : rs.rows) {
      int t = static_cast<int>(*db::as_number(row[0]));
      double y = *db::as_number(row[1]);
      s[t] += y;
      ss[t] += y * y;
      ++n[t];
    }
    double var1 = (ss[1] - s[1] * s[1] / n[1]) / (n[1] - 1), var0 = (ss[0] - s[0] * s[0] / n[0]) / (n[0] - 1);
    double se = std::sqrt(var1 / n[1] + var0 / n[0]);
    INFO(queries[q].id << " naive " << naive << " truth " << truth.queries[q].true_ate << " se " << se);
    CHECK(std::abs(naive - truth.queries[q].true_ate) <= 4 * se);
  }
}

TEST_CASE("config validation and scale parsing") {
  auto c = default_config();
  CHECK_NOTHROW(c.validate());
  auto bad = c;
  bad.review_model.score_cutpoints = {-1, 0, 0, 1};
  CHECK_CODE(bad.validate(), ErrorCode::InvalidConfig);
  bad = c;
  bad.price_low = 500;
  CHECK_CODE(bad.validate(), ErrorCode::InvalidConfig);
  bad = c;
  bad.scale["users"] = 0;
  CHECK_CODE(generate(bad), ErrorCode::InvalidConfig);
  bad = c;
  bad.review_model.coefficients["weather"] = 1.0;
  CHECK_CODE(bad.validate(), ErrorCode::InvalidConfig);
  CHECK_CODE(config_from_json({{"colour", 1}}), ErrorCode::InvalidConfig);
  CHECK_CODE(config_from_json({{"scale", {{"users", 0}}}}), ErrorCode::InvalidConfig);

  auto shipped = load_config(std::string(ORCA_DATA_DIR) + "/reef/dgp_default.json");
  CHECK(to_json(shipped).dump() == to_json(c).dump());
  auto round = config_from_json(to_json(c));
  CHECK(to_json(round).dump() == to_json(c).dump());

  auto s = parse_scale("users=10000, orders=40000");
  CHECK(s.at("users") == 10000);
  CHECK(s.at("orders") == 40000);
  CHECK_CODE(parse_scale("users=0"), ErrorCode::InvalidConfig);
  CHECK_CODE(parse_scale("users"), ErrorCode::InvalidConfig);
  CHECK_CODE(parse_scale("users=12x"), ErrorCode::InvalidConfig);
}
