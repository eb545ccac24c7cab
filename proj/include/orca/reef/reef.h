#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "orca/db/connection.h"

namespace orca::reef {

/// Every number of the synthetic shop lives here; see data/reef/dgp_default.json.
struct DgpConfig {
  std::uint64_t seed = 42;
  /// Row counts of the root entities: users, products, promotions, orders,
  /// carts, sessions, wishlists. Dependent tables derive from these.
  std::map<std::string, std::size_t> scale;
  double price_low = 5.0;
  double price_high = 500.0;
  std::string reference_date = "2025-01-01";
  int max_signup_days = 730;

  struct {
    double midpoint_days = 180.0;
    double scale_days = 60.0;
  } activity_sigmoid;

  /// Redemption of a coupon on an order: logistic in is_active and paid_amount.
  struct {
    double intercept = -1.0;
    std::map<std::string, double> coefficients{{"is_active", 1.0}, {"paid_amount", 0.0005}};
    /// Replace the mechanism by a fair coin.
    bool randomized = false;
  } coupon_model;

  /// Latent L = intercept + sum coef * {is_active, coupon_redeemed, paid_amount}.
  /// A review exists with probability sigmoid(L + existence_offset); its score
  /// is 1 + the number of cutpoints below L.
  struct {
    std::map<std::string, double> coefficients{{"is_active", 0.8}, {"coupon_redeemed", 0.5}, {"paid_amount", 0.002}};
    double intercept = -1.0;
    std::vector<double> score_cutpoints{-1.5, -0.5, 0.5, 1.5};
    double existence_offset = 0.0;
  } review_model;

  /// Earned points per order = floor(paid_amount * rate) with
  /// rate = base_rate + coef * {is_active, coupon_redeemed}.
  struct {
    double base_rate = 0.01;
    std::map<std::string, double> coefficients{{"is_active", 0.01}, {"coupon_redeemed", 0.01}};
    double spend_probability = 0.3;
    int spend_min = 10;
    int spend_max = 500;
  } points_model;

  /// Coupon discount = min(cap, promotion rate * paid_amount), rounded to cents.
  struct {
    double rate_low = 0.05;
    double rate_high = 0.3;
    double cap = 50.0;
  } discount_model;

  std::size_t count(const std::string& entity) const;
  /// Throws InvalidConfig.
  void validate() const;
};

DgpConfig default_config();
DgpConfig config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const DgpConfig& c);
/// Reads a config file; keys starting with "_" are documentation.
DgpConfig load_config(const std::string& path);
/// Parses "users=10000,orders=40000" into scale overrides.
std::map<std::string, std::size_t> parse_scale(const std::string& text);

struct ColumnDef {
  ColumnDef(std::string n, std::string t, std::optional<std::string> ref = std::nullopt, bool pk = false)
      : name(std::move(n)), type(std::move(t)), references(std::move(ref)), primary_key(pk) {}

  std::string name;
  std::string type;
  /// "table(column)" when this column is a foreign key.
  std::optional<std::string> references;
  bool primary_key = false;
};

struct Table {
  std::string name;
  std::vector<ColumnDef> columns;
  std::vector<db::Row> rows;

  std::size_t column_index(const std::string& column) const;
};

struct FkEdge {
  std::string from_table;
  std::string from_column;
  std::string to_table;
  std::string to_column;
};

struct GeneratedDatabase {
  std::vector<Table> tables;
  std::vector<FkEdge> fk_edges;
  std::uint64_t seed = 0;
  DgpConfig config;

  const Table& table(const std::string& name) const;
};

inline constexpr std::size_t kTableCount = 18;

/// P(is_active) for a user signed up `days` ago: sigmoid(-(days - midpoint) / scale).
double activity_probability(const DgpConfig& config, double days);

/// Deterministic in (config.seed, config). Throws InvalidConfig.
GeneratedDatabase generate(const DgpConfig& config);

/// Creates the tables with declared foreign keys and inserts the rows.
/// Throws TargetNotEmpty unless `force`, in which case existing tables are dropped.
void load_into(const GeneratedDatabase& database, db::Connection& connection, bool force = false);

/// One causal question over the generated shop.
struct QuerySpec {
  std::string id;
  std::string question;
  /// "table.column" of the treatment and outcome.
  std::string treatment;
  std::string outcome;
  std::string graph;
  /// Graph variable -> "table.column".
  std::map<std::string, std::string> bindings;
  std::string oracle_sql;
  /// Estimation method the scripted configuration step picks.
  std::string estimation = "propensity_matching";
};

QuerySpec query_from_json(const nlohmann::json& j);
nlohmann::json to_json(const QuerySpec& q);
std::vector<QuerySpec> load_queries(const std::string& path);
/// data/reef/queries.json
std::vector<QuerySpec> default_queries();

/// Outcomes of every unit of a query under a forced (or factual) treatment.
struct Replay {
  /// Unit key (order_id) and outcome, in unit order.
  std::vector<std::int64_t> unit_ids;
  std::vector<double> outcomes;
};

/// Recomputes the downstream mechanisms from the stored exogenous noise.
/// `forced` = nullopt keeps each unit's factual treatment. Units are those
/// whose outcome row exists in the factual database.
/// Throws TreatmentNotInDgp when the treatment or outcome has no mechanism.
Replay replay(const DgpConfig& config, const std::string& treatment, const std::string& outcome,
              std::optional<int> forced);

struct TruthEntry {
  QuerySpec query;
  double true_ate = 0;
  double ci_low = 0;
  double ci_high = 0;
  std::size_t n_units = 0;
};

struct GroundTruth {
  std::uint64_t seed = 0;
  DgpConfig config;
  std::vector<TruthEntry> queries;
};

/// Counterfactual replay: mean of paired differences under treatment 1 and 0,
/// with a 95% normal interval of that mean.
GroundTruth compute_ground_truth(const DgpConfig& config, const std::vector<QuerySpec>& queries);

nlohmann::json to_json(const GroundTruth& g);
GroundTruth ground_truth_from_json(const nlohmann::json& j);
GroundTruth load_manifest(const std::string& path);

/// Unadjusted difference of outcome means between treated and untreated rows
/// of the oracle data; the trivially-low reference point for effect estimates.
double naive_difference(db::Connection& connection, const QuerySpec& query);

}  // namespace orca::reef
