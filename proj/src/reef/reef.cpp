#include "orca/reef/reef.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include "orca/causal/estimate.h"
#include "orca/common/error.h"
#include "orca/common/rng.h"
#include "orca/common/text.h"

namespace orca::reef {

namespace {

const std::map<std::string, std::size_t> kDefaultScale{{"users", 2000},  {"products", 300}, {"promotions", 20},
                                                       {"orders", 8000}, {"carts", 1000},   {"sessions", 4000},
                                                       {"wishlists", 1500}};

void check_keys(const std::map<std::string, double>& m, std::initializer_list<const char*> allowed, const char* what) {
  for (const auto& [k, v] : m) {
    bool ok = std::any_of(allowed.begin(), allowed.end(), [&](const char* a) { return k == a; });
    if (!ok) fail(ErrorCode::InvalidConfig, std::string(what) + " has no parent variable '" + k + "'");
    if (!std::isfinite(v)) fail(ErrorCode::InvalidConfig, std::string(what) + " coefficient is not finite");
  }
}

double coef(const std::map<std::string, double>& m, const char* key) {
  auto it = m.find(key);
  return it == m.end() ? 0.0 : it->second;
}

}  // namespace

std::size_t DgpConfig::count(const std::string& entity) const {
  if (auto it = scale.find(entity); it != scale.end()) return it->second;
  return kDefaultScale.at(entity);
}

void DgpConfig::validate() const {
  auto bad = [](const std::string& m) { fail(ErrorCode::InvalidConfig, m); };
  for (const auto& [k, v] : scale) {
    if (!kDefaultScale.count(k)) bad("unknown scale entity '" + k + "'");
    if (v < 1) bad("scale for " + k + " must be at least 1");
  }
  if (!(price_low < price_high) || price_low < 0) bad("price_range needs 0 <= low < high");
  if (activity_sigmoid.scale_days <= 0) bad("activity_sigmoid.scale_days must be positive");
  if (max_signup_days < 1) bad("max_signup_days must be positive");
  if (review_model.score_cutpoints.size() != 4) bad("review_model.score_cutpoints needs 4 values");
  for (std::size_t i = 1; i < review_model.score_cutpoints.size(); ++i)
    if (!(review_model.score_cutpoints[i - 1] < review_model.score_cutpoints[i]))
      bad("review_model.score_cutpoints must be strictly ascending");
  check_keys(coupon_model.coefficients, {"is_active", "paid_amount"}, "coupon_model");
  check_keys(review_model.coefficients, {"is_active", "coupon_redeemed", "paid_amount"}, "review_model");
  check_keys(points_model.coefficients, {"is_active", "coupon_redeemed"}, "points_model");
  if (points_model.spend_probability < 0 || points_model.spend_probability > 1) bad("spend_probability outside [0, 1]");
  if (points_model.spend_min > points_model.spend_max) bad("spend_min above spend_max");
  if (!(discount_model.rate_low <= discount_model.rate_high) || discount_model.rate_low < 0 || discount_model.cap < 0)
    bad("discount_model needs 0 <= rate_low <= rate_high and cap >= 0");
  int y, m, d;
  if (std::sscanf(reference_date.c_str(), "%4d-%2d-%2d", &y, &m, &d) != 3) bad("reference_date must be YYYY-MM-DD");
}

DgpConfig default_config() {
  DgpConfig c;
  c.scale = kDefaultScale;
  return c;
}

nlohmann::json to_json(const DgpConfig& c) {
  return {{"seed", c.seed},
          {"scale", c.scale},
          {"price_range", {c.price_low, c.price_high}},
          {"reference_date", c.reference_date},
          {"max_signup_days", c.max_signup_days},
          {"activity_sigmoid", {{"midpoint_days", c.activity_sigmoid.midpoint_days}, {"scale_days", c.activity_sigmoid.scale_days}}},
          {"coupon_model",
           {{"intercept", c.coupon_model.intercept},
            {"coefficients", c.coupon_model.coefficients},
            {"randomized", c.coupon_model.randomized}}},
          {"review_model",
           {{"coefficients", c.review_model.coefficients},
            {"intercept", c.review_model.intercept},
            {"score_cutpoints", c.review_model.score_cutpoints},
            {"existence_offset", c.review_model.existence_offset}}},
          {"points_model",
           {{"base_rate", c.points_model.base_rate},
            {"coefficients", c.points_model.coefficients},
            {"spend_probability", c.points_model.spend_probability},
            {"spend_range", {c.points_model.spend_min, c.points_model.spend_max}}}},
          {"discount_model",
           {{"rate_range", {c.discount_model.rate_low, c.discount_model.rate_high}}, {"cap", c.discount_model.cap}}}};
}

DgpConfig config_from_json(const nlohmann::json& j) {
  DgpConfig c = default_config();
  try {
    for (const auto& [key, v] : j.items()) {
      if (key.rfind('_', 0) == 0) continue;
      if (key == "seed") {
        c.seed = v.get<std::uint64_t>();
      } else if (key == "scale") {
        for (const auto& [e, n] : v.items()) {
          if (!n.is_number_integer() || n.get<std::int64_t>() < 1)
            fail(ErrorCode::InvalidConfig, "scale for " + e + " must be an integer >= 1");
          c.scale[e] = n.get<std::size_t>();
        }
      } else if (key == "price_range") {
        c.price_low = v.at(0).get<double>();
        c.price_high = v.at(1).get<double>();
      } else if (key == "reference_date") {
        c.reference_date = v.get<std::string>();
      } else if (key == "max_signup_days") {
        c.max_signup_days = v.get<int>();
      } else if (key == "activity_sigmoid") {
        c.activity_sigmoid.midpoint_days = v.value("midpoint_days", c.activity_sigmoid.midpoint_days);
        c.activity_sigmoid.scale_days = v.value("scale_days", c.activity_sigmoid.scale_days);
      } else if (key == "coupon_model") {
        c.coupon_model.intercept = v.value("intercept", c.coupon_model.intercept);
        if (v.contains("coefficients")) c.coupon_model.coefficients = v["coefficients"].get<std::map<std::string, double>>();
        c.coupon_model.randomized = v.value("randomized", false);
      } else if (key == "review_model") {
        if (v.contains("coefficients")) c.review_model.coefficients = v["coefficients"].get<std::map<std::string, double>>();
        c.review_model.intercept = v.value("intercept", c.review_model.intercept);
        if (v.contains("score_cutpoints")) c.review_model.score_cutpoints = v["score_cutpoints"].get<std::vector<double>>();
        c.review_model.existence_offset = v.value("existence_offset", c.review_model.existence_offset);
      } else if (key == "points_model") {
        c.points_model.base_rate = v.value("base_rate", c.points_model.base_rate);
        if (v.contains("coefficients")) c.points_model.coefficients = v["coefficients"].get<std::map<std::string, double>>();
        c.points_model.spend_probability = v.value("spend_probability", c.points_model.spend_probability);
        if (v.contains("spend_range")) {
          c.points_model.spend_min = v["spend_range"].at(0).get<int>();
          c.points_model.spend_max = v["spend_range"].at(1).get<int>();
        }
      } else if (key == "discount_model") {
        if (v.contains("rate_range")) {
          c.discount_model.rate_low = v["rate_range"].at(0).get<double>();
          c.discount_model.rate_high = v["rate_range"].at(1).get<double>();
        }
        c.discount_model.cap = v.value("cap", c.discount_model.cap);
      } else {
        fail(ErrorCode::InvalidConfig, "unknown config key '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvalidConfig, std::string("malformed config: ") + e.what());
  }
  c.validate();
  return c;
}

DgpConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot read " + path);
  try {
    return config_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorCode::InvalidConfig, path + ": " + e.what());
  }
}

std::map<std::string, std::size_t> parse_scale(const std::string& spec) {
  std::map<std::string, std::size_t> out;
  for (const auto& part : text::split(spec, ',')) {
    auto item = text::trim(part);
    if (item.empty()) continue;
    auto eq = item.find('=');
    if (eq == std::string::npos) fail(ErrorCode::InvalidConfig, "scale entry '" + item + "' is not entity=count");
    try {
      std::size_t used = 0;
      auto value = std::stoll(item.substr(eq + 1), &used);
      if (used != item.size() - eq - 1 || value < 1) throw std::invalid_argument("range");
      out[text::trim(item.substr(0, eq))] = static_cast<std::size_t>(value);
    } catch (const std::exception&) {
      fail(ErrorCode::InvalidConfig, "scale entry '" + item + "' needs a count >= 1");
    }
  }
  return out;
}

std::size_t Table::column_index(const std::string& column) const {
  for (std::size_t i = 0; i < columns.size(); ++i)
    if (columns[i].name == column) return i;
  fail(ErrorCode::UnknownVariable, "table " + name + " has no column " + column);
}

const Table& GeneratedDatabase::table(const std::string& name) const {
  for (const auto& t : tables)
    if (t.name == name) return t;
  fail(ErrorCode::UnknownTable, "no generated table " + name);
}

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
double round2(double x) { return std::round(x * 100.0) / 100.0; }

// Days since 1970-01-01 and back (proleptic Gregorian).
std::int64_t days_from_civil(int y, unsigned m, unsigned d) {
  y -= m <= 2;
  const int era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return static_cast<std::int64_t>(era) * 146097 + doe - 719468;
}

std::string civil_from_days(std::int64_t z) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  const unsigned d = doy - (153 * mp + 2) / 5 + 1;
  const unsigned m = mp < 10 ? mp + 3 : mp - 9;
  const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400 + (m <= 2);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04lld-%02u-%02u", static_cast<long long>(y), m, d);
  return buf;
}

std::int64_t reference_day(const DgpConfig& c) {
  int y, m, d;
  std::sscanf(c.reference_date.c_str(), "%4d-%2d-%2d", &y, &m, &d);
  return days_from_civil(y, static_cast<unsigned>(m), static_cast<unsigned>(d));
}

template <std::size_t N>
const char* pick(Rng& rng, const std::array<const char*, N>& list) {
  return list[rng.index(N)];
}

constexpr std::array<const char*, 32> kLorem{
    "lorem", "ipsum",   "dolor", "sit",     "amet",   "consectetur", "adipiscing", "elit",
    "sed",   "do",      "magna", "aliqua",  "enim",   "minim",       "veniam",     "quis",
    "nulla", "pariatur", "velit", "esse",   "cillum", "fugiat",      "culpa",      "officia",
    "irure", "tempor",  "labore", "dolore", "aute",   "ut",          "nisi",       "ex"};

std::string lorem(Rng& rng, int min_words, int max_words) {
  auto n = rng.uniform_int(min_words, max_words);
  std::string out;
  for (std::int64_t i = 0; i < n; ++i) {
    if (i) out += ' ';
    out += pick(rng, kLorem);
  }
  if (!out.empty()) out[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(out[0])));
  return out + ".";
}

struct CategoryDef {
  const char* name;
  std::array<const char*, 3> brands;
  std::array<const char*, 4> nouns;
};

const std::array<CategoryDef, 8> kCategories{{
    {"Electronics", {"Voltra", "Nexon", "Aurix"}, {"Headphones", "Charger", "Speaker", "Keyboard"}},
    {"Fashion", {"Lumea", "Northwind", "Calder"}, {"Jacket", "Sneakers", "Scarf", "Jeans"}},
    {"Home", {"Hearthly", "Oakline", "Nestor"}, {"Lamp", "Cushion", "Kettle", "Rug"}},
    {"Beauty", {"Glowa", "Purelle", "Vessa"}, {"Serum", "Lipstick", "Cleanser", "Mask"}},
    {"Sports", {"Stridex", "Peakform", "Kinetiq"}, {"Yoga Mat", "Dumbbell", "Bottle", "Racket"}},
    {"Books", {"Inkwell", "Pagecraft", "Folio"}, {"Novel", "Cookbook", "Atlas", "Journal"}},
    {"Toys", {"Playnest", "Bricko", "Wonderkin"}, {"Puzzle", "Robot", "Plush", "Kite"}},
    {"Grocery", {"Harvest", "Dailyfresh", "Greenbin"}, {"Coffee", "Tea", "Granola", "Olive Oil"}},
}};

constexpr std::array<const char*, 8> kAdjectives{"Classic", "Smart", "Eco", "Deluxe", "Compact", "Premium", "Basic", "Ultra"};
constexpr std::array<const char*, 12> kFirst{"Minji", "Jisoo", "Alex", "Sam", "Hana", "Daniel",
                                              "Yuna", "Chris", "Taylor", "Jordan", "Seojun", "Ari"};
constexpr std::array<const char*, 10> kLast{"Kim", "Lee", "Park", "Choi", "Smith", "Jung", "Kang", "Garcia", "Cho", "Yoon"};
constexpr std::array<const char*, 8> kCities{"Seoul", "Busan", "Incheon", "Daegu", "Daejeon", "Gwangju", "Suwon", "Ulsan"};
constexpr std::array<const char*, 6> kColors{"black", "white", "red", "blue", "green", "grey"};
constexpr std::array<const char*, 4> kSizes{"S", "M", "L", "XL"};
constexpr std::array<const char*, 4> kStatus{"delivered", "delivered", "shipped", "cancelled"};
constexpr std::array<const char*, 4> kPayMethods{"card", "bank_transfer", "mobile", "points"};
constexpr std::array<const char*, 3> kCarriers{"CJ", "Hanjin", "Lotte"};
constexpr std::array<const char*, 3> kDevices{"ios", "android", "web"};
constexpr std::array<const char*, 6> kPromoWords{"Spring", "Summer", "Flash", "Weekend", "Holiday", "Welcome"};
constexpr std::array<const char*, 3> kPromoKinds{"Sale", "Deal", "Festival"};

struct OrderCore {
  std::size_t user = 0;
  double paid = 0;
  double u_coupon = 0;
  double u_exist = 0;
  std::size_t promo = 0;
  bool coupon = false;
};

/// Exogenous draws and factual values that the mechanisms read.
struct World {
  std::vector<int> signup_days;
  std::vector<int> is_active;
  std::vector<double> promo_rate;
  std::vector<OrderCore> orders;
};

double coupon_probability(const DgpConfig& c, int active, double paid) {
  if (c.coupon_model.randomized) return 0.5;
  const auto& k = c.coupon_model.coefficients;
  return sigmoid(c.coupon_model.intercept + coef(k, "is_active") * active + coef(k, "paid_amount") * paid);
}

double review_latent(const DgpConfig& c, int active, int coupon, double paid) {
  const auto& k = c.review_model.coefficients;
  return c.review_model.intercept + coef(k, "is_active") * active + coef(k, "coupon_redeemed") * coupon +
         coef(k, "paid_amount") * paid;
}

bool review_exists(const DgpConfig& c, double latent, double u) {
  return u < sigmoid(latent + c.review_model.existence_offset);
}

int review_score(const DgpConfig& c, double latent) {
  int s = 1;
  for (double cut : c.review_model.score_cutpoints) s += cut < latent;
  return s;
}

std::int64_t earned_points(const DgpConfig& c, int active, int coupon, double paid) {
  const auto& k = c.points_model.coefficients;
  double rate = c.points_model.base_rate + coef(k, "is_active") * active + coef(k, "coupon_redeemed") * coupon;
  return static_cast<std::int64_t>(std::floor(paid * rate));
}

double discount(const DgpConfig& c, int coupon, double paid, double rate) {
  return coupon ? round2(std::min(c.discount_model.cap, rate * paid)) : 0.0;
}

double charged_amount(const DgpConfig& c, int coupon, double paid, double rate) {
  return round2(paid - discount(c, coupon, paid, rate));
}

/// Builds the core entities. Rows are produced only when `tables` is given.
World build_world(const DgpConfig& c, std::vector<Table>* tables) {
  World w;
  const auto ref_day = reference_day(c);
  auto emit = [&](Table t) {
    if (tables) tables->push_back(std::move(t));
  };

  Table categories{"categories", {{"category_id", "INTEGER", {}, true}, {"name", "TEXT"}}, {}};
  Table brands{"brands",
               {{"brand_id", "INTEGER", {}, true}, {"name", "TEXT"}, {"category_id", "INTEGER", "categories(category_id)"}},
               {}};
  for (std::size_t i = 0; i < kCategories.size(); ++i) {
    categories.rows.push_back({std::int64_t(i + 1), std::string(kCategories[i].name)});
    for (std::size_t b = 0; b < 3; ++b)
      brands.rows.push_back({std::int64_t(i * 3 + b + 1), std::string(kCategories[i].brands[b]), std::int64_t(i + 1)});
  }

  // Products: category drawn first, then brand and noun from that category.
  Rng prng(c.seed, "products");
  Table products{"products",
                 {{"product_id", "INTEGER", {}, true},
                  {"name", "TEXT"},
                  {"category_id", "INTEGER", "categories(category_id)"},
                  {"brand_id", "INTEGER", "brands(brand_id)"},
                  {"price", "REAL"},
                  {"description", "TEXT"}},
                 {}};
  std::vector<double> price;
  for (std::size_t i = 0; i < c.count("products"); ++i) {
    auto cat = prng.index(kCategories.size());
    auto brand = prng.index(3);
    std::string name = std::string(pick(prng, kAdjectives)) + " " + pick(prng, kCategories[cat].nouns);
    double p = std::clamp(round2(prng.uniform(c.price_low, c.price_high)), c.price_low, c.price_high);
    price.push_back(p);
    products.rows.push_back({std::int64_t(i + 1), name, std::int64_t(cat + 1), std::int64_t(cat * 3 + brand + 1), p,
                             lorem(prng, 6, 14)});
  }

  Rng srng(c.seed, "skus");
  Table skus{"skus",
             {{"sku_id", "INTEGER", {}, true},
              {"product_id", "INTEGER", "products(product_id)"},
              {"color", "TEXT"},
              {"size", "TEXT"},
              {"stock", "INTEGER"}},
             {}};
  std::vector<std::size_t> sku_product;
  for (std::size_t p = 0; p < price.size(); ++p) {
    auto n = srng.uniform_int(1, 3);
    for (std::int64_t k = 0; k < n; ++k) {
      sku_product.push_back(p);
      skus.rows.push_back({std::int64_t(sku_product.size()), std::int64_t(p + 1), std::string(pick(srng, kColors)),
                           std::string(pick(srng, kSizes)), srng.uniform_int(0, 200)});
    }
  }

  Rng urng(c.seed, "users");
  Table users{"users",
              {{"user_id", "INTEGER", {}, true},
               {"name", "TEXT"},
               {"email", "TEXT"},
               {"gender", "TEXT"},
               {"birth_year", "INTEGER"},
               {"signup_date", "TEXT"},
               {"signup_days_ago", "INTEGER"},
               {"is_active", "BOOLEAN"}},
              {}};
  for (std::size_t i = 0; i < c.count("users"); ++i) {
    std::string name = std::string(pick(urng, kFirst)) + " " + pick(urng, kLast);
    std::string gender = urng.bernoulli(0.5) ? "F" : "M";
    auto birth = urng.uniform_int(1960, 2005);
    int days = static_cast<int>(urng.uniform_int(0, c.max_signup_days));
    double u = urng.uniform();
    int active = u < activity_probability(c, days) ? 1 : 0;
    w.signup_days.push_back(days);
    w.is_active.push_back(active);
    users.rows.push_back({std::int64_t(i + 1), name, "user" + std::to_string(i + 1) + "@example.com", gender, birth,
                          civil_from_days(ref_day - days), std::int64_t{days}, std::int64_t{active}});
  }

  Rng arng(c.seed, "addresses");
  Table addresses{"addresses",
                  {{"address_id", "INTEGER", {}, true},
                   {"user_id", "INTEGER", "users(user_id)"},
                   {"city", "TEXT"},
                   {"zip_code", "TEXT"}},
                  {}};
  std::vector<std::int64_t> first_address;
  for (std::size_t u = 0; u < w.is_active.size(); ++u) {
    auto n = arng.uniform_int(1, 2);
    for (std::int64_t k = 0; k < n; ++k) {
      auto id = std::int64_t(addresses.rows.size() + 1);
      if (k == 0) first_address.push_back(id);
      char zip[8];
      std::snprintf(zip, sizeof zip, "%05lld", static_cast<long long>(arng.uniform_int(1000, 63999)));
      addresses.rows.push_back({id, std::int64_t(u + 1), std::string(pick(arng, kCities)), std::string(zip)});
    }
  }

  Rng mrng(c.seed, "promotions");
  Table promotions{"promotions",
                   {{"promotion_id", "INTEGER", {}, true},
                    {"name", "TEXT"},
                    {"description", "TEXT"},
                    {"discount_rate", "REAL"},
                    {"start_date", "TEXT"},
                    {"end_date", "TEXT"}},
                   {}};
  for (std::size_t i = 0; i < c.count("promotions"); ++i) {
    double rate = std::round(mrng.uniform(c.discount_model.rate_low, c.discount_model.rate_high) * 1000.0) / 1000.0;
    auto start = ref_day - mrng.uniform_int(30, c.max_signup_days);
    w.promo_rate.push_back(rate);
    promotions.rows.push_back({std::int64_t(i + 1), std::string(pick(mrng, kPromoWords)) + " " + pick(mrng, kPromoKinds),
                               lorem(mrng, 5, 12), rate, civil_from_days(start),
                               civil_from_days(start + mrng.uniform_int(7, 30))});
  }

  // Orders. Every draw happens unconditionally so the noise of one order never
  // depends on another order's treatment.
  Rng orng(c.seed, "orders");
  Table order_items{"order_items",
                    {{"order_item_id", "INTEGER", {}, true},
                     {"order_id", "INTEGER", "orders(order_id)"},
                     {"sku_id", "INTEGER", "skus(sku_id)"},
                     {"quantity", "INTEGER"},
                     {"unit_price", "REAL"}},
                    {}};
  std::vector<std::int64_t> order_day;
  std::vector<std::string> order_status;
  for (std::size_t i = 0; i < c.count("orders"); ++i) {
    OrderCore o;
    o.user = orng.index(w.is_active.size());
    auto n_items = orng.uniform_int(1, 3);
    double total = 0;
    for (std::int64_t k = 0; k < n_items; ++k) {
      auto sku = orng.index(sku_product.size());
      auto qty = orng.uniform_int(1, 3);
      double unit = price[sku_product[sku]];
      total += unit * static_cast<double>(qty);
      order_items.rows.push_back({std::int64_t(order_items.rows.size() + 1), std::int64_t(i + 1),
                                  std::int64_t(sku + 1), qty, unit});
    }
    o.paid = round2(total);
    order_day.push_back(ref_day - orng.uniform_int(0, w.signup_days[o.user]));
    order_status.push_back(pick(orng, kStatus));
    o.u_coupon = orng.uniform();
    o.u_exist = orng.uniform();
    o.promo = orng.index(w.promo_rate.size());
    o.coupon = o.u_coupon < coupon_probability(c, w.is_active[o.user], o.paid);
    w.orders.push_back(o);
  }
  if (!tables) return w;

  // Coupons: one per redeemed order plus unredeemed issues.
  Rng crng(c.seed, "coupons");
  Table coupons{"coupons",
                {{"coupon_id", "INTEGER", {}, true},
                 {"promotion_id", "INTEGER", "promotions(promotion_id)"},
                 {"user_id", "INTEGER", "users(user_id)"},
                 {"code", "TEXT"},
                 {"issued_at", "TEXT"},
                 {"is_used", "BOOLEAN"},
                 {"discount_amount", "REAL"}},
                {}};
  auto code = [&] {
    std::string s;
    for (int k = 0; k < 8; ++k) s += "ABCDEFGHJKLMNPQRSTUVWXYZ23456789"[crng.index(32)];
    return s;
  };
  std::vector<std::optional<std::int64_t>> order_coupon(w.orders.size());
  for (std::size_t i = 0; i < w.orders.size(); ++i) {
    const auto& o = w.orders[i];
    if (!o.coupon) continue;
    auto id = std::int64_t(coupons.rows.size() + 1);
    order_coupon[i] = id;
    coupons.rows.push_back({id, std::int64_t(o.promo + 1), std::int64_t(o.user + 1), code(),
                            civil_from_days(order_day[i] - crng.uniform_int(0, 14)), std::int64_t{1},
                            discount(c, 1, o.paid, w.promo_rate[o.promo])});
  }
  for (std::size_t k = 0; k < w.is_active.size() / 2; ++k) {
    auto user = crng.index(w.is_active.size());
    auto promo = crng.index(w.promo_rate.size());
    coupons.rows.push_back({std::int64_t(coupons.rows.size() + 1), std::int64_t(promo + 1), std::int64_t(user + 1), code(),
                            civil_from_days(ref_day - crng.uniform_int(0, 90)), std::int64_t{0}, db::Value()});
  }

  Table orders{"orders",
               {{"order_id", "INTEGER", {}, true},
                {"user_id", "INTEGER", "users(user_id)"},
                {"address_id", "INTEGER", "addresses(address_id)"},
                {"coupon_id", "INTEGER", "coupons(coupon_id)"},
                {"order_date", "TEXT"},
                {"status", "TEXT"},
                {"coupon_redeemed", "BOOLEAN"},
                {"paid_amount", "REAL"}},
               {}};
  for (std::size_t i = 0; i < w.orders.size(); ++i) {
    const auto& o = w.orders[i];
    orders.rows.push_back({std::int64_t(i + 1), std::int64_t(o.user + 1), first_address[o.user],
                           order_coupon[i] ? db::Value(*order_coupon[i]) : db::Value(), civil_from_days(order_day[i]),
                           order_status[i], std::int64_t{o.coupon}, o.paid});
  }

  emit(std::move(categories));
  emit(std::move(brands));
  emit(std::move(products));
  emit(std::move(skus));
  emit(std::move(users));
  emit(std::move(addresses));
  emit(std::move(promotions));
  emit(std::move(coupons));
  emit(std::move(orders));
  emit(std::move(order_items));

  return w;
}

void build_periphery(const DgpConfig& c, const World& w, std::vector<Table>& tables) {
  const auto ref_day = reference_day(c);
  const auto& orders = tables[8];
  const auto& items = tables[9];
  const auto n_skus = tables[3].rows.size();
  const auto n_products = tables[2].rows.size();
  auto order_day = [&](std::size_t i) { return std::get<std::string>(orders.rows[i][4]); };
  auto day_num = [&](std::size_t i) {
    int y, m, d;
    std::sscanf(order_day(i).c_str(), "%4d-%2d-%2d", &y, &m, &d);
    return days_from_civil(y, static_cast<unsigned>(m), static_cast<unsigned>(d));
  };

  Rng prng(c.seed, "payments");
  Table payments{"payments",
                 {{"payment_id", "INTEGER", {}, true},
                  {"order_id", "INTEGER", "orders(order_id)"},
                  {"method", "TEXT"},
                  {"amount", "REAL"},
                  {"paid_at", "TEXT"}},
                 {}};
  Rng hrng(c.seed, "shipments");
  Table shipments{"shipments",
                  {{"shipment_id", "INTEGER", {}, true},
                   {"order_id", "INTEGER", "orders(order_id)"},
                   {"carrier", "TEXT"},
                   {"shipped_at", "TEXT"},
                   {"delivered_at", "TEXT"}},
                  {}};
  for (std::size_t i = 0; i < w.orders.size(); ++i) {
    const auto& o = w.orders[i];
    payments.rows.push_back({std::int64_t(i + 1), std::int64_t(i + 1), std::string(pick(prng, kPayMethods)),
                             charged_amount(c, o.coupon, o.paid, w.promo_rate[o.promo]), order_day(i)});
    auto ship = day_num(i) + hrng.uniform_int(0, 2);
    auto deliver = ship + hrng.uniform_int(1, 5);
    const auto& carrier = pick(hrng, kCarriers);
    if (std::get<std::string>(orders.rows[i][5]) == "cancelled") continue;
    shipments.rows.push_back({std::int64_t(shipments.rows.size() + 1), std::int64_t(i + 1), std::string(carrier),
                              civil_from_days(ship), civil_from_days(deliver)});
  }

  std::vector<std::int64_t> first_product(w.orders.size(), 0);
  for (const auto& row : items.rows) {
    auto oid = static_cast<std::size_t>(std::get<std::int64_t>(row[1]) - 1);
    if (!first_product[oid]) {
      auto sku = static_cast<std::size_t>(std::get<std::int64_t>(row[2]) - 1);
      first_product[oid] = std::get<std::int64_t>(tables[3].rows[sku][1]);
    }
  }

  Rng rrng(c.seed, "reviews");
  Table reviews{"reviews",
                {{"review_id", "INTEGER", {}, true},
                 {"order_id", "INTEGER", "orders(order_id)"},
                 {"user_id", "INTEGER", "users(user_id)"},
                 {"product_id", "INTEGER", "products(product_id)"},
                 {"review_score", "INTEGER"},
                 {"content", "TEXT"},
                 {"created_at", "TEXT"}},
                {}};
  for (std::size_t i = 0; i < w.orders.size(); ++i) {
    const auto& o = w.orders[i];
    auto content = lorem(rrng, 4, 16);
    auto lag = rrng.uniform_int(1, 20);
    double latent = review_latent(c, w.is_active[o.user], o.coupon, o.paid);
    if (!review_exists(c, latent, o.u_exist)) continue;
    reviews.rows.push_back({std::int64_t(reviews.rows.size() + 1), std::int64_t(i + 1), std::int64_t(o.user + 1),
                            first_product[i], std::int64_t{review_score(c, latent)}, content,
                            civil_from_days(std::min(day_num(i) + lag, ref_day))});
  }

  Rng trng(c.seed, "point_transaction");
  Table points{"point_transaction",
               {{"transaction_id", "INTEGER", {}, true},
                {"user_id", "INTEGER", "users(user_id)"},
                {"order_id", "INTEGER", "orders(order_id)"},
                {"points", "INTEGER"},
                {"transaction_type", "TEXT"},
                {"created_at", "TEXT"}},
               {}};
  for (std::size_t i = 0; i < w.orders.size(); ++i) {
    const auto& o = w.orders[i];
    bool spend = trng.bernoulli(c.points_model.spend_probability);
    auto spent = trng.uniform_int(c.points_model.spend_min, c.points_model.spend_max);
    if (spend)
      points.rows.push_back({std::int64_t(points.rows.size() + 1), std::int64_t(o.user + 1), std::int64_t(i + 1), spent,
                             std::string("spend"), order_day(i)});
    points.rows.push_back({std::int64_t(points.rows.size() + 1), std::int64_t(o.user + 1), std::int64_t(i + 1),
                           earned_points(c, w.is_active[o.user], o.coupon, o.paid), std::string("earn"), order_day(i)});
  }

  Rng krng(c.seed, "carts");
  Table carts{"carts", {{"cart_id", "INTEGER", {}, true}, {"user_id", "INTEGER", "users(user_id)"}, {"created_at", "TEXT"}}, {}};
  Table cart_items{"cart_items",
                   {{"cart_item_id", "INTEGER", {}, true},
                    {"cart_id", "INTEGER", "carts(cart_id)"},
                    {"sku_id", "INTEGER", "skus(sku_id)"},
                    {"quantity", "INTEGER"}},
                   {}};
  for (std::size_t i = 0; i < c.count("carts"); ++i) {
    auto user = krng.index(w.is_active.size());
    carts.rows.push_back({std::int64_t(i + 1), std::int64_t(user + 1), civil_from_days(ref_day - krng.uniform_int(0, 60))});
    auto n = krng.uniform_int(1, 4);
    for (std::int64_t k = 0; k < n; ++k)
      cart_items.rows.push_back({std::int64_t(cart_items.rows.size() + 1), std::int64_t(i + 1),
                                 std::int64_t(krng.index(n_skus) + 1), krng.uniform_int(1, 3)});
  }

  Rng vrng(c.seed, "sessions");
  Table sessions{"sessions",
                 {{"session_id", "INTEGER", {}, true},
                  {"user_id", "INTEGER", "users(user_id)"},
                  {"started_at", "TEXT"},
                  {"device", "TEXT"},
                  {"page_views", "INTEGER"}},
                 {}};
  for (std::size_t i = 0; i < c.count("sessions"); ++i) {
    auto user = vrng.index(w.is_active.size());
    sessions.rows.push_back({std::int64_t(i + 1), std::int64_t(user + 1),
                             civil_from_days(ref_day - vrng.uniform_int(0, 180)), std::string(pick(vrng, kDevices)),
                             vrng.uniform_int(1, 40)});
  }

  Rng lrng(c.seed, "wishlists");
  Table wishlists{"wishlists",
                  {{"wishlist_id", "INTEGER", {}, true},
                   {"user_id", "INTEGER", "users(user_id)"},
                   {"product_id", "INTEGER", "products(product_id)"},
                   {"added_at", "TEXT"}},
                  {}};
  for (std::size_t i = 0; i < c.count("wishlists"); ++i) {
    auto user = lrng.index(w.is_active.size());
    wishlists.rows.push_back({std::int64_t(i + 1), std::int64_t(user + 1), std::int64_t(lrng.index(n_products) + 1),
                              civil_from_days(ref_day - lrng.uniform_int(0, 365))});
  }

  for (auto* t : {&payments, &shipments, &reviews, &points, &carts, &cart_items, &sessions, &wishlists})
    tables.push_back(std::move(*t));
}

}  // namespace

double activity_probability(const DgpConfig& c, double days) {
  return sigmoid(-(days - c.activity_sigmoid.midpoint_days) / c.activity_sigmoid.scale_days);
}

GeneratedDatabase generate(const DgpConfig& config) {
  config.validate();
  GeneratedDatabase out;
  out.seed = config.seed;
  out.config = config;
  auto world = build_world(config, &out.tables);
  build_periphery(config, world, out.tables);
  for (const auto& t : out.tables)
    for (const auto& col : t.columns)
      if (col.references) {
        auto ref = *col.references;
        auto open = ref.find('(');
        out.fk_edges.push_back({t.name, col.name, ref.substr(0, open), ref.substr(open + 1, ref.size() - open - 2)});
      }
  return out;
}

void load_into(const GeneratedDatabase& database, db::Connection& connection, bool force) {
  auto existing = connection.user_tables();
  if (!existing.empty()) {
    if (!force)
      fail(ErrorCode::TargetNotEmpty, "target already holds " + std::to_string(existing.size()) + " tables (" +
                                          text::join(existing, ", ") + ")");
    connection.exec("PRAGMA foreign_keys = OFF");
    for (const auto& t : existing) connection.exec("DROP TABLE \"" + t + "\"");
  }
  for (const auto& t : database.tables) {
    std::string ddl = "CREATE TABLE \"" + t.name + "\" (";
    std::vector<std::string> names;
    for (std::size_t i = 0; i < t.columns.size(); ++i) {
      const auto& col = t.columns[i];
      names.push_back(col.name);
      if (i) ddl += ", ";
      ddl += "\"" + col.name + "\" " + col.type;
      if (col.primary_key) ddl += " PRIMARY KEY";
    }
    for (const auto& col : t.columns)
      if (col.references) {
        auto open = col.references->find('(');
        ddl += ", FOREIGN KEY (\"" + col.name + "\") REFERENCES \"" + col.references->substr(0, open) + "\"" +
               col.references->substr(open);
      }
    ddl += ")";
    connection.exec(ddl);
    connection.insert_rows(t.name, names, t.rows);
  }
}

QuerySpec query_from_json(const nlohmann::json& j) {
  try {
    QuerySpec q;
    q.id = j.at("id").get<std::string>();
    q.question = j.at("question").get<std::string>();
    q.treatment = j.at("treatment").get<std::string>();
    q.outcome = j.at("outcome").get<std::string>();
    q.graph = j.at("graph").get<std::string>();
    q.bindings = j.at("bindings").get<std::map<std::string, std::string>>();
    q.oracle_sql = j.at("oracle_sql").get<std::string>();
    q.estimation = j.value("estimation", q.estimation);
    return q;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvalidConfig, std::string("malformed query spec: ") + e.what());
  }
}

nlohmann::json to_json(const QuerySpec& q) {
  return {{"id", q.id},           {"question", q.question}, {"treatment", q.treatment},   {"outcome", q.outcome},
          {"graph", q.graph},     {"bindings", q.bindings}, {"oracle_sql", q.oracle_sql}, {"estimation", q.estimation}};
}

std::vector<QuerySpec> load_queries(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::FixtureMissing, "cannot read " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorCode::InvalidConfig, path + ": " + e.what());
  }
  std::vector<QuerySpec> out;
  for (const auto& q : j.is_array() ? j : j.at("queries")) out.push_back(query_from_json(q));
  return out;
}

std::vector<QuerySpec> default_queries() { return load_queries(std::string(ORCA_DATA_DIR) + "/reef/queries.json"); }

Replay replay(const DgpConfig& config, const std::string& treatment, const std::string& outcome,
              std::optional<int> forced) {
  config.validate();
  if (treatment != "orders.coupon_redeemed" && treatment != "users.is_active")
    fail(ErrorCode::TreatmentNotInDgp, treatment + " has no causal mechanism in the generator");
  if (outcome != "reviews.review_score" && outcome != "point_transaction.points" && outcome != "payments.amount")
    fail(ErrorCode::TreatmentNotInDgp, "outcome " + outcome + " is not produced by a causal mechanism");
  if (forced) require(*forced == 0 || *forced == 1, "forced treatment must be 0 or 1");

  auto w = build_world(config, nullptr);
  Replay out;
  for (std::size_t i = 0; i < w.orders.size(); ++i) {
    const auto& o = w.orders[i];
    int active = w.is_active[o.user];
    int coupon = o.coupon;
    if (forced && treatment == "users.is_active") {
      active = *forced;
      coupon = o.u_coupon < coupon_probability(config, active, o.paid);
    } else if (forced) {
      coupon = *forced;
    }
    double y;
    if (outcome == "reviews.review_score") {
      // Units are the orders reviewed in the factual world.
      double factual = review_latent(config, w.is_active[o.user], o.coupon, o.paid);
      if (!review_exists(config, factual, o.u_exist)) continue;
      y = review_score(config, review_latent(config, active, coupon, o.paid));
    } else if (outcome == "point_transaction.points") {
      y = static_cast<double>(earned_points(config, active, coupon, o.paid));
    } else {
      y = charged_amount(config, coupon, o.paid, w.promo_rate[o.promo]);
    }
    out.unit_ids.push_back(std::int64_t(i + 1));
    out.outcomes.push_back(y);
  }
  return out;
}

GroundTruth compute_ground_truth(const DgpConfig& config, const std::vector<QuerySpec>& queries) {
  GroundTruth g;
  g.seed = config.seed;
  g.config = config;
  const double z = causal::normal_critical(0.95);
  for (const auto& q : queries) {
    auto treated = replay(config, q.treatment, q.outcome, 1);
    auto control = replay(config, q.treatment, q.outcome, 0);
    const auto n = treated.outcomes.size();
    if (n < 2) fail(ErrorCode::EmptyDataset, "query " + q.id + " has fewer than two units");
    double mean = 0;
    for (std::size_t i = 0; i < n; ++i) mean += treated.outcomes[i] - control.outcomes[i];
    mean /= static_cast<double>(n);
    double ss = 0;
    for (std::size_t i = 0; i < n; ++i) {
      double d = treated.outcomes[i] - control.outcomes[i] - mean;
      ss += d * d;
    }
    double se = std::sqrt(ss / static_cast<double>(n - 1) / static_cast<double>(n));
    g.queries.push_back({q, mean, mean - z * se, mean + z * se, n});
  }
  return g;
}

nlohmann::json to_json(const GroundTruth& g) {
  nlohmann::json qs = nlohmann::json::array();
  for (const auto& e : g.queries) {
    auto j = to_json(e.query);
    j["true_ate"] = e.true_ate;
    j["true_ci"] = {e.ci_low, e.ci_high};
    j["n_units"] = e.n_units;
    qs.push_back(j);
  }
  return {{"seed", g.seed}, {"config", to_json(g.config)}, {"queries", qs}};
}

GroundTruth ground_truth_from_json(const nlohmann::json& j) {
  GroundTruth g;
  try {
    g.seed = j.at("seed").get<std::uint64_t>();
    g.config = config_from_json(j.at("config"));
    for (const auto& q : j.at("queries")) {
      TruthEntry e{query_from_json(q), q.at("true_ate").get<double>(), q.at("true_ci").at(0).get<double>(),
                   q.at("true_ci").at(1).get<double>(), q.value("n_units", std::size_t{0})};
      g.queries.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvalidConfig, std::string("malformed manifest: ") + e.what());
  }
  return g;
}

GroundTruth load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::FixtureMissing, "cannot read manifest " + path);
  try {
    return ground_truth_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorCode::InvalidConfig, path + ": " + e.what());
  }
}

double naive_difference(db::Connection& connection, const QuerySpec& query) {
  std::string t_var, y_var;
  for (const auto& [v, ref] : query.bindings) {
    if (ref == query.treatment) t_var = v;
    if (ref == query.outcome) y_var = v;
  }
  require(!t_var.empty() && !y_var.empty(), "query " + query.id + " does not bind its treatment and outcome");
  auto rs = connection.query(query.oracle_sql);
  auto ti = rs.column_index(t_var), yi = rs.column_index(y_var);
  if (!ti || !yi) fail(ErrorCode::RetrievalFailed, "oracle SQL of " + query.id + " lacks the treatment or outcome column");
  double sum[2] = {0, 0};
  std::size_t n[2] = {0, 0};
  for (const auto& row : rs.rows) {
    auto t = db::as_number(row[*ti]);
    auto y = db::as_number(row[*yi]);
    if (!t || !y) continue;
    int arm = *t != 0.0;
    sum[arm] += *y;
    ++n[arm];
  }
  if (!n[0] || !n[1]) fail(ErrorCode::EmptyArm, "query " + query.id + " has an empty treatment arm");
  return sum[1] / static_cast<double>(n[1]) - sum[0] / static_cast<double>(n[0]);
}

}  // namespace orca::reef
