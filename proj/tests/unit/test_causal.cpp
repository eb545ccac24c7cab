#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "orca/causal/estimate.h"
#include "orca/causal/graph.h"
#include "orca/common/rng.h"
#include "oracles.h"
#include "support.h"

using namespace orca;
using namespace orca::causal;

using namespace orca::testing;

TEST_CASE("graph validation") {
  CHECK_NOTHROW(validate_graph(parse_graph("A -> B\nB -> C")));
  CHECK_CODE(validate_graph(parse_graph("A -> B\nB -> A")), ErrorCode::CyclicGraph);
  CausalGraph dangling{{"A"}, {{"A", "B"}}, {}};
  CHECK_CODE(validate_graph(dangling), ErrorCode::DanglingEdge);
  CausalGraph dup{{"A", "A"}, {}, {}};
  CHECK_CODE(validate_graph(dup), ErrorCode::DuplicateNode);
  CHECK_CODE(parse_graph("A => B"), ErrorCode::GraphParse);
  CHECK_CODE(parse_graph("# nothing"), ErrorCode::GraphParse);
}

TEST_CASE("graph text format") {
  auto g = parse_graph("# reef\nis_active -> coupon_redeemed; is_active -> review_score\nX -> Y -> Z\nlonely\nA <-> B\n");
  CHECK(g.has_node("lonely"));
  CHECK(g.has_directed_path("X", "Z"));
  CHECK(g.latent == std::set<std::string>{"U_A_B"});
  CHECK(parse_graph(format_graph(g)).edges == g.edges);
}

TEST_CASE("backdoor textbook cases") {
  CHECK(identify_backdoor(parse_graph("Z -> T\nZ -> Y\nT -> Y"), "T", "Y").adjustment_set == std::vector<std::string>{"Z"});
  CHECK(identify_backdoor(parse_graph("T -> M -> Y"), "T", "Y").adjustment_set.empty());
  auto collider = identify_backdoor(parse_graph("T -> C\nY -> C\nT -> Y"), "T", "Y");
  CHECK(collider.adjustment_set.empty());
  CHECK_FALSE(identify_backdoor(parse_graph("T -> C\nY -> C"), "T", "Y").directed_path);
  // M-bias: adjusting for the collider M would open T <- A -> M <- B -> Y.
  CHECK(identify_backdoor(parse_graph("A -> T\nA -> M\nB -> M\nB -> Y\nT -> Y"), "T", "Y").adjustment_set.empty());
  try {
    identify_backdoor(parse_graph("T <-> Y\nT -> Y"), "T", "Y");
    FAIL("expected NotIdentifiable");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NotIdentifiable);
    CHECK(std::string(e.what()).find("T <- U_T_Y -> Y") != std::string::npos);
  }
  CHECK_CODE(identify_backdoor(parse_graph("T -> Y"), "T", "Q"), ErrorCode::UnknownVariable);
}

TEST_CASE("backdoor equals exhaustive-subset oracle on random DAGs") {
  Rng rng(2024);
  int compared = 0;
  for (int trial = 0; trial < 300; ++trial) {
    auto g = random_dag(rng);
    std::vector<std::string> observed;
    for (const auto& n : g.nodes)
      if (!g.latent.count(n)) observed.push_back(n);
    auto t = observed[rng.index(observed.size())];
    auto y = observed[rng.index(observed.size())];
    if (t == y) continue;
    auto expected = oracle_backdoor(g, t, y);
    if (!expected) {
      CHECK(testing::code_of([&] { identify_backdoor(g, t, y); }) == ErrorCode::NotIdentifiable);
    } else {
      CHECK(identify_backdoor(g, t, y).adjustment_set == *expected);
    }
    ++compared;
  }
  CHECK(compared >= 200);
}

TEST_CASE("OLS matches the normal equations and recovers the slope") {
  Rng rng(7);
  const std::size_t n = 5000;
  std::vector<double> t(n), z(n), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    z[i] = rng.normal();
    t[i] = 0.5 * z[i] + rng.normal();
    y[i] = 2.0 * t[i] + 1.0 * z[i] + 0.1 * rng.normal();
  }
  Dataset d;
  d.add("T", t);
  d.add("Z", z);
  d.add("Y", y);
  auto beta = ols_coefficients(d, "T", "Y", {"Z"});
  auto oracle = normal_equations({t, z}, y);
  for (int k = 0; k < 3; ++k) CHECK(std::abs(beta(k) - oracle[static_cast<std::size_t>(k)]) < 1e-8);
  auto e = estimate_linear(d, "T", "Y", {"Z"});
  CHECK(e.covers(2.0));
  CHECK(e.ate == doctest::Approx(2.0).epsilon(0.01));
  CHECK(e.n_used == n);

  // Affine invariance.
  auto shifted = d;
  auto scaled = d;
  std::vector<double> ys = y, yk = y;
  for (auto& v : ys) v += 123.0;
  for (auto& v : yk) v *= -3.0;
  shifted.add("Y", ys);
  scaled.add("Y", yk);
  CHECK(std::abs(estimate_linear(shifted, "T", "Y", {"Z"}).ate - e.ate) < 1e-8);
  auto ek = estimate_linear(scaled, "T", "Y", {"Z"});
  CHECK(std::abs(ek.ate - -3.0 * e.ate) < 1e-8);
  CHECK(std::abs(ek.ci_low - -3.0 * e.ci_high) < 1e-8);
  CHECK(std::abs(ek.ci_high - -3.0 * e.ci_low) < 1e-8);
}

TEST_CASE("OLS CI covers a null effect at the nominal rate") {
  int covered = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    Dataset d;
    std::vector<double> t(200), y(200);
    for (auto& v : t) v = rng.normal();
    for (auto& v : y) v = rng.normal();
    d.add("T", t);
    d.add("Y", y);
    covered += estimate_linear(d, "T", "Y", {}).covers(0.0);
  }
  CHECK(covered >= 90);
}

TEST_CASE("OLS errors") {
  Dataset d;
  d.add("T", {0, 1, 0, 1, 1, 0});
  d.add("Z", {1, 2, 3, 4, 5, 7});
  d.add("Z2", {1, 2, 3, 4, 5, 7});
  d.add("Y", {1, 2, 3, 4, 5, 6});
  CHECK_CODE(estimate_linear(d, "T", "Y", {"Z", "Z2"}), ErrorCode::SingularDesign);
  CHECK_CODE(estimate_linear(d.subset({0, 1, 2}), "T", "Y", {"Z"}), ErrorCode::InsufficientRows);
  CHECK_CODE(estimate_linear(d, "T", "Y", {"nope"}), ErrorCode::UnknownVariable);
}

TEST_CASE("propensity fit") {
  // Treated share is 1/2 within each level of Z, so the MLE is flat at 0.5.
  Dataset d;
  std::vector<double> z, t;
  for (int i = 0; i < 400; ++i) {
    z.push_back(i % 4 < 2 ? 0.0 : 1.0);
    t.push_back(i % 2);
  }
  d.add("Z", z);
  d.add("T", t);
  auto fit = fit_propensity(d, "T", {"Z"});
  for (double s : fit.scores) CHECK(std::abs(s - 0.5) < 1e-6);
  CHECK(fit.grad_norm < kGradTolerance);

  // Separable data: scores pinned to the clip bounds, or a Nonconvergence error.
  Dataset sep;
  std::vector<double> x, tt;
  for (int i = 0; i < 100; ++i) {
    x.push_back(i - 49.5);
    tt.push_back(i >= 50);
  }
  sep.add("X", x);
  sep.add("T", tt);
  auto code = testing::code_of([&] {
    auto f = fit_propensity(sep, "T", {"X"});
    CHECK(*std::min_element(f.scores.begin(), f.scores.end()) == kClipLow);
    CHECK(*std::max_element(f.scores.begin(), f.scores.end()) == kClipHigh);
    CHECK(f.raw_min < kClipLow);
  });
  CHECK((!code || *code == ErrorCode::Nonconvergence));

  Dataset bad;
  bad.add("T", {0, 1, 2});
  CHECK_CODE(fit_propensity(bad, "T", {}), ErrorCode::NonBinaryTreatment);
}

TEST_CASE("constant scores make Hajek IPW the difference of arm means") {
  std::vector<double> t{1, 0, 1, 1, 0, 0, 0}, y{3.5, 1.0, 2.5, 4.0, 0.5, 2.0, 1.5};
  std::vector<double> e(t.size(), 0.37);
  double m1 = (3.5 + 2.5 + 4.0) / 3.0, m0 = (1.0 + 0.5 + 2.0 + 1.5) / 4.0;
  CHECK(propensity_point(Estimation::PropensityWeighting, t, y, e) == doctest::Approx(m1 - m0).epsilon(1e-14));
}

TEST_CASE("matching and stratification by hand") {
  // Scores chosen so every match is unique: treated 0 (0.2) -> control 1 (0.25),
  // treated 2 (0.6) -> control 3 (0.55); control 1 -> treated 0, control 3 -> treated 2.
  std::vector<double> t{1, 0, 1, 0}, y{5, 1, 9, 2}, e{0.2, 0.25, 0.6, 0.55};
  double expected = ((5 - 1) + (9 - 2) + (5 - 1) + (9 - 2)) / 4.0;
  CHECK(propensity_point(Estimation::PropensityMatching, t, y, e) == doctest::Approx(expected));
  // Equidistant controls: the lower index wins.
  std::vector<double> t2{0, 1, 0}, y2{10, 0, 20}, e2{0.4, 0.5, 0.6};
  CHECK(propensity_point(Estimation::PropensityMatching, t2, y2, e2) == doctest::Approx(((0 - 10) + (0 - 10) + (0 - 20)) / 3.0));

  // Ten units, five strata of two; the first stratum has no control and is dropped.
  std::vector<double> ts{1, 1, 1, 0, 1, 0, 1, 0, 1, 0};
  std::vector<double> ys{9, 9, 4, 1, 6, 2, 8, 3, 10, 4};
  std::vector<double> es{0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5, 0.55};
  std::map<std::string, double> diag;
  double s = propensity_point(Estimation::PropensityStratification, ts, ys, es, &diag);
  CHECK(s == doctest::Approx(((4 - 1) + (6 - 2) + (8 - 3) + (10 - 4)) / 4.0));
  CHECK(diag.at("strata_dropped") == 1);

  CHECK_CODE(propensity_point(Estimation::PropensityWeighting, {1, 1}, {1, 2}, {0.5, 0.5}), ErrorCode::EmptyArm);
}

TEST_CASE("propensity estimators: errors and reproducibility") {
  auto [d, truth] = confounded(3, 300);
  EstimateOptions opt;
  opt.seed = 11;
  opt.bootstrap = 100;
  auto a = estimate_propensity(d, "T", "Y", {"Z"}, Estimation::PropensityWeighting, opt);
  auto b = estimate_propensity(d, "T", "Y", {"Z"}, Estimation::PropensityWeighting, opt);
  CHECK(a.ate == b.ate);
  CHECK(a.ci_low == b.ci_low);
  CHECK(a.ci_high == b.ci_high);
  CHECK(a.ci_low <= a.ate);
  CHECK(a.ate <= a.ci_high);

  Dataset treated_only;
  treated_only.add("T", {1, 1, 1});
  treated_only.add("Y", {1, 2, 3});
  CHECK_CODE(estimate_propensity(treated_only, "T", "Y", {}, Estimation::PropensityMatching), ErrorCode::EmptyArm);
}

TEST_CASE("propensity CIs cover the replayed ATE across seeds") {
  std::map<Estimation, int> covered;
  const int reps = 100;
  for (int r = 0; r < reps; ++r) {
    auto [d, truth] = confounded(1000 + r, 500);
    CHECK(truth == doctest::Approx(2.0));
    for (auto m : {Estimation::PropensityWeighting, Estimation::PropensityStratification, Estimation::PropensityMatching}) {
      EstimateOptions opt;
      opt.seed = static_cast<std::uint64_t>(r);
      covered[m] += estimate_propensity(d, "T", "Y", {"Z"}, m, opt).covers(truth);
    }
  }
  for (const auto& [m, c] : covered) {
    INFO(to_string(m) << " covered " << c);
    CHECK(c >= 85);
  }
}

TEST_CASE("refuters on the ATE = 2 design") {
  auto [d, truth] = confounded(77, 2000);
  CausalModelSpec spec;
  spec.graph = parse_graph("Z -> T\nZ -> Y\nT -> Y");
  spec.treatment = "T";
  spec.outcome = "Y";
  spec.estimation = Estimation::LinearRegression;
  auto est = identify_backdoor(spec.graph, "T", "Y");
  EstimateOptions opt;
  opt.seed = 5;
  auto original = estimate(d, spec, est, opt);
  CHECK(original.covers(truth));

  auto placebo = refute(spec, est, d, original, Refutation::PlaceboTreatment, opt);
  CHECK(placebo.passed);
  CHECK(placebo.refuted_ci_low <= 0.0);
  CHECK(placebo.refuted_ci_high >= 0.0);
  auto rcc = refute(spec, est, d, original, Refutation::RandomCommonCause, opt);
  CHECK(rcc.passed);
  CHECK(std::abs(rcc.refuted_estimate - original.ate) <= 0.25 * std::max(std::abs(original.ate), original.half_width()));
  auto subset = refute(spec, est, d, original, Refutation::DataSubset, opt);
  CHECK(subset.passed);
  auto again = refute(spec, est, d, original, Refutation::PlaceboTreatment, opt);
  CHECK(again.refuted_estimate == placebo.refuted_estimate);

  // 10 rows with six covariates: the full fit works, the 8-row subset cannot.
  Rng rng(1);
  Dataset small;
  std::vector<std::string> covs;
  for (int k = 0; k < 6; ++k) {
    std::vector<double> c(10);
    for (auto& v : c) v = rng.normal();
    covs.push_back("C" + std::to_string(k));
    small.add(covs.back(), c);
  }
  std::vector<double> t(10), y(10);
  for (auto& v : t) v = rng.normal();
  for (auto& v : y) v = rng.normal();
  small.add("T", t);
  small.add("Y", y);
  Estimand wide;
  wide.adjustment_set = covs;
  auto base = estimate(small, spec, wide, opt);
  CHECK_CODE(refute(spec, wide, small, base, Refutation::DataSubset, opt), ErrorCode::InsufficientRows);
}

TEST_CASE("quantile and critical value") {
  CHECK(quantile({1, 2, 3, 4}, 0.5) == doctest::Approx(2.5));
  CHECK(quantile({5}, 0.9) == 5);
  CHECK(normal_critical(0.95) == doctest::Approx(1.959963985).epsilon(1e-9));
}
