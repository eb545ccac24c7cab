#include "orca/causal/estimate.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/distributions/normal.hpp>

#include "orca/common/error.h"
#include "orca/common/rng.h"
#include "orca/common/text.h"

namespace orca::causal {

std::string_view to_string(Estimation e) {
  switch (e) {
    case Estimation::LinearRegression: return "linear_regression";
    case Estimation::PropensityMatching: return "propensity_matching";
    case Estimation::PropensityStratification: return "propensity_stratification";
    case Estimation::PropensityWeighting: return "propensity_weighting";
  }
  return "";
}

std::string_view to_string(Refutation r) {
  switch (r) {
    case Refutation::PlaceboTreatment: return "placebo_treatment";
    case Refutation::RandomCommonCause: return "random_common_cause";
    case Refutation::DataSubset: return "data_subset";
  }
  return "";
}

std::optional<Estimation> parse_estimation(std::string_view s) {
  auto v = text::to_lower(text::trim(s));
  for (auto e : {Estimation::LinearRegression, Estimation::PropensityMatching, Estimation::PropensityStratification,
                 Estimation::PropensityWeighting})
    if (v == to_string(e)) return e;
  return std::nullopt;
}

std::optional<Refutation> parse_refutation(std::string_view s) {
  auto v = text::to_lower(text::trim(s));
  for (auto r : {Refutation::PlaceboTreatment, Refutation::RandomCommonCause, Refutation::DataSubset})
    if (v == to_string(r)) return r;
  return std::nullopt;
}

bool is_propensity(Estimation e) { return e != Estimation::LinearRegression; }

nlohmann::json to_json(const CausalModelSpec& s) {
  return {{"graph", format_graph(s.graph)},
          {"treatment", s.treatment},
          {"outcome", s.outcome},
          {"task", s.task},
          {"identification", s.identification},
          {"estimation", to_string(s.estimation)},
          {"refutation", s.refutation ? nlohmann::json(to_string(*s.refutation)) : nlohmann::json(nullptr)},
          {"seed", s.seed}};
}

std::size_t Dataset::rows() const { return columns.empty() ? 0 : columns.begin()->second.size(); }

const std::vector<double>& Dataset::column(const std::string& name) const {
  auto it = columns.find(name);
  if (it == columns.end()) fail(ErrorCode::UnknownVariable, "dataset has no column " + name);
  return it->second;
}

void Dataset::add(const std::string& name, std::vector<double> values) {
  require(columns.empty() || values.size() == rows(), "dataset column length mismatch: " + name);
  columns[name] = std::move(values);
}

Dataset Dataset::subset(const std::vector<std::size_t>& idx) const {
  Dataset out;
  for (const auto& [name, col] : columns) {
    std::vector<double> v;
    v.reserve(idx.size());
    for (auto i : idx) v.push_back(col[i]);
    out.columns[name] = std::move(v);
  }
  return out;
}

nlohmann::json to_json(const EffectEstimate& e) {
  return {{"ate", e.ate},       {"ci_low", e.ci_low}, {"ci_high", e.ci_high},         {"ci_level", e.ci_level},
          {"n_used", e.n_used}, {"method", e.method}, {"diagnostics", e.diagnostics}};
}

nlohmann::json to_json(const RefutationResult& r) {
  return {{"technique", to_string(r.technique)},
          {"refuted_estimate", r.refuted_estimate},
          {"refuted_ci", {r.refuted_ci_low, r.refuted_ci_high}},
          {"verdict", r.passed ? "passed" : "suspicious"},
          {"detail", r.detail}};
}

double normal_critical(double ci_level) {
  require(ci_level > 0 && ci_level < 1, "ci_level must lie in (0,1)");
  return boost::math::quantile(boost::math::normal(), 1.0 - (1.0 - ci_level) / 2.0);
}

double quantile(std::vector<double> v, double q) {
  require(!v.empty(), "quantile of an empty sample");
  std::sort(v.begin(), v.end());
  double h = (static_cast<double>(v.size()) - 1.0) * q;
  auto lo = static_cast<std::size_t>(std::floor(h));
  auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

namespace {

Eigen::MatrixXd design(const Dataset& data, const std::vector<std::string>& first, const std::vector<std::string>& rest) {
  const auto n = data.rows();
  Eigen::MatrixXd x(n, 1 + first.size() + rest.size());
  x.col(0).setOnes();
  Eigen::Index c = 1;
  for (const auto* list : {&first, &rest})
    for (const auto& name : *list) {
      const auto& col = data.column(name);
      for (std::size_t i = 0; i < n; ++i) x(static_cast<Eigen::Index>(i), c) = col[i];
      ++c;
    }
  return x;
}

Eigen::VectorXd as_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

void check_finite(const Dataset& data, const std::vector<std::string>& names) {
  for (const auto& n : names)
    for (double v : data.column(n))
      require(std::isfinite(v), "non-finite value in column " + n);
}

}  // namespace

Eigen::VectorXd ols_coefficients(const Dataset& data, const std::string& treatment, const std::string& outcome,
                                 const std::vector<std::string>& adjustment) {
  auto n = data.rows();
  if (n <= adjustment.size() + 2)
    fail(ErrorCode::InsufficientRows, std::to_string(n) + " rows for " + std::to_string(adjustment.size() + 2) + " coefficients");
  std::vector<std::string> all{treatment, outcome};
  all.insert(all.end(), adjustment.begin(), adjustment.end());
  check_finite(data, all);
  auto x = design(data, {treatment}, adjustment);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  qr.setThreshold(1e-10);
  if (qr.rank() < x.cols()) fail(ErrorCode::SingularDesign, "design matrix is rank deficient (collinear covariates)");
  return qr.solve(as_vector(data.column(outcome)));
}

EffectEstimate estimate_linear(const Dataset& data, const std::string& treatment, const std::string& outcome,
                               const std::vector<std::string>& adjustment, double ci_level) {
  auto beta = ols_coefficients(data, treatment, outcome, adjustment);
  auto x = design(data, {treatment}, adjustment);
  Eigen::VectorXd resid = as_vector(data.column(outcome)) - x * beta;
  auto n = static_cast<double>(data.rows());
  auto p = static_cast<double>(x.cols());
  double sigma2 = resid.squaredNorm() / (n - p);
  Eigen::MatrixXd xtx = x.transpose() * x;
  Eigen::MatrixXd cov = sigma2 * xtx.ldlt().solve(Eigen::MatrixXd::Identity(x.cols(), x.cols()));
  double se = std::sqrt(std::max(0.0, cov(1, 1)));
  double z = normal_critical(ci_level);

  EffectEstimate e;
  e.ate = beta(1);
  e.ci_low = e.ate - z * se;
  e.ci_high = e.ate + z * se;
  e.ci_level = ci_level;
  e.n_used = data.rows();
  e.method = std::string(to_string(Estimation::LinearRegression));
  e.diagnostics["std_error"] = se;
  e.diagnostics["residual_variance"] = sigma2;
  return e;
}

namespace {

void require_binary(const std::vector<double>& t, const std::string& name) {
  for (double v : t)
    if (v != 0.0 && v != 1.0) fail(ErrorCode::NonBinaryTreatment, name + " has value " + text::fmt_num(v));
}

double sigmoid(double z) { return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

double log_likelihood(const Eigen::MatrixXd& x, const Eigen::VectorXd& t, const Eigen::VectorXd& beta) {
  Eigen::VectorXd eta = x * beta;
  double ll = 0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    // log(1 + e^eta) computed stably
    double softplus = eta(i) > 0 ? eta(i) + std::log1p(std::exp(-eta(i))) : std::log1p(std::exp(eta(i)));
    ll += t(i) * eta(i) - softplus;
  }
  return ll;
}

}  // namespace

PropensityFit fit_propensity(const Dataset& data, const std::string& treatment, const std::vector<std::string>& adjustment,
                             const Eigen::VectorXd* warm_start) {
  const auto& tv = data.column(treatment);
  require_binary(tv, treatment);
  require(data.rows() > 0, "fit_propensity: empty dataset");
  check_finite(data, adjustment);
  auto x = design(data, {}, adjustment);
  Eigen::VectorXd t = as_vector(tv);
  const double n = static_cast<double>(data.rows());

  PropensityFit fit;
  fit.beta = warm_start && warm_start->size() == x.cols() ? *warm_start : Eigen::VectorXd::Zero(x.cols());
  double ll = log_likelihood(x, t, fit.beta);
  for (fit.iterations = 0; fit.iterations < kMaxIrlsIterations; ++fit.iterations) {
    Eigen::VectorXd p = (x * fit.beta).unaryExpr([](double z) { return sigmoid(z); });
    Eigen::VectorXd grad = x.transpose() * (t - p);
    fit.grad_norm = grad.norm() / n;
    if (fit.grad_norm < kGradTolerance) break;
    Eigen::VectorXd w = p.array() * (1.0 - p.array());
    Eigen::MatrixXd h = x.transpose() * w.asDiagonal() * x;
    h.diagonal().array() += 1e-9 * n;  // keeps separable designs solvable
    Eigen::VectorXd step = h.ldlt().solve(grad);
    double scale = 1.0;
    bool improved = false;
    for (int k = 0; k < 30; ++k, scale *= 0.5) {
      Eigen::VectorXd cand = fit.beta + scale * step;
      double cand_ll = log_likelihood(x, t, cand);
      // Strict improvement: at machine precision the likelihood goes flat and
      // accepting ties would spin through every remaining iteration.
      if (cand_ll > ll) {
        fit.beta = cand;
        ll = cand_ll;
        improved = true;
        break;
      }
    }
    if (!improved) break;
  }
  {
    Eigen::VectorXd p = (x * fit.beta).unaryExpr([](double z) { return sigmoid(z); });
    fit.grad_norm = (x.transpose() * (t - p)).norm() / n;
    fit.scores.resize(data.rows());
    fit.raw_min = p.minCoeff();
    fit.raw_max = p.maxCoeff();
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      double s = std::clamp(p(i), kClipLow, kClipHigh);
      if (s != p(i)) ++fit.clipped;
      fit.scores[static_cast<std::size_t>(i)] = s;
    }
  }
  if (fit.grad_norm > kNonconvergenceGrad)
    fail(ErrorCode::Nonconvergence, "propensity model gradient norm " + text::fmt_num(fit.grad_norm) + " after " +
                                        std::to_string(fit.iterations) + " iterations");
  return fit;
}

namespace {

double weighting(const std::vector<double>& t, const std::vector<double>& y, const std::vector<double>& e) {
  double s1 = 0, w1 = 0, s0 = 0, w0 = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] == 1.0) {
      s1 += y[i] / e[i];
      w1 += 1.0 / e[i];
    } else {
      s0 += y[i] / (1.0 - e[i]);
      w0 += 1.0 / (1.0 - e[i]);
    }
  }
  return s1 / w1 - s0 / w0;
}

double stratification(const std::vector<double>& t, const std::vector<double>& y, const std::vector<double>& e,
                      std::map<std::string, double>* diag) {
  const auto n = t.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return e[a] < e[b]; });
  double total = 0, weight = 0;
  int dropped = 0;
  for (int k = 0; k < kStrata; ++k) {
    auto lo = n * k / kStrata, hi = n * (k + 1) / kStrata;
    double s1 = 0, s0 = 0;
    std::size_t n1 = 0, n0 = 0;
    for (auto r = lo; r < hi; ++r) {
      auto i = order[r];
      if (t[i] == 1.0) {
        s1 += y[i];
        ++n1;
      } else {
        s0 += y[i];
        ++n0;
      }
    }
    if (n1 == 0 || n0 == 0) {
      if (hi > lo) ++dropped;
      continue;
    }
    double size = static_cast<double>(hi - lo);
    total += size * (s1 / n1 - s0 / n0);
    weight += size;
  }
  if (diag) (*diag)["strata_dropped"] = dropped;
  if (weight == 0) fail(ErrorCode::EmptyArm, "every propensity stratum lacks a treatment arm");
  return total / weight;
}

/// For each unit in `from`, the index of the unit in `pool` with the
/// closest score; equal distances go to the lowest index.
std::vector<std::size_t> nearest(const std::vector<std::size_t>& from, const std::vector<std::size_t>& pool,
                                 const std::vector<double>& e) {
  std::vector<std::size_t> sorted = pool;
  std::sort(sorted.begin(), sorted.end(), [&](auto a, auto b) { return e[a] != e[b] ? e[a] < e[b] : a < b; });
  std::vector<double> keys;
  keys.reserve(sorted.size());
  for (auto i : sorted) keys.push_back(e[i]);
  std::vector<std::size_t> out;
  out.reserve(from.size());
  for (auto u : from) {
    double s = e[u];
    auto pos = static_cast<std::size_t>(std::lower_bound(keys.begin(), keys.end(), s) - keys.begin());
    // The first element of a run of equal keys carries the lowest index.
    std::size_t pick = SIZE_MAX;
    double best = INFINITY;
    if (pos < keys.size()) {
      best = keys[pos] - s;
      pick = sorted[pos];
    }
    if (pos > 0) {
      double left = keys[pos - 1];
      auto run = static_cast<std::size_t>(std::lower_bound(keys.begin(), keys.end(), left) - keys.begin());
      double d = s - left;
      if (d < best || (d == best && sorted[run] < pick)) {
        best = d;
        pick = sorted[run];
      }
    }
    out.push_back(pick);
  }
  return out;
}

double matching(const std::vector<double>& t, const std::vector<double>& y, const std::vector<double>& e) {
  std::vector<std::size_t> treated, control;
  for (std::size_t i = 0; i < t.size(); ++i) (t[i] == 1.0 ? treated : control).push_back(i);
  auto m_for_treated = nearest(treated, control, e);
  auto m_for_control = nearest(control, treated, e);
  double sum = 0;
  for (std::size_t k = 0; k < treated.size(); ++k) sum += y[treated[k]] - y[m_for_treated[k]];
  for (std::size_t k = 0; k < control.size(); ++k) sum += y[m_for_control[k]] - y[control[k]];
  return sum / static_cast<double>(t.size());
}

void require_both_arms(const std::vector<double>& t) {
  std::size_t n1 = static_cast<std::size_t>(std::count(t.begin(), t.end(), 1.0));
  if (n1 == 0) fail(ErrorCode::EmptyArm, "no treated units");
  if (n1 == t.size()) fail(ErrorCode::EmptyArm, "no control units");
}

}  // namespace

double propensity_point(Estimation variant, const std::vector<double>& t, const std::vector<double>& y,
                        const std::vector<double>& scores, std::map<std::string, double>* diagnostics) {
  require_both_arms(t);
  switch (variant) {
    case Estimation::PropensityWeighting: return weighting(t, y, scores);
    case Estimation::PropensityStratification: return stratification(t, y, scores, diagnostics);
    case Estimation::PropensityMatching: return matching(t, y, scores);
    case Estimation::LinearRegression: break;
  }
  fail(ErrorCode::Precondition, "not a propensity method");
}

EffectEstimate estimate_propensity(const Dataset& data, const std::string& treatment, const std::string& outcome,
                                   const std::vector<std::string>& adjustment, Estimation variant,
                                   const EstimateOptions& options) {
  require(is_propensity(variant), "estimate_propensity: not a propensity method");
  const auto& t = data.column(treatment);
  require_binary(t, treatment);
  require_both_arms(t);
  std::vector<std::string> used{outcome};
  used.insert(used.end(), adjustment.begin(), adjustment.end());
  check_finite(data, used);

  auto fit = fit_propensity(data, treatment, adjustment);
  EffectEstimate est;
  est.method = std::string(to_string(variant));
  est.ci_level = options.ci_level;
  est.n_used = data.rows();
  est.ate = propensity_point(variant, t, data.column(outcome), fit.scores, &est.diagnostics);
  est.diagnostics["propensity_min"] = fit.raw_min;
  est.diagnostics["propensity_max"] = fit.raw_max;
  est.diagnostics["propensity_clipped"] = static_cast<double>(fit.clipped);
  est.diagnostics["propensity_iterations"] = fit.iterations;

  // Nonparametric bootstrap; resample indices come from one seeded stream
  // in a fixed order, so results do not depend on evaluation order.
  Rng rng(options.seed, "bootstrap");
  const auto n = data.rows();
  std::vector<double> draws;
  std::size_t skipped = 0;
  std::vector<std::size_t> idx(n);
  for (std::size_t b = 0; b < options.bootstrap; ++b) {
    for (auto& i : idx) i = rng.index(n);
    auto sample = data.subset(idx);
    try {
      auto f = fit_propensity(sample, treatment, adjustment, &fit.beta);
      draws.push_back(propensity_point(variant, sample.column(treatment), sample.column(outcome), f.scores));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::EmptyArm && e.code() != ErrorCode::Nonconvergence) throw;
      ++skipped;
    }
  }
  est.diagnostics["bootstrap_resamples"] = static_cast<double>(draws.size());
  est.diagnostics["bootstrap_skipped"] = static_cast<double>(skipped);
  if (draws.empty()) {
    est.ci_low = est.ci_high = est.ate;
  } else {
    double alpha = 1.0 - options.ci_level;
    est.ci_low = quantile(draws, alpha / 2.0);
    est.ci_high = quantile(draws, 1.0 - alpha / 2.0);
  }
  // Percentile intervals can exclude the point estimate on skewed resample
  // distributions; widen so ci_low <= ate <= ci_high always holds.
  est.ci_low = std::min(est.ci_low, est.ate);
  est.ci_high = std::max(est.ci_high, est.ate);
  return est;
}

EffectEstimate estimate(const Dataset& data, const CausalModelSpec& spec, const Estimand& estimand,
                        const EstimateOptions& options) {
  EffectEstimate e;
  if (spec.estimation == Estimation::LinearRegression) {
    e = estimate_linear(data, spec.treatment, spec.outcome, estimand.adjustment_set, options.ci_level);
  } else {
    e = estimate_propensity(data, spec.treatment, spec.outcome, estimand.adjustment_set, spec.estimation, options);
  }
  if (!estimand.directed_path) e.diagnostics["no_directed_path"] = 1.0;
  return e;
}

RefutationResult refute(const CausalModelSpec& spec, const Estimand& estimand, const Dataset& data,
                        const EffectEstimate& original, Refutation technique, const EstimateOptions& options) {
  RefutationResult r;
  r.technique = technique;
  Dataset d = data;
  Estimand est = estimand;
  EstimateOptions opts = options;
  switch (technique) {
    case Refutation::PlaceboTreatment: {
      auto t = d.column(spec.treatment);
      Rng rng(options.seed, "placebo");
      std::shuffle(t.begin(), t.end(), rng.engine());
      d.add(spec.treatment, std::move(t));
      break;
    }
    case Refutation::RandomCommonCause: {
      Rng rng(options.seed, "random_common_cause");
      std::vector<double> w(d.rows());
      for (auto& v : w) v = rng.normal();
      std::string name = "__random_common_cause";
      d.add(name, std::move(w));
      est.adjustment_set.push_back(name);
      break;
    }
    case Refutation::DataSubset: {
      Rng rng(options.seed, "data_subset");
      std::vector<std::size_t> idx(d.rows());
      std::iota(idx.begin(), idx.end(), 0);
      std::shuffle(idx.begin(), idx.end(), rng.engine());
      idx.resize(static_cast<std::size_t>(std::floor(kSubsetFraction * static_cast<double>(d.rows()))));
      std::sort(idx.begin(), idx.end());
      d = d.subset(idx);
      break;
    }
  }
  opts.seed = substream_seed(options.seed, to_string(technique));
  auto re = estimate(d, spec, est, opts);
  r.refuted_estimate = re.ate;
  r.refuted_ci_low = re.ci_low;
  r.refuted_ci_high = re.ci_high;
  auto ci = "[" + text::fmt_num(re.ci_low, 4) + ", " + text::fmt_num(re.ci_high, 4) + "]";
  switch (technique) {
    case Refutation::PlaceboTreatment:
      r.passed = re.covers(0.0);
      r.detail = "placebo estimate " + text::fmt_num(re.ate, 4) + " CI " + ci + (r.passed ? " covers 0" : " excludes 0");
      break;
    case Refutation::RandomCommonCause: {
      double band = kCommonCauseTolerance * std::max(std::abs(original.ate), original.half_width());
      double shift = std::abs(re.ate - original.ate);
      r.passed = shift <= band;
      r.detail = "estimate moved by " + text::fmt_num(shift, 4) + " (tolerance " + text::fmt_num(band, 4) + ")";
      break;
    }
    case Refutation::DataSubset:
      r.passed = re.ci_low <= original.ci_high && original.ci_low <= re.ci_high;
      r.detail = "subset CI " + ci + (r.passed ? " overlaps" : " does not overlap") + " the original CI";
      break;
  }
  return r;
}

}  // namespace orca::causal
