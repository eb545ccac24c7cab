#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "orca/causal/graph.h"

namespace orca::causal {

enum class Estimation { LinearRegression, PropensityMatching, PropensityStratification, PropensityWeighting };
enum class Refutation { PlaceboTreatment, RandomCommonCause, DataSubset };

std::string_view to_string(Estimation e);
std::string_view to_string(Refutation r);
std::optional<Estimation> parse_estimation(std::string_view s);
std::optional<Refutation> parse_refutation(std::string_view s);
bool is_propensity(Estimation e);

struct CausalModelSpec {
  CausalGraph graph;
  std::string treatment;
  std::string outcome;
  std::string task = "effect_estimation";
  std::string identification = "backdoor";
  Estimation estimation = Estimation::LinearRegression;
  std::optional<Refutation> refutation;
  std::uint64_t seed = 0;
};

nlohmann::json to_json(const CausalModelSpec& s);

/// Numeric columns of equal length, keyed by variable name.
struct Dataset {
  std::map<std::string, std::vector<double>> columns;

  std::size_t rows() const;
  const std::vector<double>& column(const std::string& name) const;
  void add(const std::string& name, std::vector<double> values);
  Dataset subset(const std::vector<std::size_t>& rows) const;
};

struct EffectEstimate {
  double ate = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double ci_level = 0.95;
  std::size_t n_used = 0;
  std::string method;
  std::map<std::string, double> diagnostics;

  bool covers(double v) const { return ci_low <= v && v <= ci_high; }
  double half_width() const { return (ci_high - ci_low) / 2.0; }
};

nlohmann::json to_json(const EffectEstimate& e);

struct EstimateOptions {
  double ci_level = 0.95;
  std::size_t bootstrap = 500;
  std::uint64_t seed = 0;
};

/// OLS of outcome on [1, treatment, covariates...].
EffectEstimate estimate_linear(const Dataset& data, const std::string& treatment, const std::string& outcome,
                               const std::vector<std::string>& adjustment, double ci_level = 0.95);

/// Raw OLS coefficients for [1, treatment, covariates...]; used by
/// estimate_linear and exposed for checking against other solvers.
Eigen::VectorXd ols_coefficients(const Dataset& data, const std::string& treatment, const std::string& outcome,
                                 const std::vector<std::string>& adjustment);

struct PropensityFit {
  std::vector<double> scores;  // clipped
  Eigen::VectorXd beta;
  double raw_min = 0.0;
  double raw_max = 0.0;
  int iterations = 0;
  double grad_norm = 0.0;
  std::size_t clipped = 0;
};

inline constexpr double kClipLow = 0.01;
inline constexpr double kClipHigh = 0.99;
inline constexpr int kMaxIrlsIterations = 200;
inline constexpr double kGradTolerance = 1e-6;
inline constexpr double kNonconvergenceGrad = 1e-3;
inline constexpr int kStrata = 5;

/// Logistic regression of treatment on [1, covariates...] by Newton/IRLS
/// with step halving. Gradient norm is the Euclidean norm of the mean score.
PropensityFit fit_propensity(const Dataset& data, const std::string& treatment, const std::vector<std::string>& adjustment,
                             const Eigen::VectorXd* warm_start = nullptr);

/// Point estimate only, from given scores.
double propensity_point(Estimation variant, const std::vector<double>& t, const std::vector<double>& y,
                        const std::vector<double>& scores, std::map<std::string, double>* diagnostics = nullptr);

EffectEstimate estimate_propensity(const Dataset& data, const std::string& treatment, const std::string& outcome,
                                   const std::vector<std::string>& adjustment, Estimation variant,
                                   const EstimateOptions& options = {});

EffectEstimate estimate(const Dataset& data, const CausalModelSpec& spec, const Estimand& estimand,
                        const EstimateOptions& options = {});

struct RefutationResult {
  Refutation technique;
  double refuted_estimate = 0.0;
  double refuted_ci_low = 0.0;
  double refuted_ci_high = 0.0;
  bool passed = false;
  std::string detail;
};

nlohmann::json to_json(const RefutationResult& r);

inline constexpr double kSubsetFraction = 0.8;
inline constexpr double kCommonCauseTolerance = 0.25;

RefutationResult refute(const CausalModelSpec& spec, const Estimand& estimand, const Dataset& data,
                        const EffectEstimate& original, Refutation technique, const EstimateOptions& options = {});

/// Linear-interpolated sample quantile (type 7).
double quantile(std::vector<double> values, double q);

double normal_critical(double ci_level);

}  // namespace orca::causal
