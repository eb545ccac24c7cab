#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "orca/causal/estimate.h"

namespace orca::service {

/// Expert overrides read from free-text feedback before any model sees it.
///
/// The text is split into clauses at commas, semicolons, line breaks, " and "
/// and sentence ends. Recognised clauses (case-insensitive):
///
///     use|switch to|try <method> [instead]
///         method: linear regression | ols | regression | propensity weighting
///                 | ipw | stratification | matching (optionally "propensity
///                 [score]" prefixed), or the snake_case method names
///     refute with <technique> | use|run|try <technique> [refutation|test|check]
///         technique: placebo [treatment] | random common cause | data subset
///     no refutation | skip [the] refutation | without refutation
///     bind|map <variable> to <table.column>
///     <variable> = <table.column>
///
/// Everything else is kept, in order, as `remainder`.
struct FeedbackDirectives {
  std::optional<causal::Estimation> estimation;
  /// Set when the refutation was addressed; an inner nullopt means "none".
  std::optional<std::optional<causal::Refutation>> refutation;
  std::map<std::string, std::string> rebindings;
  std::string remainder;

  bool has_overrides() const { return estimation || refutation || !rebindings.empty(); }
};

FeedbackDirectives parse_feedback(const std::string& text);

nlohmann::json to_json(const FeedbackDirectives& d);

}  // namespace orca::service
