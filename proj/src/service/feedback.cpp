#include "orca/service/feedback.h"

#include <regex>

#include "orca/common/text.h"

namespace orca::service {

using causal::Estimation;
using causal::Refutation;

namespace {

std::optional<Estimation> method_named(std::string m) {
  m = std::regex_replace(m, std::regex(R"(^propensity(\s+score)?\s+)"), "");
  if (m == "linear regression" || m == "ols" || m == "regression" || m == "linear_regression")
    return Estimation::LinearRegression;
  if (m == "weighting" || m == "inverse propensity weighting" || m == "ipw" || m == "propensity_weighting")
    return Estimation::PropensityWeighting;
  if (m == "stratification" || m == "propensity_stratification") return Estimation::PropensityStratification;
  if (m == "matching" || m == "propensity_matching") return Estimation::PropensityMatching;
  return std::nullopt;
}

std::optional<Refutation> technique_named(const std::string& t) {
  if (t.rfind("placebo", 0) == 0) return Refutation::PlaceboTreatment;
  if (t == "random common cause" || t == "random_common_cause") return Refutation::RandomCommonCause;
  if (t == "data subset" || t == "data_subset" || t == "subset") return Refutation::DataSubset;
  return std::nullopt;
}

const std::string kMethods =
    R"((linear regression|linear_regression|ols|regression|inverse propensity weighting|ipw|)"
    R"((?:propensity(?:\s+score)?\s+)?(?:weighting|stratification|matching)|)"
    R"(propensity_weighting|propensity_stratification|propensity_matching))";
const std::string kTechniques =
    R"((placebo(?:[ _]treatment)?|random[ _]common[ _]cause|data[ _]subset|subset))";

const std::regex kNoRefutation(R"(\b(no|skip(\s+the)?|without(\s+a)?)\s+refutation\b)");
const std::regex kRefuteWith(R"(\brefute\s+(?:it\s+)?(?:with|using)\s+(?:a\s+|the\s+)?)" + kTechniques + R"(\b)");
const std::regex kUseTechnique(R"(\b(?:use|run|try)\s+(?:a\s+|the\s+)?)" + kTechniques +
                               R"((?:\s+(?:refutation|refuter|test|check))?\b)");
const std::regex kUseMethod(R"(\b(?:use|switch\s+to|try)\s+(?:a\s+|the\s+)?)" + kMethods + R"(\b)");
const std::regex kBind(R"(\b(?:bind|map)\s+([A-Za-z_]\w*)\s+to\s+([A-Za-z_]\w*\.[A-Za-z_]\w*)\b)");
const std::regex kAssign(R"(^\s*([A-Za-z_]\w*)\s*=\s*([A-Za-z_]\w*\.[A-Za-z_]\w*)\s*$)");

std::vector<std::string> clauses(const std::string& text) {
  static const std::regex sep(R"([,;\n]|\s+and\s+|\.(?=\s|$))");
  std::vector<std::string> out;
  std::sregex_token_iterator it(text.begin(), text.end(), sep, -1), end;
  for (; it != end; ++it) {
    auto c = text::trim(it->str());
    if (!c.empty()) out.push_back(c);
  }
  return out;
}

}  // namespace

FeedbackDirectives parse_feedback(const std::string& text) {
  FeedbackDirectives d;
  std::vector<std::string> rest;
  for (const auto& clause : clauses(text)) {
    // Variable and column names keep their case; keywords do not.
    std::smatch m;
    if (std::regex_search(clause, m, kBind) || std::regex_match(clause, m, kAssign)) {
      d.rebindings[m[1].str()] = m[2].str();
      continue;
    }
    auto lower = text::to_lower(clause);
    if (std::regex_search(lower, m, kNoRefutation)) {
      d.refutation = std::optional<Refutation>{};
      continue;
    }
    if (std::regex_search(lower, m, kRefuteWith) || std::regex_search(lower, m, kUseTechnique)) {
      d.refutation = technique_named(m[1].str());
      continue;
    }
    if (std::regex_search(lower, m, kUseMethod)) {
      if (auto e = method_named(m[1].str())) {
        d.estimation = *e;
        continue;
      }
    }
    rest.push_back(clause);
  }
  d.remainder = text::join(rest, "; ");
  return d;
}

nlohmann::json to_json(const FeedbackDirectives& d) {
  nlohmann::json j = nlohmann::json::object();
  if (d.estimation) j["estimation"] = std::string(causal::to_string(*d.estimation));
  if (d.refutation) j["refutation"] = *d.refutation ? nlohmann::json(std::string(causal::to_string(**d.refutation))) : nlohmann::json();
  if (!d.rebindings.empty()) j["rebindings"] = d.rebindings;
  if (!d.remainder.empty()) j["remainder"] = d.remainder;
  return j;
}

}  // namespace orca::service
