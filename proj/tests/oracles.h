#pragma once

// Independent reference implementations shared by the unit and acceptance
// tests. Nothing here calls the code under test.

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "orca/causal/estimate.h"
#include "orca/causal/graph.h"
#include "orca/common/rng.h"

namespace orca::testing {

// ----- identification oracle: explicit path enumeration -----

inline bool has_edge(const causal::CausalGraph& g, const std::string& a, const std::string& b) {
  return std::find(g.edges.begin(), g.edges.end(), std::make_pair(a, b)) != g.edges.end();
}

inline std::vector<std::vector<std::string>> backdoor_paths(const causal::CausalGraph& g, const std::string& t, const std::string& y) {
  std::vector<std::vector<std::string>> out;
  std::vector<std::string> path{t};
  std::function<void()> walk = [&] {
    const auto cur = path.back();
    if (cur == y) {
      out.push_back(path);
      return;
    }
    for (const auto& n : g.nodes) {
      if (std::find(path.begin(), path.end(), n) != path.end()) continue;
      bool into_cur = has_edge(g, n, cur), out_of_cur = has_edge(g, cur, n);
      if (!into_cur && !out_of_cur) continue;
      if (path.size() == 1 && !into_cur) continue;  // must start with an arrow into t
      path.push_back(n);
      walk();
      path.pop_back();
    }
  };
  walk();
  return out;
}

inline std::set<std::string> descendants_of(const causal::CausalGraph& g, const std::string& n) {
  std::set<std::string> out;
  bool grew = true;
  while (grew) {
    grew = false;
    for (const auto& [a, b] : g.edges)
      if ((a == n || out.count(a)) && !out.count(b)) {
        out.insert(b);
        grew = true;
      }
  }
  return out;
}

inline bool blocked(const causal::CausalGraph& g, const std::vector<std::string>& p, const std::set<std::string>& z) {
  for (std::size_t i = 1; i + 1 < p.size(); ++i) {
    bool collider = has_edge(g, p[i - 1], p[i]) && has_edge(g, p[i + 1], p[i]);
    if (collider) {
      bool opened = z.count(p[i]) > 0;
      for (const auto& d : descendants_of(g, p[i])) opened = opened || z.count(d);
      if (!opened) return true;
    } else if (z.count(p[i])) {
      return true;
    }
  }
  return false;
}

inline std::optional<std::vector<std::string>> oracle_backdoor(const causal::CausalGraph& g, const std::string& t, const std::string& y) {
  auto desc = descendants_of(g, t);
  std::vector<std::string> cand;
  for (const auto& n : g.nodes)
    if (n != t && n != y && !desc.count(n) && !g.latent.count(n)) cand.push_back(n);
  std::sort(cand.begin(), cand.end());
  auto paths = backdoor_paths(g, t, y);
  std::optional<std::vector<std::string>> best;
  for (unsigned mask = 0; mask < (1u << cand.size()); ++mask) {
    std::vector<std::string> z;
    for (std::size_t i = 0; i < cand.size(); ++i)
      if (mask & (1u << i)) z.push_back(cand[i]);
    std::set<std::string> zs(z.begin(), z.end());
    if (!std::all_of(paths.begin(), paths.end(), [&](const auto& p) { return blocked(g, p, zs); })) continue;
    if (!best || z.size() < best->size() || (z.size() == best->size() && z < *best)) best = z;
  }
  return best;
}

inline causal::CausalGraph random_dag(Rng& rng) {
  causal::CausalGraph g;
  int n = static_cast<int>(rng.uniform_int(3, 8));
  std::vector<std::string> names;
  for (int i = 0; i < n; ++i) names.push_back(std::string(1, static_cast<char>('A' + rng.uniform_int(0, 25))) + std::to_string(i));
  for (const auto& nm : names) g.add_node(nm);
  double p = rng.uniform(0.2, 0.5);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (rng.bernoulli(p)) g.edges.emplace_back(names[i], names[j]);
  if (n >= 4 && rng.bernoulli(0.3)) {
    auto a = rng.index(n), b = rng.index(n);
    if (a != b) {
      g.add_node("U");
      g.latent.insert("U");
      g.edges.emplace_back("U", names[a]);
      g.edges.emplace_back("U", names[b]);
    }
  }
  return g;
}

// ----- OLS oracle: normal equations by Gaussian elimination -----

inline std::vector<double> normal_equations(const std::vector<std::vector<double>>& cols, const std::vector<double>& y) {
  const std::size_t p = cols.size() + 1, n = y.size();
  auto xval = [&](std::size_t i, std::size_t c) { return c == 0 ? 1.0 : cols[c - 1][i]; };
  std::vector<std::vector<double>> a(p, std::vector<double>(p + 1, 0.0));
  for (std::size_t r = 0; r < p; ++r) {
    for (std::size_t c = 0; c < p; ++c)
      for (std::size_t i = 0; i < n; ++i) a[r][c] += xval(i, r) * xval(i, c);
    for (std::size_t i = 0; i < n; ++i) a[r][p] += xval(i, r) * y[i];
  }
  for (std::size_t c = 0; c < p; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < p; ++r)
      if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
    std::swap(a[c], a[piv]);
    for (std::size_t r = 0; r < p; ++r) {
      if (r == c) continue;
      double f = a[r][c] / a[c][c];
      for (std::size_t k = c; k <= p; ++k) a[r][k] -= f * a[c][k];
    }
  }
  std::vector<double> beta(p);
  for (std::size_t r = 0; r < p; ++r) beta[r] = a[r][p] / a[r][r];
  return beta;
}

inline double sig(double z) { return 1.0 / (1.0 + std::exp(-z)); }

/// Z ~ N(0,1); T ~ Bernoulli(sigmoid(0.5 Z)); Y = 2 T + Z + N(0,1).
/// Returns the dataset and the sample ATE by replaying each unit's noise
/// with T forced to 1 and to 0.
inline std::pair<causal::Dataset, double> confounded(std::uint64_t seed, std::size_t n) {
  Rng rng(seed);
  std::vector<double> z(n), t(n), y(n);
  double replay = 0;
  for (std::size_t i = 0; i < n; ++i) {
    z[i] = rng.normal();
    t[i] = rng.bernoulli(sig(0.5 * z[i])) ? 1.0 : 0.0;
    double eps = rng.normal();
    auto f = [&](double tt) { return 2.0 * tt + z[i] + eps; };
    y[i] = f(t[i]);
    replay += f(1.0) - f(0.0);
  }
  causal::Dataset d;
  d.add("Z", z);
  d.add("T", t);
  d.add("Y", y);
  return {d, replay / static_cast<double>(n)};
}

}  // namespace orca::testing
