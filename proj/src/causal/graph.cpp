#include "orca/causal/graph.h"

#include <algorithm>
#include <deque>
#include <functional>
#include <map>
#include <sstream>

#include "orca/common/error.h"
#include "orca/common/text.h"

namespace orca::causal {

bool CausalGraph::has_node(const std::string& n) const { return std::find(nodes.begin(), nodes.end(), n) != nodes.end(); }

std::vector<std::string> CausalGraph::parents(const std::string& n) const {
  std::vector<std::string> out;
  for (const auto& [a, b] : edges)
    if (b == n) out.push_back(a);
  return out;
}

std::vector<std::string> CausalGraph::children(const std::string& n) const {
  std::vector<std::string> out;
  for (const auto& [a, b] : edges)
    if (a == n) out.push_back(b);
  return out;
}

std::set<std::string> CausalGraph::descendants(const std::string& n) const {
  std::set<std::string> seen;
  std::vector<std::string> stack = children(n);
  while (!stack.empty()) {
    auto cur = stack.back();
    stack.pop_back();
    if (!seen.insert(cur).second) continue;
    for (auto& c : children(cur)) stack.push_back(c);
  }
  seen.erase(n);
  return seen;
}

std::set<std::string> CausalGraph::ancestors(const std::set<std::string>& of) const {
  std::set<std::string> seen;
  std::vector<std::string> stack(of.begin(), of.end());
  while (!stack.empty()) {
    auto cur = stack.back();
    stack.pop_back();
    if (!seen.insert(cur).second) continue;
    for (auto& p : parents(cur)) stack.push_back(p);
  }
  return seen;
}

bool CausalGraph::has_directed_path(const std::string& from, const std::string& to) const {
  return descendants(from).count(to) > 0;
}

void CausalGraph::add_node(const std::string& n) {
  if (!has_node(n)) nodes.push_back(n);
}

void CausalGraph::add_edge(const std::string& from, const std::string& to) {
  add_node(from);
  add_node(to);
  edges.emplace_back(from, to);
}

namespace {

bool valid_name(const std::string& s) {
  if (s.empty()) return false;
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isalnum(c) || c == '_' || c == '.'; });
}

}  // namespace

CausalGraph parse_graph(const std::string& input) {
  CausalGraph g;
  int line_no = 0;
  for (auto line : text::split(input, '\n')) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line = line.substr(0, hash);
    std::replace(line.begin(), line.end(), ',', ';');
    for (auto part : text::split(line, ';')) {
      part = text::trim(part);
      if (part.empty()) continue;
      auto where = " on line " + std::to_string(line_no) + ": " + part;
      if (auto bi = part.find("<->"); bi != std::string::npos) {
        auto a = text::trim(part.substr(0, bi)), b = text::trim(part.substr(bi + 3));
        if (!valid_name(a) || !valid_name(b)) fail(ErrorCode::GraphParse, "bad bidirected edge" + where);
        auto u = "U_" + std::min(a, b) + "_" + std::max(a, b);
        g.add_node(u);
        g.latent.insert(u);
        g.add_edge(u, a);
        g.add_edge(u, b);
      } else if (auto arrow = part.find("->"); arrow != std::string::npos) {
        // Chains such as A -> B -> C are accepted.
        std::vector<std::string> names;
        std::size_t pos = 0;
        while (true) {
          auto next = part.find("->", pos);
          names.push_back(text::trim(part.substr(pos, next == std::string::npos ? std::string::npos : next - pos)));
          if (next == std::string::npos) break;
          pos = next + 2;
        }
        for (const auto& n : names)
          if (!valid_name(n)) fail(ErrorCode::GraphParse, "bad edge" + where);
        for (std::size_t i = 0; i + 1 < names.size(); ++i) g.add_edge(names[i], names[i + 1]);
      } else if (valid_name(part)) {
        g.add_node(part);
      } else {
        fail(ErrorCode::GraphParse, "unrecognised graph line" + where);
      }
    }
  }
  if (g.nodes.empty()) fail(ErrorCode::GraphParse, "graph has no nodes");
  return g;
}

std::string format_graph(const CausalGraph& g) {
  std::ostringstream os;
  std::set<std::string> touched;
  for (const auto& [a, b] : g.edges) {
    touched.insert(a);
    touched.insert(b);
  }
  for (const auto& n : g.nodes)
    if (!touched.count(n)) os << n << "\n";
  for (const auto& [a, b] : g.edges) os << a << " -> " << b << "\n";
  if (!g.latent.empty()) {
    os << "# latent:";
    for (const auto& l : g.latent) os << " " << l;
    os << "\n";
  }
  return os.str();
}

void validate_graph(const CausalGraph& g) {
  std::set<std::string> seen;
  for (const auto& n : g.nodes)
    if (!seen.insert(n).second) fail(ErrorCode::DuplicateNode, "node listed twice: " + n);
  for (const auto& [a, b] : g.edges)
    if (!seen.count(a) || !seen.count(b)) fail(ErrorCode::DanglingEdge, "edge " + a + " -> " + b + " has an unknown endpoint");
  for (const auto& l : g.latent)
    if (!seen.count(l)) fail(ErrorCode::DanglingEdge, "latent marker for unknown node " + l);

  // Kahn's algorithm; leftover nodes lie on a cycle.
  std::map<std::string, int> indeg;
  for (const auto& n : g.nodes) indeg[n] = 0;
  for (const auto& e : g.edges) ++indeg[e.second];
  std::deque<std::string> ready;
  for (const auto& [n, d] : indeg)
    if (d == 0) ready.push_back(n);
  std::size_t visited = 0;
  while (!ready.empty()) {
    auto n = ready.front();
    ready.pop_front();
    ++visited;
    for (const auto& c : g.children(n))
      if (--indeg[c] == 0) ready.push_back(c);
  }
  if (visited != g.nodes.size()) {
    std::vector<std::string> cyc;
    for (const auto& [n, d] : indeg)
      if (d > 0) cyc.push_back(n);
    fail(ErrorCode::CyclicGraph, "cycle among: " + text::join(cyc, ", "));
  }
}

CausalGraph without_outgoing(const CausalGraph& g, const std::string& node) {
  CausalGraph out = g;
  out.edges.clear();
  for (const auto& e : g.edges)
    if (e.first != node) out.edges.push_back(e);
  return out;
}

bool d_separated(const CausalGraph& g, const std::string& x, const std::string& y, const std::set<std::string>& z) {
  if (z.count(x) || z.count(y)) return true;
  auto anc_z = g.ancestors(z);
  // Reachability over (node, arrived-from-child?) states.
  std::set<std::pair<std::string, bool>> visited;
  std::vector<std::pair<std::string, bool>> stack{{x, true}};
  while (!stack.empty()) {
    auto [n, up] = stack.back();
    stack.pop_back();
    if (!visited.insert({n, up}).second) continue;
    if (n == y) return false;
    bool observed = z.count(n) > 0;
    if (up && !observed) {
      for (const auto& p : g.parents(n)) stack.push_back({p, true});
      for (const auto& c : g.children(n)) stack.push_back({c, false});
    } else if (!up) {
      if (!observed)
        for (const auto& c : g.children(n)) stack.push_back({c, false});
      if (anc_z.count(n))
        for (const auto& p : g.parents(n)) stack.push_back({p, true});
    }
  }
  return true;
}

nlohmann::json to_json(const Estimand& e) {
  return {{"kind", e.kind},
          {"adjustment_set", e.adjustment_set},
          {"expression_text", e.expression_text},
          {"directed_path", e.directed_path}};
}

bool satisfies_backdoor(const CausalGraph& g, const std::string& t, const std::string& y, const std::set<std::string>& z) {
  if (z.count(t) || z.count(y)) return false;
  auto desc = g.descendants(t);
  for (const auto& v : z)
    if (desc.count(v) || g.latent.count(v)) return false;
  return d_separated(without_outgoing(g, t), t, y, z);
}

namespace {

/// An open backdoor path given z, for error messages. Exhaustive over simple
/// paths, so only suitable for the small graphs users write by hand.
std::optional<std::vector<std::string>> open_backdoor_path(const CausalGraph& g, const std::string& t,
                                                           const std::string& y, const std::set<std::string>& z) {
  auto anc_z = g.ancestors(z);
  auto has_edge = [&](const std::string& a, const std::string& b) {
    return std::find(g.edges.begin(), g.edges.end(), std::make_pair(a, b)) != g.edges.end();
  };
  std::vector<std::string> path{t};
  std::set<std::string> on_path{t};
  std::optional<std::vector<std::string>> found;
  std::size_t budget = 100000;
  std::function<void()> dfs = [&] {
    if (found || budget-- == 0) return;
    const auto& cur = path.back();
    if (cur == y) {
      found = path;
      return;
    }
    std::vector<std::string> nbrs = g.parents(cur);
    if (path.size() > 1) {
      auto c = g.children(cur);
      nbrs.insert(nbrs.end(), c.begin(), c.end());
    }
    for (const auto& n : nbrs) {
      if (on_path.count(n)) continue;
      if (path.size() >= 2) {
        const auto& prev = path[path.size() - 2];
        bool collider = has_edge(prev, cur) && has_edge(n, cur);
        if (collider ? !anc_z.count(cur) : z.count(cur) > 0) continue;
      }
      path.push_back(n);
      on_path.insert(n);
      dfs();
      on_path.erase(n);
      path.pop_back();
    }
  };
  dfs();
  return found;
}

std::string describe_path(const CausalGraph& g, const std::vector<std::string>& p) {
  std::string s = p[0];
  for (std::size_t i = 1; i < p.size(); ++i) {
    bool fwd = std::find(g.edges.begin(), g.edges.end(), std::make_pair(p[i - 1], p[i])) != g.edges.end();
    s += (fwd ? " -> " : " <- ") + p[i];
  }
  return s;
}

}  // namespace

Estimand identify_backdoor(const CausalGraph& g, const std::string& t, const std::string& y) {
  validate_graph(g);
  if (!g.has_node(t)) fail(ErrorCode::UnknownVariable, "treatment not in graph: " + t);
  if (!g.has_node(y)) fail(ErrorCode::UnknownVariable, "outcome not in graph: " + y);
  require(t != y, "treatment and outcome must differ");

  // Minimal separators lie inside An({t, y}), so the search can stay there.
  auto desc = g.descendants(t);
  auto anc = g.ancestors({t, y});
  std::vector<std::string> candidates;
  for (const auto& n : anc)
    if (n != t && n != y && !desc.count(n) && !g.latent.count(n)) candidates.push_back(n);
  std::sort(candidates.begin(), candidates.end());

  Estimand est;
  est.directed_path = g.has_directed_path(t, y);
  auto gm = without_outgoing(g, t);
  const std::size_t n = candidates.size();
  for (std::size_t k = 0; k <= n; ++k) {
    std::vector<std::size_t> idx(k);
    for (std::size_t i = 0; i < k; ++i) idx[i] = i;
    while (true) {
      std::set<std::string> z;
      for (auto i : idx) z.insert(candidates[i]);
      if (d_separated(gm, t, y, z)) {
        est.adjustment_set.assign(z.begin(), z.end());
        std::string cond = est.adjustment_set.empty() ? "" : " | " + text::join(est.adjustment_set, ", ");
        est.expression_text = "d/d" + t + " E[" + y + cond + "]";
        if (!est.adjustment_set.empty())
          est.expression_text += ", averaged over P(" + text::join(est.adjustment_set, ", ") + ")";
        return est;
      }
      // Next combination in lexicographic order.
      std::size_t i = k;
      while (i > 0 && idx[i - 1] == n - k + i - 1) --i;
      if (i == 0) break;
      ++idx[i - 1];
      for (std::size_t j = i; j < k; ++j) idx[j] = idx[j - 1] + 1;
    }
  }
  std::set<std::string> all(candidates.begin(), candidates.end());
  auto path = open_backdoor_path(gm, t, y, all);
  fail(ErrorCode::NotIdentifiable,
       "no observed adjustment set blocks every backdoor path" +
           (path ? "; open path: " + describe_path(g, *path) : std::string()));
}

}  // namespace orca::causal
