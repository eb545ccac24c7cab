#pragma once

#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace orca::causal {

struct CausalGraph {
  std::vector<std::string> nodes;
  std::vector<std::pair<std::string, std::string>> edges;  // cause -> effect
  /// Unobserved nodes, e.g. the confounder behind `A <-> B`. Never adjusted for.
  std::set<std::string> latent;

  bool has_node(const std::string& n) const;
  std::vector<std::string> parents(const std::string& n) const;
  std::vector<std::string> children(const std::string& n) const;
  std::set<std::string> descendants(const std::string& n) const;  // excludes n
  std::set<std::string> ancestors(const std::set<std::string>& of) const;  // includes `of`
  bool has_directed_path(const std::string& from, const std::string& to) const;
  void add_node(const std::string& n);
  void add_edge(const std::string& from, const std::string& to);

  bool operator==(const CausalGraph&) const = default;
};

/// Edge-list text: one `A -> B` per line, `A <-> B` for a latent common
/// cause, a bare name declares an isolated node, `#` starts a comment.
/// Several edges may share a line when separated by ';' or ','.
CausalGraph parse_graph(const std::string& text);
std::string format_graph(const CausalGraph& g);

/// Throws CyclicGraph, DuplicateNode or DanglingEdge.
void validate_graph(const CausalGraph& g);

/// True when X and Y are d-separated given Z.
bool d_separated(const CausalGraph& g, const std::string& x, const std::string& y, const std::set<std::string>& z);

/// `g` with every edge out of `node` removed.
CausalGraph without_outgoing(const CausalGraph& g, const std::string& node);

struct Estimand {
  std::string kind = "backdoor";
  std::vector<std::string> adjustment_set;  // sorted
  std::string expression_text;
  /// False when no directed path leads from treatment to outcome; the effect
  /// is then zero by construction and the estimate is flagged.
  bool directed_path = true;

  bool operator==(const Estimand&) const = default;
};

nlohmann::json to_json(const Estimand& e);

bool satisfies_backdoor(const CausalGraph& g, const std::string& treatment, const std::string& outcome,
                        const std::set<std::string>& z);

/// Minimum-cardinality backdoor set, ties broken lexicographically.
/// Throws NotIdentifiable naming an open backdoor path.
Estimand identify_backdoor(const CausalGraph& g, const std::string& treatment, const std::string& outcome);

}  // namespace orca::causal
