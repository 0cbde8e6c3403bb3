#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "environment.hpp"
#include "glm.hpp"
#include "policy_table.hpp"

namespace confound {

/// Small named DAG for identification queries.
class Dag {
 public:
  Dag() = default;
  Dag(std::initializer_list<std::pair<std::string, std::string>> edges) {
    for (const auto& [from, to] : edges) add_edge(from, to);
    validate();
  }

  std::size_t add_node(const std::string& name) {
    if (name.empty()) throw std::invalid_argument("Dag: empty node name");
    auto [it, inserted] = index_.try_emplace(name, names_.size());
    if (inserted) {
      names_.push_back(name);
      parents_.emplace_back();
      children_.emplace_back();
    }
    return it->second;
  }

  void add_edge(const std::string& from, const std::string& to) {
    const std::size_t u = add_node(from);
    const std::size_t v = add_node(to);
    if (u == v) throw std::invalid_argument("Dag: self-loop on '" + from + "'");
    if (std::find(children_[u].begin(), children_[u].end(), v) != children_[u].end()) return;
    children_[u].push_back(v);
    parents_[v].push_back(u);
  }

  /// Throws if the graph has a directed cycle.
  void validate() const {
    std::vector<std::size_t> indegree(size());
    for (std::size_t v = 0; v < size(); ++v) indegree[v] = parents_[v].size();
    std::deque<std::size_t> ready;
    for (std::size_t v = 0; v < size(); ++v)
      if (indegree[v] == 0) ready.push_back(v);
    std::size_t seen = 0;
    while (!ready.empty()) {
      const std::size_t u = ready.front();
      ready.pop_front();
      ++seen;
      for (std::size_t w : children_[u])
        if (--indegree[w] == 0) ready.push_back(w);
    }
    if (seen != size()) throw std::invalid_argument("Dag: graph contains a directed cycle");
  }

  /// Parses one "from -> to" edge per line; '#' starts a comment. Lines may
  /// also be separated by ';'. A line holding a single name declares a node.
  static Dag parse(std::string_view text) {
    Dag g;
    std::string line;
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      if (b == std::string::npos) return std::string();
      const auto e = s.find_last_not_of(" \t\r");
      return s.substr(b, e - b + 1);
    };
    int line_no = 0;
    auto handle = [&](std::string raw) {
      ++line_no;
      if (auto hash = raw.find('#'); hash != std::string::npos) raw.resize(hash);
      raw = trim(raw);
      if (raw.empty()) return;
      const auto arrow = raw.find("->");
      if (arrow == std::string::npos) {
        if (raw.find_first_of(" \t") != std::string::npos)
          throw std::invalid_argument("Dag::parse: line " + std::to_string(line_no) + ": expected 'from -> to'");
        g.add_node(raw);
        return;
      }
      const std::string from = trim(raw.substr(0, arrow));
      const std::string to = trim(raw.substr(arrow + 2));
      if (from.empty() || to.empty() || to.find("->") != std::string::npos ||
          from.find_first_of(" \t") != std::string::npos || to.find_first_of(" \t") != std::string::npos)
        throw std::invalid_argument("Dag::parse: line " + std::to_string(line_no) + ": expected 'from -> to'");
      g.add_edge(from, to);
    };
    for (char ch : text) {
      if (ch == '\n' || ch == ';') {
        handle(line);
        line.clear();
      } else {
        line.push_back(ch);
      }
    }
    handle(line);
    g.validate();
    return g;
  }

  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }
  const std::string& name(std::size_t v) const { return names_[v]; }
  const std::vector<std::size_t>& parents(std::size_t v) const { return parents_[v]; }
  const std::vector<std::size_t>& children(std::size_t v) const { return children_[v]; }
  bool has_edge(std::size_t u, std::size_t v) const {
    return std::find(children_[u].begin(), children_[u].end(), v) != children_[u].end();
  }

  std::size_t id(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::invalid_argument("Dag: unknown node '" + name + "'");
    return it->second;
  }

  std::vector<bool> ids(const std::vector<std::string>& names) const {
    std::vector<bool> mask(size(), false);
    for (const auto& n : names) mask[id(n)] = true;
    return mask;
  }

  /// Strict descendants of v.
  std::vector<bool> descendants(std::size_t v) const {
    std::vector<bool> seen(size(), false);
    std::vector<std::size_t> stack(children_[v].begin(), children_[v].end());
    while (!stack.empty()) {
      const std::size_t u = stack.back();
      stack.pop_back();
      if (seen[u]) continue;
      seen[u] = true;
      stack.insert(stack.end(), children_[u].begin(), children_[u].end());
    }
    return seen;
  }

  /// Copy without the edges leaving v.
  Dag without_outgoing(std::size_t v) const {
    Dag g = *this;
    for (std::size_t c : g.children_[v]) std::erase(g.parents_[c], v);
    g.children_[v].clear();
    return g;
  }

 private:
  std::vector<std::string> names_;
  std::map<std::string, std::size_t> index_;
  std::vector<std::vector<std::size_t>> parents_;
  std::vector<std::vector<std::size_t>> children_;
};

namespace detail {

inline void check_disjoint(const std::vector<bool>& a, const std::vector<bool>& b, const char* what) {
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] && b[i]) throw std::invalid_argument(std::string("d_separated: ") + what + " must be disjoint");
}

/// Nodes with an active trail from `sources` given `observed` (reachability
/// with collider rules). Sources count as reachable.
inline std::vector<bool> reachable(const Dag& g, const std::vector<bool>& sources, const std::vector<bool>& observed) {
  const std::size_t n = g.size();
  // Observed nodes and their ancestors: colliders in this set are open.
  std::vector<bool> anc(n, false);
  std::vector<std::size_t> stack;
  for (std::size_t v = 0; v < n; ++v)
    if (observed[v]) stack.push_back(v);
  while (!stack.empty()) {
    const std::size_t v = stack.back();
    stack.pop_back();
    if (anc[v]) continue;
    anc[v] = true;
    for (std::size_t p : g.parents(v)) stack.push_back(p);
  }

  enum Dir { kUp = 0, kDown = 1 };  // up: arrived from a child; down: arrived from a parent
  std::vector<bool> visited(2 * n, false);
  std::vector<bool> reach(n, false);
  std::deque<std::pair<std::size_t, Dir>> queue;
  for (std::size_t v = 0; v < n; ++v)
    if (sources[v]) queue.emplace_back(v, kUp);
  while (!queue.empty()) {
    auto [v, dir] = queue.front();
    queue.pop_front();
    if (visited[2 * v + dir]) continue;
    visited[2 * v + dir] = true;
    if (!observed[v]) reach[v] = true;
    if (dir == kUp && !observed[v]) {
      for (std::size_t p : g.parents(v)) queue.emplace_back(p, kUp);
      for (std::size_t c : g.children(v)) queue.emplace_back(c, kDown);
    } else if (dir == kDown) {
      if (!observed[v])
        for (std::size_t c : g.children(v)) queue.emplace_back(c, kDown);
      if (anc[v])
        for (std::size_t p : g.parents(v)) queue.emplace_back(p, kUp);
    }
  }
  return reach;
}

}  // namespace detail

/// True iff every trail between xs and ys is blocked by zs.
inline bool d_separated(const Dag& g, const std::vector<std::string>& xs, const std::vector<std::string>& ys,
                        const std::vector<std::string>& zs) {
  const auto x = g.ids(xs);
  const auto y = g.ids(ys);
  const auto z = g.ids(zs);
  detail::check_disjoint(x, y, "xs and ys");
  detail::check_disjoint(x, z, "xs and zs");
  detail::check_disjoint(y, z, "ys and zs");
  const auto reach = detail::reachable(g, x, z);
  for (std::size_t v = 0; v < g.size(); ++v)
    if (y[v] && reach[v]) return false;
  return true;
}

/// A path in the skeleton, with per-step orientation.
struct GraphPath {
  std::vector<std::size_t> nodes;
  std::vector<bool> forward;  ///< forward[i]: edge nodes[i] -> nodes[i+1]
  bool open = false;          ///< active given the conditioning set it was evaluated against

  std::string str(const Dag& g) const {
    std::string s = g.name(nodes[0]);
    for (std::size_t i = 0; i + 1 < nodes.size(); ++i) s += (forward[i] ? " -> " : " <- ") + g.name(nodes[i + 1]);
    return s;
  }
};

namespace detail {

inline bool path_open(const Dag& g, const GraphPath& p, const std::vector<bool>& observed) {
  for (std::size_t i = 1; i + 1 < p.nodes.size(); ++i) {
    const std::size_t v = p.nodes[i];
    const bool collider = p.forward[i - 1] && !p.forward[i];
    if (collider) {
      if (observed[v]) continue;
      const auto desc = g.descendants(v);
      bool any = false;
      for (std::size_t u = 0; u < g.size(); ++u) any = any || (desc[u] && observed[u]);
      if (!any) return false;
    } else if (observed[v]) {
      return false;
    }
  }
  return true;
}

}  // namespace detail

/// Every simple path from treatment to outcome that begins with an edge into
/// the treatment, each marked open or blocked given zs.
inline std::vector<GraphPath> backdoor_paths(const Dag& g, const std::string& treatment, const std::string& outcome,
                                             const std::vector<std::string>& zs) {
  const std::size_t t = g.id(treatment);
  const std::size_t o = g.id(outcome);
  const auto z = g.ids(zs);
  std::vector<GraphPath> out;
  GraphPath cur;
  std::vector<bool> on_path(g.size(), false);
  auto extend = [&](auto&& self, std::size_t v) -> void {
    if (v == o) {
      GraphPath p = cur;
      p.open = detail::path_open(g, p, z);
      out.push_back(std::move(p));
      return;
    }
    auto step = [&](std::size_t w, bool fwd) {
      if (on_path[w]) return;
      if (v == t && fwd) return;  // first edge must point into the treatment
      on_path[w] = true;
      cur.nodes.push_back(w);
      cur.forward.push_back(fwd);
      self(self, w);
      cur.nodes.pop_back();
      cur.forward.pop_back();
      on_path[w] = false;
    };
    for (std::size_t p : g.parents(v)) step(p, false);
    for (std::size_t c : g.children(v)) step(c, true);
  };
  cur.nodes.push_back(t);
  on_path[t] = true;
  extend(extend, t);
  return out;
}

/// Backdoor criterion: no member of zs descends from the treatment, and zs
/// blocks every path between treatment and outcome that enters the treatment.
inline bool backdoor_admissible(const Dag& g, const std::string& treatment, const std::string& outcome,
                                const std::vector<std::string>& zs) {
  const std::size_t t = g.id(treatment);
  const std::size_t o = g.id(outcome);
  if (t == o) throw std::invalid_argument("backdoor_admissible: treatment and outcome must differ");
  const auto z = g.ids(zs);
  if (z[t] || z[o]) return false;
  const auto desc = g.descendants(t);
  for (std::size_t v = 0; v < g.size(); ++v)
    if (z[v] && desc[v]) return false;
  return d_separated(g.without_outgoing(t), {treatment}, {outcome}, zs);
}

/// Estimated P(x2 | x1) with the counts it came from.
struct CovModel {
  CategoricalSpec spec;
  std::vector<double> p_x2_given_x1;
  std::vector<std::uint64_t> counts;

  double prob(int x1, int x2) const {
    return p_x2_given_x1[static_cast<std::size_t>(x1) * static_cast<std::size_t>(spec.k2) + static_cast<std::size_t>(x2)];
  }
};

/// Row-normalized (x1, x2) counts with add-alpha smoothing; a row with no mass is uniform.
inline CovModel fit_cov_model(const LogView& log, double alpha = 0.5) {
  if (!(alpha >= 0.0)) throw std::invalid_argument("fit_cov_model: alpha must be >= 0");
  const auto k1 = static_cast<std::size_t>(log.spec.k1);
  const auto k2 = static_cast<std::size_t>(log.spec.k2);
  CovModel m{log.spec, std::vector<double>(k1 * k2), std::vector<std::uint64_t>(k1 * k2, 0)};
  for (const auto& r : log.records) {
    check_index(r.x1, log.spec.k1, "x1");
    check_index(r.x2, log.spec.k2, "x2");
    ++m.counts[static_cast<std::size_t>(r.x1) * k2 + static_cast<std::size_t>(r.x2)];
  }
  for (std::size_t r = 0; r < k1; ++r) {
    double total = 0.0;
    for (std::size_t c = 0; c < k2; ++c) total += static_cast<double>(m.counts[r * k2 + c]) + alpha;
    for (std::size_t c = 0; c < k2; ++c)
      m.p_x2_given_x1[r * k2 + c] = total > 0.0 ? (static_cast<double>(m.counts[r * k2 + c]) + alpha) / total : 1.0 / static_cast<double>(k2);
  }
  return m;
}

/// CovModel holding the environment's exact P(x2 | x1).
inline CovModel true_cov_model(const GroundTruth& gt) {
  return {gt.spec, gt.p_x2_given_x1, std::vector<std::uint64_t>(gt.p_x2_given_x1.size(), 0)};
}

/// The environment's click mechanism as a saturated (x1, x2, action) model.
inline FittedModel true_click_model(const GroundTruth& gt) {
  FeatureSpec fs{gt.spec, CovariateSet::both(), {true, gt.spec.two_decision()}};
  FittedModel m = zero_model(fs);
  for (std::size_t i = 0; i < m.beta.size(); ++i) m.beta[i] = clamp_logit(gt.click_logit[i]);
  return m;
}

/// sum_x2 P_model(c=1 | x1, x2, a) P_cov(x2 | x1): the adjusted P(c=1 | x1, do(a)).
inline double backdoor_adjust(const FittedModel& full_model, const CovModel& cov, int x1, int a, int d = 0) {
  if (!full_model.features.included.x1 || !full_model.features.included.x2)
    throw std::invalid_argument("backdoor_adjust: model must include both x1 and x2");
  if (!(full_model.features.spec.k1 == cov.spec.k1 && full_model.features.spec.k2 == cov.spec.k2))
    throw std::invalid_argument("backdoor_adjust: covariate model shape mismatch");
  double total = 0.0;
  for (int x2 = 0; x2 < cov.spec.k2; ++x2) total += full_model.predict(x1, x2, a, d) * cov.prob(x1, x2);
  return total;
}

/// Classes of x2 states (for one x1) with identical logging action distributions.
struct BalancingPartition {
  int x1 = 0;
  std::vector<int> class_of;               ///< x2 -> class label, labels in order of first appearance
  std::vector<std::vector<int>> classes;  ///< label -> member x2 states
};

/// Coarsest exact balancing score b(x2) for the given x1: x2 states whose
/// action distributions agree within 1e-9 share a class.
inline BalancingPartition balancing_coarsen(const Policy& logging_policy, int x1, double tol = 1e-9) {
  check_index(x1, logging_policy.spec.k1, "x1");
  BalancingPartition part;
  part.x1 = x1;
  for (int x2 = 0; x2 < logging_policy.spec.k2; ++x2) {
    const auto row = logging_policy.row(x1, x2);
    int label = -1;
    for (std::size_t c = 0; c < part.classes.size() && label < 0; ++c) {
      const auto rep = logging_policy.row(x1, part.classes[c].front());
      bool same = true;
      for (std::size_t j = 0; j < row.size() && same; ++j) same = std::abs(row[j] - rep[j]) <= tol;
      if (same) label = static_cast<int>(c);
    }
    if (label < 0) {
      label = static_cast<int>(part.classes.size());
      part.classes.emplace_back();
    }
    part.classes[static_cast<std::size_t>(label)].push_back(x2);
    part.class_of.push_back(label);
  }
  return part;
}

/// sum_b P(b | x1) P(c=1 | x1, b, a) with the class-conditional CTR taken from
/// the observational distribution induced by the logging policy.
inline double balanced_adjust(const GroundTruth& gt, const Policy& logging_policy, const BalancingPartition& part,
                              int joint_action) {
  check_policy_shape(gt, logging_policy);
  double total = 0.0;
  for (const auto& members : part.classes) {
    double mass = 0.0;
    double num = 0.0;
    double den = 0.0;
    double plain = 0.0;
    for (int x2 : members) {
      const double w = gt.conditional(part.x1, x2);
      const double pi = logging_policy.prob(part.x1, x2, joint_action);
      const double p = gt.click_prob(part.x1, x2, joint_action);
      mass += w;
      num += w * pi * p;
      den += w * pi;
      plain += w * p;
    }
    if (mass <= 0.0) continue;
    total += den > 0.0 ? mass * (num / den) : plain;
  }
  return total;
}

}  // namespace confound
