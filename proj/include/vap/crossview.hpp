#pragma once

// Cross-view association: choose one proposal (or none) per camera so that
// every view agrees on a single physical instance. The objective adds
// reference evidence, pairwise cross-view consistency and a visibility prior;
// solve_exact enumerates it, solve_cluster and solve_pairwise approximate it.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <string_view>
#include <utility>
#include <vector>

#include "vap/error.hpp"
#include "vap/hungarian.hpp"
#include "vap/matcher.hpp"
#include "vap/scene.hpp"

namespace vap {

using Point2 = std::pair<double, double>;

/// Optional reprojection coupling. projections[v][i][u] is the projection of
/// proposal i of view v into view u.
struct GeometryTerm {
  std::vector<std::vector<std::vector<Point2>>> projections;
  double eta = 0.0;    // weight inside the consistency term
  double gamma = 0.0;  // weight inside the pairwise matching cost
};

struct AssociationInstance {
  std::vector<std::vector<Proposal>> per_view;
  std::vector<Embedding> references;
  double lambda = 1.0;
  double beta = 0.5;
  double null_unary = 0.0;
  std::optional<GeometryTerm> geometry;

  std::size_t views() const noexcept { return per_view.size(); }
};

struct Assignment {
  std::vector<std::optional<std::size_t>> choices;

  friend bool operator==(const Assignment&, const Assignment&) = default;
};

enum class Fusion { independent, exact, cluster, pairwise };

inline std::string_view to_string(Fusion f) {
  switch (f) {
    case Fusion::independent: return "independent";
    case Fusion::exact: return "exact";
    case Fusion::cluster: return "cluster";
    case Fusion::pairwise: return "pairwise";
  }
  return "?";
}

namespace detail {

inline void validate(const AssociationInstance& inst) {
  if (inst.per_view.empty()) throw InvalidAssignment("association needs at least one view");
  if (inst.references.empty()) throw InvalidEmbedding("association needs reference embeddings");
  const std::size_t dim = inst.references.front().dim();
  for (const auto& r : inst.references)
    if (r.dim() != dim) throw DimensionMismatch("reference dims differ");
  for (const auto& view : inst.per_view)
    for (const auto& p : view)
      if (p.embedding().dim() != dim) throw DimensionMismatch("proposal dim differs from references");
  if (inst.geometry) {
    const auto& proj = inst.geometry->projections;
    if (proj.size() != inst.views()) throw DimensionMismatch("projection table: wrong view count");
    for (std::size_t v = 0; v < proj.size(); ++v) {
      if (proj[v].size() != inst.per_view[v].size())
        throw DimensionMismatch("projection table: wrong proposal count");
      for (const auto& row : proj[v])
        if (row.size() != inst.views()) throw DimensionMismatch("projection table: wrong target view count");
    }
  }
}

inline double distance(Point2 a, Point2 b) { return std::hypot(a.first - b.first, a.second - b.second); }

}  // namespace detail

/// phi_ref(v, i): summed cosine to every reference.
inline double reference_evidence(const AssociationInstance& inst, std::size_t v, std::size_t i) {
  double s = 0.0;
  for (const auto& z : inst.references) s += cosine(inst.per_view[v][i].embedding(), z);
  return s;
}

/// Reprojection distance between proposal i of view v and proposal j of view u; 0 without geometry.
inline double geometric_distance(const AssociationInstance& inst, std::size_t v, std::size_t i, std::size_t u,
                                 std::size_t j) {
  if (!inst.geometry) return 0.0;
  return detail::distance(inst.geometry->projections[v][i][u], inst.per_view[u][j].centroid());
}

/// phi_cv for a concrete pair (v, i) and (u, j), v < u.
inline double consistency(const AssociationInstance& inst, std::size_t v, std::size_t i, std::size_t u,
                          std::size_t j) {
  const double c = cosine(inst.per_view[v][i].embedding(), inst.per_view[u][j].embedding());
  if (!inst.geometry) return c;
  return c - inst.geometry->eta * geometric_distance(inst, v, i, u, j);
}

/// Unary part used by cluster scoring: phi_ref + beta * phi_obs.
inline double unary(const AssociationInstance& inst, std::size_t v, std::size_t i) {
  return reference_evidence(inst, v, i) + inst.beta * inst.per_view[v][i].confidence();
}

inline double score_assignment(const AssociationInstance& inst, const Assignment& m) {
  detail::validate(inst);
  if (m.choices.size() != inst.views()) throw InvalidAssignment("assignment length differs from view count");
  for (std::size_t v = 0; v < m.choices.size(); ++v)
    if (m.choices[v] && *m.choices[v] >= inst.per_view[v].size())
      throw InvalidAssignment("assignment index out of range in view " + std::to_string(v));

  double ref = 0.0, obs = 0.0, cv = 0.0;
  for (std::size_t v = 0; v < inst.views(); ++v) {
    if (m.choices[v]) {
      ref += reference_evidence(inst, v, *m.choices[v]);
      obs += inst.per_view[v][*m.choices[v]].confidence();
    } else {
      obs += inst.null_unary;
    }
  }
  for (std::size_t v = 0; v < inst.views(); ++v)
    for (std::size_t u = v + 1; u < inst.views(); ++u)
      if (m.choices[v] && m.choices[u]) cv += consistency(inst, v, *m.choices[v], u, *m.choices[u]);
  return ref + inst.lambda * cv + inst.beta * obs;
}

/// Exhaustive MAP search. Ties resolve to the lexicographically smallest
/// choice vector with "none" ordered after every proposal index.
inline Assignment solve_exact(const AssociationInstance& inst, std::uint64_t cap = 1'000'000) {
  detail::validate(inst);
  const std::size_t V = inst.views();
  std::uint64_t total = 1;
  for (const auto& view : inst.per_view) {
    const std::uint64_t radix = view.size() + 1;
    if (total > cap / radix) throw ProblemTooLarge("exhaustive association exceeds cap of " + std::to_string(cap));
    total *= radix;
  }

  // Precompute unary and pairwise tables so enumeration is table lookups only.
  std::vector<std::vector<double>> un(V);
  for (std::size_t v = 0; v < V; ++v) {
    un[v].resize(inst.per_view[v].size() + 1);
    for (std::size_t i = 0; i < inst.per_view[v].size(); ++i)
      un[v][i] = reference_evidence(inst, v, i) + inst.beta * inst.per_view[v][i].confidence();
    un[v].back() = inst.beta * inst.null_unary;
  }
  std::vector<std::vector<std::vector<std::vector<double>>>> pair(V, std::vector<std::vector<std::vector<double>>>(V));
  for (std::size_t v = 0; v < V; ++v)
    for (std::size_t u = v + 1; u < V; ++u) {
      pair[v][u].assign(inst.per_view[v].size(), std::vector<double>(inst.per_view[u].size()));
      for (std::size_t i = 0; i < inst.per_view[v].size(); ++i)
        for (std::size_t j = 0; j < inst.per_view[u].size(); ++j) pair[v][u][i][j] = consistency(inst, v, i, u, j);
    }

  std::vector<std::size_t> digit(V, 0);
  std::vector<std::size_t> best_digit;
  double best = -std::numeric_limits<double>::infinity();
  for (std::uint64_t step = 0; step < total; ++step) {
    double ref_obs = 0.0, cv = 0.0;
    for (std::size_t v = 0; v < V; ++v) ref_obs += un[v][digit[v]];
    for (std::size_t v = 0; v < V; ++v) {
      if (digit[v] == inst.per_view[v].size()) continue;
      for (std::size_t u = v + 1; u < V; ++u)
        if (digit[u] != inst.per_view[u].size()) cv += pair[v][u][digit[v]][digit[u]];
    }
    const double s = ref_obs + inst.lambda * cv;
    if (s > best) {
      best = s;
      best_digit = digit;
    }
    for (std::size_t v = V; v-- > 0;) {
      if (++digit[v] <= inst.per_view[v].size()) break;
      digit[v] = 0;
    }
  }

  Assignment m;
  m.choices.resize(V);
  for (std::size_t v = 0; v < V; ++v)
    if (best_digit[v] < inst.per_view[v].size()) m.choices[v] = best_digit[v];
  return m;
}

namespace detail {

struct DisjointSets {
  std::vector<std::size_t> parent;
  explicit DisjointSets(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (b < a) std::swap(a, b);
    parent[b] = a;
  }
};

// Flattened (view, proposal) node list in view-major order.
struct NodeIndex {
  std::vector<std::pair<std::size_t, std::size_t>> nodes;
  std::vector<std::size_t> offset;
  explicit NodeIndex(const AssociationInstance& inst) {
    for (std::size_t v = 0; v < inst.views(); ++v) {
      offset.push_back(nodes.size());
      for (std::size_t i = 0; i < inst.per_view[v].size(); ++i) nodes.emplace_back(v, i);
    }
  }
  std::size_t id(std::size_t v, std::size_t i) const { return offset[v] + i; }
};

// Groups of node ids, ordered by their smallest member.
inline std::vector<std::vector<std::size_t>> components(DisjointSets& sets, std::size_t n) {
  std::vector<std::vector<std::size_t>> groups;
  std::vector<std::size_t> slot(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t root = sets.find(k);
    if (slot[root] == n) {
      slot[root] = groups.size();
      groups.emplace_back();
    }
    groups[slot[root]].push_back(k);
  }
  return groups;
}

inline Assignment single_best(const AssociationInstance& inst) {
  Assignment m;
  m.choices.resize(inst.views());
  double best = -std::numeric_limits<double>::infinity();
  std::optional<std::pair<std::size_t, std::size_t>> arg;
  for (std::size_t v = 0; v < inst.views(); ++v)
    for (std::size_t i = 0; i < inst.per_view[v].size(); ++i) {
      const double s = unary(inst, v, i);
      if (s > best) {
        best = s;
        arg = {v, i};
      }
    }
  if (arg) m.choices[arg->first] = arg->second;
  return m;
}

}  // namespace detail

/// Embedding-graph clustering. Proposals in different views are linked when
/// their consistency term reaches `threshold`; each connected component is an
/// instance hypothesis. A component keeps its best-evidence proposal per view
/// and the highest-scoring component wins.
inline Assignment solve_cluster(const AssociationInstance& inst, double threshold = 0.6) {
  detail::validate(inst);
  const detail::NodeIndex index(inst);
  const std::size_t n = index.nodes.size();
  detail::DisjointSets sets(n);
  for (std::size_t v = 0; v < inst.views(); ++v)
    for (std::size_t u = v + 1; u < inst.views(); ++u)
      for (std::size_t i = 0; i < inst.per_view[v].size(); ++i)
        for (std::size_t j = 0; j < inst.per_view[u].size(); ++j)
          if (consistency(inst, v, i, u, j) >= threshold) sets.unite(index.id(v, i), index.id(u, j));

  Assignment best_m;
  best_m.choices.resize(inst.views());
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& group : detail::components(sets, n)) {
    Assignment m;
    m.choices.resize(inst.views());
    std::vector<double> kept(inst.views(), -std::numeric_limits<double>::infinity());
    for (std::size_t node : group) {
      const auto [v, i] = index.nodes[node];
      const double ev = reference_evidence(inst, v, i);
      if (!m.choices[v] || ev > kept[v]) {
        m.choices[v] = i;
        kept[v] = ev;
      }
    }
    double s = 0.0;
    for (std::size_t v = 0; v < inst.views(); ++v)
      if (m.choices[v]) s += unary(inst, v, *m.choices[v]);
    if (s > best) {
      best = s;
      best_m = m;
    }
  }
  return best_m;
}

/// Pairwise Hungarian matching between every view pair, merged into
/// cross-view groups. Groups holding two proposals of one view are
/// inconsistent and discarded; with no consistent multi-view group left the
/// best single proposal is returned with every other view empty.
inline Assignment solve_pairwise(const AssociationInstance& inst) {
  detail::validate(inst);
  const detail::NodeIndex index(inst);
  const std::size_t n = index.nodes.size();
  detail::DisjointSets sets(n);
  const double gamma = inst.geometry ? inst.geometry->gamma : 0.0;
  constexpr double pad = 1e6;

  for (std::size_t v = 0; v < inst.views(); ++v)
    for (std::size_t u = v + 1; u < inst.views(); ++u) {
      const std::size_t rows = inst.per_view[v].size();
      const std::size_t cols = inst.per_view[u].size();
      if (rows == 0 || cols == 0) continue;
      const std::size_t side = std::max(rows, cols);
      CostMatrix cost(side, std::vector<double>(side, pad));
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j)
          cost[i][j] = -cosine(inst.per_view[v][i].embedding(), inst.per_view[u][j].embedding()) +
                       gamma * geometric_distance(inst, v, i, u, j);
      const auto perm = hungarian(cost);
      for (std::size_t i = 0; i < rows; ++i)
        if (perm[i] < cols) sets.unite(index.id(v, i), index.id(u, perm[i]));
    }

  Assignment best_m;
  best_m.choices.resize(inst.views());
  double best = -std::numeric_limits<double>::infinity();
  bool found = false;
  for (const auto& group : detail::components(sets, n)) {
    if (group.size() < 2) continue;
    Assignment m;
    m.choices.resize(inst.views());
    bool consistent = true;
    for (std::size_t node : group) {
      const auto [v, i] = index.nodes[node];
      if (m.choices[v]) {
        consistent = false;
        break;
      }
      m.choices[v] = i;
    }
    if (!consistent) continue;
    double s = 0.0;
    for (std::size_t v = 0; v < inst.views(); ++v)
      if (m.choices[v]) s += unary(inst, v, *m.choices[v]);
    if (s > best) {
      best = s;
      best_m = m;
      found = true;
    }
  }
  return found ? best_m : detail::single_best(inst);
}

}  // namespace vap
