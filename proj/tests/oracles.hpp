#pragma once

// Reference implementations used to check the library. Each one recomputes
// its answer from raw numbers with the most direct loop available.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <vector>

#include "vap/crossview.hpp"
#include "vap/embedalign.hpp"
#include "vap/scene.hpp"

namespace oracle {

inline double dot(const vap::Embedding& a, const vap::Embedding& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) s += a[i] * b[i];
  return s;
}

/// Cosine of unit vectors, bounded to [-1, 1] like any cosine.
inline double cos(const vap::Embedding& a, const vap::Embedding& b) { return std::clamp(dot(a, b), -1.0, 1.0); }

struct Vote {
  std::size_t winner;
  std::vector<int> votes;
  bool tie;
};

/// Each reference picks its most similar proposal (first one on ties); most
/// votes wins, then highest mean similarity, then lowest index.
inline Vote vote(const std::vector<vap::Embedding>& props, const std::vector<vap::Embedding>& refs) {
  const std::size_t n = props.size();
  std::vector<int> votes(n, 0);
  for (const auto& z : refs) {
    std::vector<double> sims;
    for (const auto& e : props) sims.push_back(cos(e, z));
    ++votes[std::max_element(sims.begin(), sims.end()) - sims.begin()];
  }
  const int top = *std::max_element(votes.begin(), votes.end());
  std::vector<std::size_t> leaders;
  for (std::size_t i = 0; i < n; ++i)
    if (votes[i] == top) leaders.push_back(i);
  auto mean = [&](std::size_t i) {
    double s = 0.0;
    for (const auto& z : refs) s += cos(props[i], z);
    return s / refs.size();
  };
  std::size_t winner = leaders.front();
  for (std::size_t i : leaders)
    if (mean(i) > mean(winner)) winner = i;
  return {winner, votes, leaders.size() > 1};
}

inline std::size_t mean_winner(const std::vector<vap::Embedding>& props, const std::vector<vap::Embedding>& refs) {
  std::vector<double> means;
  for (const auto& e : props) {
    double s = 0.0;
    for (const auto& z : refs) s += cos(e, z);
    means.push_back(s / refs.size());
  }
  return std::max_element(means.begin(), means.end()) - means.begin();
}

/// Minimum over all n! permutations.
inline double min_assignment_cost(const std::vector<std::vector<double>>& cost) {
  std::vector<std::size_t> p(cost.size());
  std::iota(p.begin(), p.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) s += cost[i][p[i]];
    best = std::min(best, s);
  } while (std::next_permutation(p.begin(), p.end()));
  return best;
}

/// Objective value written straight from its definition.
inline double map_score(const vap::AssociationInstance& inst, const std::vector<std::optional<std::size_t>>& m) {
  double total = 0.0;
  for (std::size_t v = 0; v < m.size(); ++v) {
    if (!m[v]) {
      total += inst.beta * inst.null_unary;
      continue;
    }
    const auto& p = inst.per_view[v][*m[v]];
    for (const auto& z : inst.references) total += cos(p.embedding(), z);
    total += inst.beta * p.confidence();
  }
  for (std::size_t v = 0; v < m.size(); ++v)
    for (std::size_t u = v + 1; u < m.size(); ++u) {
      if (!m[v] || !m[u]) continue;
      const auto& a = inst.per_view[v][*m[v]];
      const auto& b = inst.per_view[u][*m[u]];
      double term = cos(a.embedding(), b.embedding());
      if (inst.geometry) {
        const auto proj = inst.geometry->projections[v][*m[v]][u];
        const auto c = b.centroid();
        term -= inst.geometry->eta * std::sqrt((proj.first - c.first) * (proj.first - c.first) +
                                               (proj.second - c.second) * (proj.second - c.second));
      }
      total += inst.lambda * term;
    }
  return total;
}

struct Enumerated {
  std::vector<std::optional<std::size_t>> best;
  double best_score = -std::numeric_limits<double>::infinity();
  double runner_up = -std::numeric_limits<double>::infinity();  // best score among the other assignments
};

/// Depth-first enumeration in lexicographic order (index 0 first, none last).
inline void enumerate(const vap::AssociationInstance& inst, std::vector<std::optional<std::size_t>>& cur,
                      std::size_t v, Enumerated& out) {
  if (v == inst.per_view.size()) {
    const double s = map_score(inst, cur);
    if (s > out.best_score) {
      out.runner_up = out.best_score;
      out.best_score = s;
      out.best = cur;
    } else {
      out.runner_up = std::max(out.runner_up, s);
    }
    return;
  }
  for (std::size_t i = 0; i <= inst.per_view[v].size(); ++i) {
    cur[v] = i < inst.per_view[v].size() ? std::optional<std::size_t>(i) : std::nullopt;
    enumerate(inst, cur, v + 1, out);
  }
}

inline Enumerated best_assignment(const vap::AssociationInstance& inst) {
  Enumerated out;
  std::vector<std::optional<std::size_t>> cur(inst.per_view.size());
  enumerate(inst, cur, 0, out);
  return out;
}

/// Exact round-half-up blend for alpha = q / 4, in integers.
inline int blend_quarter(int src, int tint, int q) { return ((4 - q) * src + q * tint + 2) / 4; }

inline std::pair<double, double> rowwise(const vap::EmbeddingMatrix& a, const vap::EmbeddingMatrix& b) {
  std::vector<double> c;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double ab = 0, aa = 0, bb = 0;
    for (std::size_t k = 0; k < a.cols(); ++k) {
      ab += a(i, k) * b(i, k);
      aa += a(i, k) * a(i, k);
      bb += b(i, k) * b(i, k);
    }
    c.push_back(ab / std::sqrt(aa * bb));
  }
  double mean = 0;
  for (double x : c) mean += x;
  mean /= c.size();
  double var = 0;
  for (double x : c) var += (x - mean) * (x - mean);
  return {mean, std::sqrt(var / c.size())};
}

/// HSIC form on Gram matrices: <K_c, L_c> / (||K_c|| ||L_c||).
inline double cka(const vap::EmbeddingMatrix& a, const vap::EmbeddingMatrix& b) {
  const std::size_t n = a.rows();
  auto gram = [n](const vap::EmbeddingMatrix& m) {
    std::vector<std::vector<double>> g(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t k = 0; k < m.cols(); ++k) g[i][j] += m(i, k) * m(j, k);
    // Double centring H G H.
    std::vector<double> row(n, 0.0), col(n, 0.0);
    double all = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        row[i] += g[i][j] / n;
        col[j] += g[i][j] / n;
        all += g[i][j] / (n * n);
      }
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) g[i][j] = g[i][j] - row[i] - col[j] + all;
    return g;
  };
  const auto k = gram(a);
  const auto l = gram(b);
  double kl = 0, kk = 0, ll = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      kl += k[i][j] * l[i][j];
      kk += k[i][j] * k[i][j];
      ll += l[i][j] * l[i][j];
    }
  return kl / std::sqrt(kk * ll);
}

inline double knn(const vap::EmbeddingMatrix& a, const vap::EmbeddingMatrix& b) {
  std::size_t hits = 0;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    std::size_t arg = 0;
    double best = -2.0;
    for (std::size_t j = 0; j < b.rows(); ++j) {
      double ab = 0, aa = 0, bb = 0;
      for (std::size_t k = 0; k < a.cols(); ++k) {
        ab += a(i, k) * b(j, k);
        aa += a(i, k) * a(i, k);
        bb += b(j, k) * b(j, k);
      }
      const double c = ab / std::sqrt(aa * bb);
      if (c > best) {
        best = c;
        arg = j;
      }
    }
    hits += arg == i;
  }
  return static_cast<double>(hits) / a.rows();
}

// ---------------------------------------------------------------------------
// Random inputs

inline vap::Embedding random_embedding(std::mt19937_64& rng, int dim) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> v(dim);
  for (auto& x : v) x = n(rng);
  return vap::Embedding::normalize(v);
}

inline vap::EmbeddingMatrix random_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> v(rows * cols);
  for (auto& x : v) x = n(rng);
  return vap::EmbeddingMatrix(rows, cols, std::move(v));
}

inline vap::AssociationInstance random_instance(std::mt19937_64& rng, int max_views, int max_props, int dim = 8) {
  std::uniform_int_distribution<int> views(1, max_views), props(0, max_props), k(1, 5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  vap::AssociationInstance inst;
  const int refs = k(rng);
  for (int r = 0; r < refs; ++r) inst.references.push_back(random_embedding(rng, dim));
  const int V = views(rng);
  for (int v = 0; v < V; ++v) {
    std::vector<vap::Proposal> ps;
    const int m = props(rng);
    for (int i = 0; i < m; ++i) ps.emplace_back(vap::BoundingBox(i, 0, i + 4, 4), u(rng), random_embedding(rng, dim));
    inst.per_view.push_back(std::move(ps));
  }
  inst.lambda = 2.0 * u(rng);
  inst.beta = u(rng);
  inst.null_unary = u(rng) - 0.5;
  return inst;
}

}  // namespace oracle
