#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "vap/error.hpp"

namespace vap {

using CostMatrix = std::vector<std::vector<double>>;

/// Minimum-cost perfect matching on a square matrix (Kuhn-Munkres with row and
/// column potentials, O(n^3)). Returns `perm` with perm[row] = assigned column.
/// Rectangular problems must be padded to square by the caller.
inline std::vector<std::size_t> hungarian(const CostMatrix& cost) {
  const std::size_t n = cost.size();
  for (const auto& row : cost) {
    if (row.size() != n) throw DimensionMismatch("hungarian: cost matrix is not square");
    for (double c : row)
      if (!std::isfinite(c)) throw InvalidAssignment("hungarian: non-finite cost entry");
  }
  if (n == 0) return {};

  constexpr double inf = std::numeric_limits<double>::infinity();
  // 1-based internally; column 0 is a virtual sink.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> match(n + 1, 0), way(n + 1, 0);

  for (std::size_t row = 1; row <= n; ++row) {
    match[0] = row;
    std::size_t col0 = 0;
    std::vector<double> min_slack(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[col0] = true;
      const std::size_t r = match[col0];
      double delta = inf;
      std::size_t col1 = 0;
      for (std::size_t c = 1; c <= n; ++c) {
        if (used[c]) continue;
        const double reduced = cost[r - 1][c - 1] - u[r] - v[c];
        if (reduced < min_slack[c]) {
          min_slack[c] = reduced;
          way[c] = col0;
        }
        if (min_slack[c] < delta) {
          delta = min_slack[c];
          col1 = c;
        }
      }
      for (std::size_t c = 0; c <= n; ++c) {
        if (used[c]) {
          u[match[c]] += delta;
          v[c] -= delta;
        } else {
          min_slack[c] -= delta;
        }
      }
      col0 = col1;
    } while (match[col0] != 0);
    do {
      const std::size_t col1 = way[col0];
      match[col0] = match[col1];
      col0 = col1;
    } while (col0 != 0);
  }

  std::vector<std::size_t> perm(n);
  for (std::size_t c = 1; c <= n; ++c) perm[match[c] - 1] = c - 1;
  return perm;
}

/// Sum of cost[i][perm[i]] in row order.
inline double assignment_cost(const CostMatrix& cost, const std::vector<std::size_t>& perm) {
  double total = 0.0;
  for (std::size_t i = 0; i < perm.size(); ++i) total += cost[i][perm[i]];
  return total;
}

}  // namespace vap
