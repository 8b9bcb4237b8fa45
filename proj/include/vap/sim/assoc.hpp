#pragma once

// Random cross-view association instances with a known identity per proposal.

#include <algorithm>
#include <cstdint>
#include <vector>

#include "vap/crossview.hpp"
#include "vap/sim/episode.hpp"
#include "vap/sim/random.hpp"

namespace vap::sim {

struct AssociationSetup {
  int views = 3;
  int max_proposals = 4;   // per view, drawn uniformly in [1, max]
  int identities = 4;      // object 0 is the target
  int K = 5;
  double sigma = 0.03;     // per-proposal embedding noise around its identity
  double sigma_ref = 0.1;
  double target_visible = 1.0;  // chance the target is among a view's proposals
  double lambda = 1.0;
  double beta = 0.5;
  double null_unary = 0.0;
};

struct LabeledInstance {
  AssociationInstance instance;
  std::vector<std::vector<int>> identity;  // [view][proposal]
};

/// Identities are mutually orthogonal; each view sees a random subset of them.
inline LabeledInstance random_association(std::uint64_t seed, const AssociationSetup& s, int dim = 32) {
  if (s.views < 1 || s.max_proposals < 1 || s.identities < 1 || s.identities > dim || s.K < 1)
    throw ConfigError("association setup out of range");
  Rng rng(seed, Stream::identity, {0xA550C});
  std::vector<Embedding> ids;
  while (static_cast<int>(ids.size()) < s.identities) {
    auto v = rng.normal_vector(dim);
    for (const auto& e : ids) {
      double d = 0.0;
      for (int k = 0; k < dim; ++k) d += v[k] * e[k];
      for (int k = 0; k < dim; ++k) v[k] -= d * e[k];
    }
    double n2 = 0.0;
    for (double x : v) n2 += x * x;
    if (n2 > 1e-12) ids.push_back(Embedding::normalize(v));
  }

  LabeledInstance out;
  auto& inst = out.instance;
  inst.lambda = s.lambda;
  inst.beta = s.beta;
  inst.null_unary = s.null_unary;
  for (int k = 0; k < s.K; ++k) inst.references.push_back(detail::perturb(ids[0], s.sigma_ref, rng));

  const int extent = 8;
  for (int v = 0; v < s.views; ++v) {
    std::vector<int> others;
    for (int i = 1; i < s.identities; ++i) others.push_back(i);
    rng.shuffle(others);
    const bool visible = s.identities == 1 || rng.bernoulli(s.target_visible);
    const int cap = std::min(s.max_proposals, visible ? s.identities : s.identities - 1);
    const int m = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(cap)));
    std::vector<int> order;
    if (visible) order.push_back(0);
    for (int i = 0; static_cast<int>(order.size()) < m; ++i) order.push_back(others[i]);
    rng.shuffle(order);
    std::vector<Proposal> props;
    std::vector<int> labels;
    for (int i = 0; i < m; ++i) {
      const int x = 10 * i;
      props.emplace_back(BoundingBox(x, 0, x + extent, extent), rng.uniform(), detail::perturb(ids[order[i]], s.sigma, rng));
      labels.push_back(order[i]);
    }
    inst.per_view.push_back(std::move(props));
    out.identity.push_back(std::move(labels));
  }
  return out;
}

}  // namespace vap::sim
