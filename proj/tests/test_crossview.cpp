#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "vap/crossview.hpp"
#include "vap/sim/assoc.hpp"

using namespace vap;

namespace {

Embedding at_angle(double degrees) {
  const double r = degrees * M_PI / 180.0;
  return Embedding::normalize({std::cos(r), std::sin(r)});
}

Proposal prop(const Embedding& e, double conf = 1.0, int x = 0) { return Proposal(BoundingBox(x, 0, x + 4, 4), conf, e); }

std::vector<std::optional<std::size_t>> none(std::size_t v) { return std::vector<std::optional<std::size_t>>(v); }

}  // namespace

TEST(ScoreAssignment, AllEmptyIsZero) {
  std::mt19937_64 rng(1);
  auto inst = oracle::random_instance(rng, 3, 4);
  inst.null_unary = 0.0;
  EXPECT_DOUBLE_EQ(score_assignment(inst, {none(inst.views())}), 0.0);
}

TEST(ScoreAssignment, SingleViewHasNoPairwiseTerm) {
  AssociationInstance inst;
  inst.references = {at_angle(0), at_angle(90)};
  inst.per_view = {{prop(at_angle(30), 0.8)}};
  inst.lambda = 5.0;
  inst.beta = 0.5;
  const double want = std::cos(M_PI / 6) + std::cos(M_PI / 3) + 0.5 * 0.8;
  EXPECT_NEAR(score_assignment(inst, {{0}}), want, 1e-12);
}

TEST(ScoreAssignment, TwoIdenticalViewsScoreThree) {
  AssociationInstance inst;
  inst.references = {at_angle(0)};
  inst.per_view = {{prop(at_angle(0))}, {prop(at_angle(0))}};
  inst.lambda = 1.0;
  inst.beta = 0.0;
  EXPECT_DOUBLE_EQ(score_assignment(inst, {{0, 0}}), 3.0);
}

TEST(ScoreAssignment, RejectsInvalidAssignments) {
  AssociationInstance inst;
  inst.references = {at_angle(0)};
  inst.per_view = {{prop(at_angle(0))}, {prop(at_angle(0))}};
  EXPECT_THROW(score_assignment(inst, {{0}}), InvalidAssignment);
  EXPECT_THROW(score_assignment(inst, {{0, 1}}), InvalidAssignment);
}

TEST(ScoreAssignment, MatchesDefinitionOnRandomAssignments) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 300; ++trial) {
    const auto inst = oracle::random_instance(rng, 4, 4);
    Assignment m;
    for (const auto& view : inst.per_view) {
      std::uniform_int_distribution<std::size_t> pick(0, view.size());
      const auto k = pick(rng);
      m.choices.push_back(k < view.size() ? std::optional<std::size_t>(k) : std::nullopt);
    }
    EXPECT_NEAR(score_assignment(inst, m), oracle::map_score(inst, m.choices), 1e-9);
  }
}

TEST(SolveExact, DecomposesWithoutConsistencyTerm) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    auto inst = oracle::random_instance(rng, 4, 4);
    inst.lambda = 0.0;
    const auto m = solve_exact(inst);
    for (std::size_t v = 0; v < inst.views(); ++v) {
      std::optional<std::size_t> want;
      double best = -INFINITY;
      for (std::size_t i = 0; i < inst.per_view[v].size(); ++i) {
        double u = inst.beta * inst.per_view[v][i].confidence();
        for (const auto& z : inst.references) u += oracle::dot(inst.per_view[v][i].embedding(), z);
        if (u > best) {
          best = u;
          want = i;
        }
      }
      if (inst.beta * inst.null_unary > best) want.reset();
      EXPECT_EQ(m.choices[v], want) << "trial " << trial << " view " << v;
    }
  }
}

TEST(SolveExact, SingleViewPicksBestUnary) {
  AssociationInstance inst;
  inst.references = {at_angle(0)};
  inst.per_view = {{prop(at_angle(80)), prop(at_angle(10)), prop(at_angle(40))}};
  EXPECT_EQ(solve_exact(inst).choices, (std::vector<std::optional<std::size_t>>{1}));
  inst.null_unary = 10.0;
  EXPECT_EQ(solve_exact(inst).choices, none(1));
}

TEST(SolveExact, MatchesEnumerationOracle) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 500; ++trial) {
    const auto inst = oracle::random_instance(rng, 3, 4);
    const auto m = solve_exact(inst);
    const auto want = oracle::best_assignment(inst);
    ASSERT_NEAR(score_assignment(inst, m), want.best_score, 1e-9) << "trial " << trial;
    if (want.runner_up < want.best_score - 1e-9) {
      ASSERT_EQ(m.choices, want.best) << "trial " << trial;
    }
  }
}

TEST(SolveExact, MatchesEnumerationWithGeometry) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> coord(0.0, 40.0);
  for (int trial = 0; trial < 200; ++trial) {
    auto inst = oracle::random_instance(rng, 3, 3);
    GeometryTerm g;
    g.eta = 0.02;
    g.projections.resize(inst.views());
    for (std::size_t v = 0; v < inst.views(); ++v)
      for (std::size_t i = 0; i < inst.per_view[v].size(); ++i) {
        std::vector<Point2> row;
        for (std::size_t u = 0; u < inst.views(); ++u) row.emplace_back(coord(rng), coord(rng));
        g.projections[v].push_back(row);
      }
    inst.geometry = g;
    const auto want = oracle::best_assignment(inst);
    ASSERT_NEAR(score_assignment(inst, solve_exact(inst)), want.best_score, 1e-9) << "trial " << trial;
  }
}

TEST(SolveExact, ZeroWeightGeometryChangesNothing) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    auto inst = oracle::random_instance(rng, 3, 3);
    const auto plain = solve_exact(inst);
    const double plain_score = score_assignment(inst, plain);
    GeometryTerm g;
    g.projections.resize(inst.views());
    for (std::size_t v = 0; v < inst.views(); ++v)
      g.projections[v].assign(inst.per_view[v].size(), std::vector<Point2>(inst.views(), {100.0, 100.0}));
    inst.geometry = g;
    EXPECT_EQ(solve_exact(inst), plain);
    EXPECT_DOUBLE_EQ(score_assignment(inst, plain), plain_score);
  }
}

TEST(SolveExact, ViewRelabelingKeepsTheOptimum) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const auto inst = oracle::random_instance(rng, 3, 4);
    auto flipped = inst;
    std::reverse(flipped.per_view.begin(), flipped.per_view.end());
    const double a = score_assignment(inst, solve_exact(inst));
    const double b = score_assignment(flipped, solve_exact(flipped));
    EXPECT_NEAR(a, b, 1e-9);
  }
}

TEST(SolveExact, CapIsEnforced) {
  AssociationInstance inst;
  inst.references = {at_angle(0)};
  for (int v = 0; v < 7; ++v) {
    std::vector<Proposal> view;
    for (int i = 0; i < 9; ++i) view.push_back(prop(at_angle(10.0 * i)));
    inst.per_view.push_back(view);
  }
  EXPECT_THROW(solve_exact(inst), ProblemTooLarge);
  inst.per_view.resize(2);
  EXPECT_THROW(solve_exact(inst, 99), ProblemTooLarge);
  EXPECT_NO_THROW(solve_exact(inst, 100));
}

TEST(SolveCluster, LinksTargetAcrossViews) {
  AssociationInstance inst;
  inst.references = {at_angle(0)};
  inst.per_view = {{prop(at_angle(90)), prop(at_angle(0))}, {prop(at_angle(0)), prop(at_angle(90))}};
  const auto m = solve_cluster(inst, 0.5);
  EXPECT_EQ(m.choices, (std::vector<std::optional<std::size_t>>{1, 0}));
}

TEST(SolveCluster, NoEdgesGivesBestSingleProposal) {
  AssociationInstance inst;
  const std::size_t d = 6;
  auto axis = [d](std::size_t k) {
    std::vector<double> v(d, 0.0);
    v[k] = 1.0;
    v[(k + 1) % d] = 0.01;
    return Embedding::normalize(v);
  };
  inst.references = {axis(3)};
  inst.per_view = {{prop(axis(0)), prop(axis(1))}, {prop(axis(2)), prop(axis(3))}, {prop(axis(4))}};
  const auto m = solve_cluster(inst, 0.999);
  EXPECT_EQ(m.choices, (std::vector<std::optional<std::size_t>>{std::nullopt, 1, std::nullopt}));
  EXPECT_EQ(m, detail::single_best(inst));
}

TEST(SolvePairwise, PerfectStructureMatchesExact) {
  AssociationInstance inst;
  inst.references = {at_angle(0)};
  inst.per_view = {{prop(at_angle(90)), prop(at_angle(0))}, {prop(at_angle(0)), prop(at_angle(90))}};
  EXPECT_EQ(solve_pairwise(inst), solve_exact(inst));
}

TEST(SolvePairwise, InconsistentMatchingFallsBack) {
  // Rotating each view by 60 degrees makes the three pairwise matchings chain
  // into a single cycle holding two proposals of every view.
  AssociationInstance inst;
  inst.references = {at_angle(0)};
  inst.beta = 0.0;
  inst.per_view = {{prop(at_angle(0)), prop(at_angle(90))},
                   {prop(at_angle(60)), prop(at_angle(150))},
                   {prop(at_angle(120)), prop(at_angle(210))}};
  const auto m = solve_pairwise(inst);
  EXPECT_EQ(m.choices, (std::vector<std::optional<std::size_t>>{0, std::nullopt, std::nullopt}));
}

TEST(SolvePairwise, SingleViewFallsBack) {
  AssociationInstance inst;
  inst.references = {at_angle(0)};
  inst.per_view = {{prop(at_angle(40)), prop(at_angle(5))}};
  EXPECT_EQ(solve_pairwise(inst).choices, (std::vector<std::optional<std::size_t>>{1}));
}

TEST(Approximations, NeverBeatExact) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 500; ++trial) {
    const auto inst = oracle::random_instance(rng, 3, 4);
    const double best = score_assignment(inst, solve_exact(inst));
    EXPECT_LE(score_assignment(inst, solve_cluster(inst, 0.6)), best + 1e-9);
    EXPECT_LE(score_assignment(inst, solve_pairwise(inst)), best + 1e-9);
  }
}

TEST(Approximations, AgreeWithExactOnWellSeparatedInstances) {
  sim::AssociationSetup setup;
  int cluster = 0, pairwise = 0;
  const int n = 500;
  for (int seed = 0; seed < n; ++seed) {
    const auto li = sim::random_association(static_cast<std::uint64_t>(seed), setup);
    const auto exact = solve_exact(li.instance);
    cluster += solve_cluster(li.instance, 0.6) == exact;
    pairwise += solve_pairwise(li.instance) == exact;
  }
  EXPECT_GE(cluster, 0.95 * n);
  EXPECT_GE(pairwise, 0.95 * n);
}

TEST(Association, GeneratorSeparatesIdentities) {
  sim::AssociationSetup setup;
  const auto li = sim::random_association(42, setup);
  const auto& inst = li.instance;
  for (std::size_t v = 0; v < inst.views(); ++v)
    for (std::size_t u = v + 1; u < inst.views(); ++u)
      for (std::size_t i = 0; i < inst.per_view[v].size(); ++i)
        for (std::size_t j = 0; j < inst.per_view[u].size(); ++j) {
          const double c = cosine(inst.per_view[v][i].embedding(), inst.per_view[u][j].embedding());
          if (li.identity[v][i] == li.identity[u][j]) {
            EXPECT_GE(c, 0.9);
          } else {
            EXPECT_LE(c, 0.3);
          }
        }
}
