#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "vap/scene.hpp"

using namespace vap;

TEST(Normalize, ThreeFourFive) {
  const auto e = Embedding::normalize({3.0, 4.0});
  EXPECT_DOUBLE_EQ(e[0], 0.6);
  EXPECT_DOUBLE_EQ(e[1], 0.8);
}

TEST(Normalize, UnitAxisUnchanged) {
  const auto e = Embedding::normalize({1.0, 0.0, 0.0});
  EXPECT_EQ(e, Embedding::normalize({1.0, 0.0, 0.0}));
  EXPECT_DOUBLE_EQ(e[0], 1.0);
  EXPECT_DOUBLE_EQ(e[1], 0.0);
}

TEST(Normalize, RejectsDegenerateInput) {
  EXPECT_THROW(Embedding::normalize({0.0, 0.0}), InvalidEmbedding);
  EXPECT_THROW(Embedding::normalize({1.0, NAN}), InvalidEmbedding);
  EXPECT_THROW(Embedding::normalize({INFINITY, 1.0}), InvalidEmbedding);
  EXPECT_THROW(Embedding::normalize(std::span<const double>{}), InvalidEmbedding);
}

TEST(Normalize, UnitNormIdempotentAndScaleFree) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> n(0.0, 3.0);
  std::uniform_real_distribution<double> s(1e-3, 1e3);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> v(1 + trial % 17);
    for (auto& x : v) x = n(rng);
    const auto e = vap::normalize(v);
    double sq = 0.0;
    for (double x : e.values()) sq += x * x;
    EXPECT_NEAR(std::sqrt(sq), 1.0, 1e-12);

    const auto twice = vap::normalize(e.values());
    for (std::size_t i = 0; i < v.size(); ++i) EXPECT_NEAR(twice[i], e[i], 1e-15);

    const double k = s(rng);
    std::vector<double> scaled(v);
    for (auto& x : scaled) x *= k;
    const auto es = vap::normalize(scaled);
    for (std::size_t i = 0; i < v.size(); ++i) EXPECT_NEAR(es[i], e[i], 1e-9);
  }
}

TEST(BoundingBox, InclusiveCorners) {
  const BoundingBox b(2, 3, 5, 3);
  EXPECT_EQ(b.width(), 4);
  EXPECT_EQ(b.height(), 1);
  EXPECT_TRUE(b.contains(5.0, 3.0));
  EXPECT_FALSE(b.contains(5.5, 3.0));
  EXPECT_TRUE(b.fits(6, 4));
  EXPECT_FALSE(b.fits(5, 4));
  EXPECT_THROW(BoundingBox(3, 0, 2, 0), OutOfBounds);
}

TEST(Mask, CountsAndGeometry) {
  Mask m(6, 4);
  EXPECT_TRUE(m.empty());
  EXPECT_FALSE(m.bounding_box().has_value());
  EXPECT_FALSE(m.centroid().has_value());
  m.set(1, 1);
  m.set(3, 2);
  EXPECT_EQ(m.count(), 2u);
  EXPECT_EQ(*m.bounding_box(), BoundingBox(1, 1, 3, 2));
  EXPECT_DOUBLE_EQ(m.centroid()->first, 2.0);
  EXPECT_DOUBLE_EQ(m.centroid()->second, 1.5);
  EXPECT_THROW(m.at(6, 0), OutOfBounds);
  EXPECT_THROW(Mask(0, 3), OutOfBounds);
}

TEST(Mask, FilledAndOverlap) {
  const auto a = Mask::filled(5, 5, BoundingBox(0, 0, 2, 2));
  const auto b = Mask::filled(5, 5, BoundingBox(2, 2, 4, 4));
  EXPECT_EQ(a.count(), 9u);
  EXPECT_EQ(a.overlap(b), 1u);
  EXPECT_THROW(a.overlap(Mask(4, 5)), DimensionMismatch);
  EXPECT_THROW(Mask::filled(5, 5, BoundingBox(3, 3, 5, 4)), OutOfBounds);
}

TEST(Proposal, CentroidFromMaskOrBox) {
  const auto e = Embedding::normalize({1.0, 0.0});
  const Proposal boxed(BoundingBox(0, 0, 4, 2), 0.5, e);
  EXPECT_DOUBLE_EQ(boxed.centroid().first, 2.0);
  EXPECT_DOUBLE_EQ(boxed.centroid().second, 1.0);

  Mask m(10, 10);
  m.set(1, 1);
  m.set(1, 2);
  const Proposal masked(BoundingBox(0, 0, 4, 4), 1.0, e, m);
  EXPECT_DOUBLE_EQ(masked.centroid().first, 1.0);
  EXPECT_DOUBLE_EQ(masked.centroid().second, 1.5);
}

TEST(Proposal, Invariants) {
  const auto e = Embedding::normalize({1.0});
  EXPECT_THROW(Proposal(BoundingBox(0, 0, 1, 1), 1.5, e), OutOfBounds);
  EXPECT_THROW(Proposal(BoundingBox(0, 0, 1, 1), -0.1, e), OutOfBounds);
  Mask far(10, 10);
  far.set(8, 8);
  EXPECT_THROW(Proposal(BoundingBox(0, 0, 1, 1), 0.5, e, far), OutOfBounds);
}

TEST(ReferenceSet, NeedsEqualDims) {
  EXPECT_THROW(ReferenceSet("o", "cup", {}), InvalidEmbedding);
  EXPECT_THROW(ReferenceSet("o", "cup", {Embedding::normalize({1.0}), Embedding::normalize({1.0, 0.0})}),
               DimensionMismatch);
  const ReferenceSet r("o", "cup", {Embedding::normalize({1.0, 1.0})});
  EXPECT_EQ(r.size(), 1u);
  EXPECT_EQ(r.dim(), 2u);
}

TEST(RasterImage, PixelAccess) {
  RasterImage img(3, 2, {1, 2, 3});
  EXPECT_EQ(img.at(2, 1), (Rgb{1, 2, 3}));
  img.set(0, 1, {9, 8, 7});
  EXPECT_EQ(img.bytes()[9], 9);
  EXPECT_THROW(img.at(3, 0), OutOfBounds);
  EXPECT_THROW(RasterImage(0, 1), OutOfBounds);
}
