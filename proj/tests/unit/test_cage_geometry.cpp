#include <gtest/gtest.h>

#include <numbers>
#include <random>

#include "builders.hpp"
#include "cagemap/cage_geometry.hpp"
#include "cagemap/errors.hpp"
#include "oracles.hpp"

using namespace cagemap;

TEST(AreaBounds, CircularInterior) {
  const auto a = area_bounds(10, 10, CageType::circular, BorderStatus::interior);
  EXPECT_NEAR(a.estimate, 78.5398, 1e-4);
  EXPECT_EQ(a.min_area, a.estimate);
  EXPECT_EQ(a.max_area, a.estimate);
}

TEST(AreaBounds, Square) {
  for (auto border : {BorderStatus::interior, BorderStatus::edge, BorderStatus::corner}) {
    const auto a = area_bounds(4, 2, CageType::square, border);
    EXPECT_DOUBLE_EQ(a.estimate, 6.0);
    EXPECT_DOUBLE_EQ(a.min_area, 4.0);
    EXPECT_DOUBLE_EQ(a.max_area, 8.0);
  }
}

TEST(AreaBounds, CircularOnTheBorder) {
  for (auto border : {BorderStatus::edge, BorderStatus::corner}) {
    const auto a = area_bounds(10, 10, CageType::circular, border);
    EXPECT_DOUBLE_EQ(a.min_area, 50.0);
    EXPECT_NEAR(a.max_area, 78.5398, 1e-4);
    EXPECT_NEAR(a.estimate, 64.2699, 1e-4);
  }
}

TEST(AreaBounds, Errors) {
  EXPECT_THROW(area_bounds(1, 1, CageType::other, BorderStatus::interior), UnsupportedTypeError);
  EXPECT_THROW(area_bounds(0, 1, CageType::square, BorderStatus::interior), ArgumentError);
  EXPECT_THROW(area_bounds(1, -1, CageType::circular, BorderStatus::interior), ArgumentError);
}

TEST(AreaBounds, OrderingScalingAndSymmetry) {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> dim(0.1, 80.0);
  for (int i = 0; i < 5000; ++i) {
    const double w = dim(gen), h = dim(gen), s = dim(gen) / 10.0;
    for (auto type : {CageType::circular, CageType::square}) {
      for (auto border : {BorderStatus::interior, BorderStatus::edge, BorderStatus::corner}) {
        const auto a = area_bounds(w, h, type, border);
        ASSERT_GT(a.min_area, 0.0);
        ASSERT_LE(a.min_area, a.estimate);
        ASSERT_LE(a.estimate, a.max_area);
        ASSERT_LE(a.max_area / a.min_area, 2.0 + 1e-12);
        const auto b = area_bounds(h, w, type, border);
        ASSERT_DOUBLE_EQ(a.estimate, b.estimate);
        ASSERT_DOUBLE_EQ(a.min_area, b.min_area);
        ASSERT_DOUBLE_EQ(a.max_area, b.max_area);
        const auto c = area_bounds(w * s, h * s, type, border);
        ASSERT_NEAR(c.estimate, a.estimate * s * s, 1e-9 * c.estimate);
        ASSERT_NEAR(c.min_area, a.min_area * s * s, 1e-9 * c.min_area);
        ASSERT_NEAR(c.max_area, a.max_area * s * s, 1e-9 * c.max_area);
      }
    }
  }
}

TEST(AreaBounds, RotatedSquaresStayWithinBounds) {
  std::mt19937_64 gen(9);
  std::uniform_real_distribution<double> angle(0.0, std::numbers::pi / 2);
  std::uniform_real_distribution<double> side(1.0, 40.0);
  for (int i = 0; i < 20000; ++i) {
    const auto poly = cagemap::test::rotated_square(side(gen), angle(gen));
    const GeoRect bb = cagemap::test::bounds_of(poly);
    const double area = cagemap::test::shoelace(poly);
    const auto a = area_bounds(bb, CageType::square, BorderStatus::interior);
    ASSERT_GE(area, a.min_area * (1 - 1e-12));
    ASSERT_LE(area, a.max_area * (1 + 1e-12));
  }
}

TEST(AreaBounds, ClippedEllipsesStayWithinBounds) {
  std::mt19937_64 gen(10);
  std::uniform_real_distribution<double> axis(2.0, 30.0);
  std::uniform_real_distribution<double> frac(0.0, 0.98);
  for (int i = 0; i < 20000; ++i) {
    const double a = axis(gen), b = axis(gen);
    const auto e = i % 2 ? cagemap::test::edge_clipped_ellipse(a, b, frac(gen) * a)
                         : cagemap::test::corner_clipped_ellipse(a, b, frac(gen) * a / 1.5, frac(gen) * b / 1.5);
    const auto bounds = area_bounds(e.width, e.height, CageType::circular, i % 2 ? BorderStatus::edge : BorderStatus::corner);
    ASSERT_GE(e.area, bounds.min_area * (1 - 1e-9));
    ASSERT_LE(e.area, bounds.max_area * (1 + 1e-9));
  }
}

TEST(BorderStatus, FromFrame) {
  const GeoRect frame{0, 0, 100, 100};
  EXPECT_EQ(border_status({10, 10, 20, 20}, frame), BorderStatus::interior);
  EXPECT_EQ(border_status({0, 10, 20, 20}, frame), BorderStatus::edge);
  EXPECT_EQ(border_status({90, 10, 100, 20}, frame), BorderStatus::edge);
  EXPECT_EQ(border_status({0, 0, 20, 20}, frame), BorderStatus::corner);
  EXPECT_EQ(border_status({80, 90, 100.0000005, 100}, frame), BorderStatus::corner);
  EXPECT_EQ(border_status({0.00001, 10, 20, 20}, frame), BorderStatus::interior);

  Detection d = cagemap::test::det("a", 0, 0, 10, 10);
  EXPECT_EQ(border_status(d), BorderStatus::interior);
  d.image_frame = frame;
  EXPECT_EQ(border_status(d), BorderStatus::corner);
  EXPECT_DOUBLE_EQ(detection_area(d).min_area, 50.0);
}

TEST(MeanCageArea, Examples) {
  const std::vector<double> two = {50, 88};
  EXPECT_DOUBLE_EQ(mean_cage_area(two), 69.0);
  const std::vector<double> one = {69};
  EXPECT_DOUBLE_EQ(mean_cage_area(one), 69.0);
  EXPECT_THROW(mean_cage_area({}), ArgumentError);
}
