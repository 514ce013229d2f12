#include <gtest/gtest.h>

#include <Eigen/Geometry>

#include "discocal/moments.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace discocal;

TEST(Moments, UnitSquare) {
  const Contour c{{0, 0}, {0, 1}, {1, 1}, {1, 0}};
  const auto m = polygon_moments(c);
  EXPECT_DOUBLE_EQ(m.m00, 1.0);
  EXPECT_DOUBLE_EQ(m.m10, 0.5);
  EXPECT_DOUBLE_EQ(m.m01, 0.5);
  EXPECT_EQ(polygon_centroid(m), Point2(0.5, 0.5));
}

TEST(Moments, OrientationNormalized) {
  Contour c{{0, 0}, {2, 0}, {0, 2}};
  const auto a = polygon_moments(c);
  std::reverse(c.begin(), c.end());
  const auto b = polygon_moments(c);
  EXPECT_DOUBLE_EQ(a.m00, 2.0);
  EXPECT_DOUBLE_EQ(b.m00, 2.0);
  EXPECT_NE(a.flipped, b.flipped);
  EXPECT_NEAR((polygon_centroid(a) - Point2(2.0 / 3, 2.0 / 3)).norm(), 0.0, 1e-15);
}

TEST(Moments, Errors) {
  EXPECT_THROW(polygon_moments(Contour{{0, 0}, {1, 1}}), InvalidArgument);
  EXPECT_THROW(polygon_moments(Contour{{0, 0}, {1, 1}, {2, 2}}), InvalidArgument);
  EXPECT_THROW(polygon_centroid(PolygonMoments{}), InvalidArgument);
}

TEST(Moments, TranslationAndRotationEquivariance) {
  std::mt19937 rng(5);
  for (int t = 0; t < 50; ++t) {
    const Contour c = testutil::random_polygon(rng, 40, 20, 0.2);
    const Point2 p = polygon_centroid(polygon_moments(c));
    const Point2 d(13.25, -7.5);
    const double th = 0.1 * t;
    const Eigen::Matrix2d R = Eigen::Rotation2D<double>(th).toRotationMatrix();
    Contour ct = c, cr = c;
    for (auto& q : ct) q += d;
    for (auto& q : cr) q = R * q;
    EXPECT_LT((polygon_centroid(polygon_moments(ct)) - (p + d)).norm(), 1e-10);
    EXPECT_LT((polygon_centroid(polygon_moments(cr)) - R * p).norm(), 1e-10);
  }
}

TEST(Moments, CompensatedLargeContour) {
  const Contour c = testutil::regular_polygon(40000, 1e5, 1e5, 50.0);
  const auto m = polygon_moments(c);
  const double exact = 0.5 * 40000 * 50.0 * 50.0 * std::sin(2 * M_PI / 40000);
  EXPECT_NEAR(m.m00 / exact, 1.0, 1e-10);
  EXPECT_LT((polygon_centroid(m) - Point2(1e5, 1e5)).norm(), 1e-8);
}

TEST(Moments, GreenCentroidMatchesPixelAverage) {
  std::mt19937 rng(21);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (int t = 0; t < 50; ++t) {
    const double cu = 60 + 5 * uni(rng), cv = 60 + 5 * uni(rng), a = 8 + 30 * uni(rng), b = a * (0.4 + 0.6 * uni(rng));
    const discocal::GrayImage img = t % 2 ? testutil::render_ellipse(cu, cv, a, b, M_PI * uni(rng))
                                          : testutil::render_shape(120, 120, [&, k = 6 + t % 7, ph = uni(rng)](double x, double y) {
                                              // convex regular k-gon as an intersection of half-planes
                                              for (int i = 0; i < k; ++i) {
                                                const double th = ph + 2 * M_PI * i / k;
                                                if ((x - cu) * std::cos(th) + (y - cv) * std::sin(th) > a * std::cos(M_PI / k))
                                                  return false;
                                              }
                                              return true;
                                            });
    const auto bin = threshold(img, ThresholdSpec::global(128));
    const auto cs = find_contours(bin);
    ASSERT_EQ(cs.size(), 1u);
    const Point2 g = polygon_centroid(polygon_moments(cs[0]));
    EXPECT_LT((g - oracles::pixel_average(bin)).norm(), 0.5 / std::sqrt(double(cs[0].size()))) << t;
  }
}
