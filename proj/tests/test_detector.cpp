#include <gtest/gtest.h>

#include <Eigen/Geometry>
#include <random>

#include "discocal/detector.hpp"
#include "test_util.hpp"

using namespace discocal;

namespace {

BinaryImage from_mask(int w, int h, const std::function<bool(int, int)>& f) {
  BinaryImage b(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) b(x, y) = f(x, y) ? 1 : 0;
  return b;
}

// 4 x 3 grid of dark disks, spacing 60 px, radius 20 px, origin (70, 60).
GrayImage grid_image(double rot = 0.0, int skip = -1) {
  const Eigen::Rotation2D<double> R(rot);
  std::vector<Point2> centres;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 4; ++c) {
      if (r * 4 + c == skip) continue;
      centres.push_back(Point2(160, 120) + R * Point2((c - 1.5) * 60, (r - 1) * 60));
    }
  return testutil::render_shape(320, 240, [&](double x, double y) {
    for (const auto& c : centres)
      if ((Point2(x, y) - c).squaredNorm() < 400) return true;
    return false;
  });
}

std::vector<Point2> grid_points(double rot, double sx = 1.0) {
  const Eigen::Rotation2D<double> R(rot);
  std::vector<Point2> out;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 4; ++c) out.push_back(Point2(160, 120) + R * Point2(sx * (c - 1.5) * 60, (r - 1) * 60));
  return out;
}

}  // namespace

TEST(FindContours, FilledSquareRing) {
  const auto b = from_mask(7, 7, [](int x, int y) { return x >= 2 && x <= 4 && y >= 2 && y <= 4; });
  const auto cs = find_contours(b);
  ASSERT_EQ(cs.size(), 1u);
  EXPECT_EQ(cs[0].size(), 8u);
  EXPECT_DOUBLE_EQ(polygon_moments(cs[0]).m00, 4.0);
}

TEST(FindContours, TwoSquaresAndHoleIgnored) {
  const auto b = from_mask(20, 10, [](int x, int y) {
    const bool a = x >= 1 && x <= 6 && y >= 1 && y <= 6 && !(x == 3 && y == 3);
    const bool c = x >= 10 && x <= 12 && y >= 2 && y <= 4;
    return a || c;
  });
  const auto cs = find_contours(b);
  ASSERT_EQ(cs.size(), 2u);
  EXPECT_EQ(cs[0].size(), 20u);
  EXPECT_EQ(cs[1].size(), 8u);
}

TEST(FindContours, EightConnectedAndClosed) {
  std::mt19937 rng(8);
  std::uniform_real_distribution<double> u(0, 1);
  BinaryImage b(60, 60);
  for (auto& x : b.data) x = u(rng) < 0.45;
  for (const auto& c : find_contours(b)) {
    for (size_t i = 0; i < c.size(); ++i) {
      const Point2 d = c[(i + 1) % c.size()] - c[i];
      EXPECT_LE(d.cwiseAbs().maxCoeff(), 1.0);
    }
  }
}

TEST(FindContours, RenderedGridTwelveBlobs) {
  const auto img = grid_image();
  const auto cs = find_contours(threshold(img, ThresholdSpec::global(128)));
  ASSERT_EQ(cs.size(), 12u);
  const auto grad = gradient(img);
  const auto truth = grid_points(0.0);
  for (const auto& c : cs) {
    const auto m = measure_centroid(img, grad, c);
    double best = 1e9;
    for (const auto& t : truth) best = std::min(best, (t - m.p).norm());
    EXPECT_LT(best, 0.5);
  }
}

TEST(Moments, RasterizedDiskAreaAndCentroid) {
  const auto img = testutil::render_disk(100, 100, 50, 50, 20);
  const auto cs = find_contours(threshold(img, ThresholdSpec::global(128)));
  ASSERT_EQ(cs.size(), 1u);
  const auto m = polygon_moments(cs[0]);
  int count = 0;
  Point2 mean = Point2::Zero();
  for (int v = 0; v < 100; ++v)
    for (int u = 0; u < 100; ++u)
      if (img(u, v) < 128) ++count, mean += Point2(u, v);
  mean /= count;
  // Pick's theorem on the lattice polygon through boundary pixel centres.
  EXPECT_NEAR(m.m00, count - cs[0].size() / 2.0 - 1.0, 1e-9);
  EXPECT_NEAR(m.m00 / (M_PI * 400), 1.0, 0.1);
  EXPECT_LT((polygon_centroid(m) - mean).norm(), 0.05);
  EXPECT_LT((polygon_centroid(m) - Point2(50, 50)).norm(), 0.05);
}

TEST(EllipseTest, AcceptsEllipseRejectsSquareAndTiny) {
  const auto ell = testutil::render_shape(120, 100, [](double x, double y) {
    const double a = (x - 60) / 30, b = (y - 50) / 20;
    return a * a + b * b < 1;
  });
  const auto ce = find_contours(threshold(ell, ThresholdSpec::global(128)));
  ASSERT_EQ(ce.size(), 1u);
  EXPECT_TRUE(ellipse_test(ce[0]));
  const auto fit = fit_ellipse(ce[0]);
  EXPECT_NEAR(fit.semi_major, 30, 0.7);
  EXPECT_NEAR(fit.semi_minor, 20, 0.7);

  const auto sq = testutil::render_shape(100, 100, [](double x, double y) {
    return std::abs(x - 50) < 15 && std::abs(y - 50) < 15;
  });
  const auto cq = find_contours(threshold(sq, ThresholdSpec::global(128)));
  ASSERT_EQ(cq.size(), 1u);
  EXPECT_FALSE(ellipse_test(cq[0]));
  EXPECT_FALSE(ellipse_test(Contour{{0, 0}, {1, 0}, {2, 1}, {1, 2}, {0, 1}}));
}

TEST(Detect, CleanGridTwelveOfTwelve) {
  const auto img = grid_image(0.1);
  TargetSpec target{3, 4, 60, 20};
  const auto g = detect(img, target);
  ASSERT_EQ(g.measurements.size(), 12u);
  const auto truth = grid_points(0.1);
  for (int k = 0; k < 12; ++k) EXPECT_LT((g.measurements[size_t(k)].p - truth[size_t(k)]).norm(), 0.1) << k;
  const auto again = detect(img, target);
  for (int k = 0; k < 12; ++k) EXPECT_EQ(g.measurements[size_t(k)].p, again.measurements[size_t(k)].p);
}

TEST(Detect, MissingCircleFails) {
  EXPECT_THROW(detect(grid_image(0.0, 5), TargetSpec{3, 4, 60, 20}), DetectionError);
}

TEST(Detect, SupersetOfThresholdsNeverIncreasesEpsilon) {
  const auto img = gaussian_blur(grid_image(0.2), 1.5);
  TargetSpec target{3, 4, 60, 20};
  DetectParams few;
  few.thresholds = {ThresholdSpec::global(120), ThresholdSpec::global(160)};
  DetectParams many;
  const auto a = detect(img, target, few), b = detect(img, target, many);
  for (int k = 0; k < 12; ++k) EXPECT_LE(b.measurements[size_t(k)].epsilon, a.measurements[size_t(k)].epsilon);
}

TEST(OrderGrid, IdentityOnAxisAligned) {
  const auto p = order_grid(grid_points(0.0), 3, 4);
  for (int k = 0; k < 12; ++k) EXPECT_EQ(p[size_t(k)], k);
}

TEST(OrderGrid, RotatedInPlane) {
  const auto pts = grid_points(30 * M_PI / 180);
  std::vector<Point2> shuffled = pts;
  std::vector<int> idx(12);
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), std::mt19937(3));
  for (int k = 0; k < 12; ++k) shuffled[size_t(k)] = pts[size_t(idx[size_t(k)])];
  const auto p = order_grid(shuffled, 3, 4);
  for (int k = 0; k < 12; ++k) EXPECT_EQ(idx[size_t(p[size_t(k)])], k);
}

TEST(OrderGrid, HalfTurnResolvedDeterministically) {
  const auto a = grid_points(M_PI);
  const auto p = order_grid(a, 3, 4);
  // Either labelling is consistent; the one starting at the smaller first centroid wins.
  for (int k = 0; k < 12; ++k) EXPECT_EQ(p[size_t(k)], 11 - k);
}

TEST(OrderGrid, MergedRowsFail) {
  // Rows squeezed to 3 px apart with 1 px jitter, as under grazing foreshortening.
  std::vector<Point2> pts;
  const double jitter[] = {1, -1, 0.5, -0.5, -1, 1, 0.8, -0.2, 0.3, -0.9, 1, -0.6};
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 4; ++c) pts.emplace_back(c * 40.0, r * 3.0 + jitter[r * 4 + c]);
  EXPECT_THROW(order_grid(pts, 3, 4), DetectionError);
}
