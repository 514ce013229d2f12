#pragma once

#include <Eigen/Dense>
#include <cmath>

#include "discocal/detector.hpp"
#include "discocal/projection.hpp"
#include "discocal/uncertainty.hpp"

namespace oracles {

// Var(u_i | u_{i+1}) under the x-chain of the ring prior, obtained by fixing
// u_{i+1} (dropping its row and column) and inverting the remaining block.
inline double prior_conditional_variance(int n, double sigma) {
  const auto prior = discocal::prior_information(n, sigma);
  const Eigen::MatrixXd full(prior.omega);
  Eigen::MatrixXd chain(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) chain(i, j) = full(2 * i, 2 * j);
  const int fixed = 1, target = 0;
  Eigen::MatrixXd rest(n - 1, n - 1);
  for (int i = 0, a = 0; i < n; ++i) {
    if (i == fixed) continue;
    for (int j = 0, b = 0; j < n; ++j) {
      if (j == fixed) continue;
      rest(a, b++) = chain(i, j);
    }
    ++a;
  }
  const Eigen::MatrixXd cov = rest.inverse();
  return cov(target, target);
}

// Normalisation that makes the conditional variance equal sigma^2.
inline double normalisation_from_conditioning(int n) {
  const double var = prior_conditional_variance(n, 1.0);
  return discocal::kPriorZ / var;
}

// Ideal per-point information: rank one along the outward radial direction.
inline std::vector<Eigen::Matrix2d> ideal_infos(const discocal::Contour& c, double lambda) {
  const discocal::Point2 p = discocal::polygon_centroid(discocal::polygon_moments(c));
  std::vector<Eigen::Matrix2d> out;
  for (const auto& q : c) {
    const Eigen::Vector2d n = (q - p).normalized();
    out.push_back(lambda * n * n.transpose());
  }
  return out;
}

// Central differences of the polygon centroid with respect to every vertex coordinate.
inline discocal::Matrix2xX numeric_jacobian(discocal::Contour c, double h) {
  discocal::Matrix2xX J(2, 2 * c.size());
  for (size_t i = 0; i < c.size(); ++i)
    for (int k = 0; k < 2; ++k) {
      const double x0 = c[i](k);
      c[i](k) = x0 + h;
      const discocal::Point2 a = discocal::polygon_centroid(discocal::polygon_moments(c));
      c[i](k) = x0 - h;
      const discocal::Point2 b = discocal::polygon_centroid(discocal::polygon_moments(c));
      c[i](k) = x0;
      J.col(Eigen::Index(2 * i + k)) = (a - b) / (2 * h);
    }
  return J;
}

// Centre of the projected ellipse: conic C' = H^-T C H^-1, centre -A^-1 b.
inline discocal::Point2 conic_centre(const Eigen::Matrix3d& H, const discocal::Point2& c, double r) {
  Eigen::Matrix3d C;
  C << 1, 0, -c.x(), 0, 1, -c.y(), -c.x(), -c.y(), c.squaredNorm() - r * r;
  const Eigen::Matrix3d Hi = H.inverse();
  const Eigen::Matrix3d Q = Hi.transpose() * C * Hi;
  return -Q.topLeftCorner<2, 2>().ldlt().solve(Q.topRightCorner<2, 1>());
}

// Area-weighted mean of the mapped disk, polar midpoint rule with |det Df| by central differences.
inline discocal::Point2 interior_oracle(const discocal::Intrinsics& K, const discocal::Distortion& D,
                                        const discocal::Pose& E, const discocal::Point2& c, double r) {
  using discocal::Point2;
  using discocal::project_point;
  const int nr = 300, nt = 600;
  const double h = 1e-6;
  Eigen::Vector2d acc = Eigen::Vector2d::Zero();
  double w = 0.0;
  for (int i = 0; i < nr; ++i) {
    const double rr = r * (i + 0.5) / nr;
    for (int j = 0; j < nt; ++j) {
      const double a = 2 * M_PI * (j + 0.5) / nt;
      const Point2 p = c + rr * Point2(std::cos(a), std::sin(a));
      const Point2 fx = (project_point(K, D, E, p + Point2(h, 0)) - project_point(K, D, E, p - Point2(h, 0))) / (2 * h);
      const Point2 fy = (project_point(K, D, E, p + Point2(0, h)) - project_point(K, D, E, p - Point2(0, h))) / (2 * h);
      const double det = std::abs(fx.x() * fy.y() - fx.y() * fy.x()) * rr;
      acc += det * project_point(K, D, E, p);
      w += det;
    }
  }
  return acc / w;
}

// Mean position of the foreground pixels.
inline discocal::Point2 pixel_average(const discocal::BinaryImage& bin) {
  Eigen::Vector2d acc = Eigen::Vector2d::Zero();
  double n = 0;
  for (int v = 0; v < bin.height; ++v)
    for (int u = 0; u < bin.width; ++u)
      if (bin(u, v)) acc += Eigen::Vector2d(u, v), n += 1;
  return acc / n;
}

}  // namespace oracles
