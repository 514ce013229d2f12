#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "discocal/colormap.hpp"
#include "discocal/error.hpp"
#include "discocal/projection.hpp"
#include "discocal/uncertainty.hpp"

namespace discocal {

inline Point2 ray_point(double azimuth, double elevation) {
  return std::tan(elevation) * Point2(std::cos(azimuth), std::sin(azimuth));
}

// Rays on a polar grid: row j has elevation phi_max * j / (n_el - 1), column i
// azimuth 2 pi i / n_az. Points are on the normalised (undistorted) plane.
struct RayGrid {
  int n_az = 0;
  int n_el = 0;
  double phi_max = 0.0;
  std::vector<Point2> points;  // row-major, n_el x n_az

  const Point2& at(int j, int i) const { return points[size_t(j) * size_t(n_az) + size_t(i)]; }
};

// Largest normalised radius among the image pixels that have a preimage. When
// part of the border lies beyond the distortion fold, the reachable region
// extends to the fold radius.
inline double footprint_radius(const Intrinsics& K, const Distortion& D, int width, int height) {
  const double r_fold = D.monotone_radius();
  double r = 0.0;
  bool clipped = false;
  auto probe = [&](double u, double v) {
    Point2 pn;
    if (D.undistort(K.unapply({u, v}), pn))
      r = std::max(r, std::min(pn.norm(), r_fold));
    else
      clipped = true;
  };
  const int steps = 512;
  for (int i = 0; i <= steps; ++i) {
    const double a = double(i) / steps;
    probe(a * (width - 1), 0), probe(a * (width - 1), height - 1);
    probe(0, a * (height - 1)), probe(width - 1, a * (height - 1));
  }
  return clipped ? r_fold : r;
}

inline RayGrid ray_grid(const Intrinsics& K, const Distortion& D, int width, int height, int n_az = 41,
                        int n_el = 41) {
  if (n_az < 3 || n_el < 2) throw InvalidArgument("ray_grid: grid too small");
  if (width < 1 || height < 1) throw InvalidArgument("ray_grid: empty image");
  RayGrid g;
  g.n_az = n_az;
  g.n_el = n_el;
  // Slight overshoot so the outermost pixels interpolate rather than extrapolate.
  g.phi_max = std::atan(footprint_radius(K, D, width, height)) * 1.001;
  for (int j = 0; j < n_el; ++j)
    for (int i = 0; i < n_az; ++i) g.points.push_back(ray_point(2 * M_PI * i / n_az, g.phi_max * j / (n_el - 1)));
  return g;
}

// Pixel-position Jacobian w.r.t. (fx, fy, cx, cy[, eta], d1..d_nd) at a normalised point.
inline Eigen::Matrix<double, 2, Eigen::Dynamic> projection_jacobian(const Intrinsics& K, const Distortion& D,
                                                                    const Point2& p, bool skew) {
  const int nd = int(D.d.size());
  const int n = 4 + (skew ? 1 : 0) + nd;
  Eigen::Matrix<double, 2, Eigen::Dynamic> J = Eigen::Matrix<double, 2, Eigen::Dynamic>::Zero(2, n);
  const double x = p.x(), y = p.y(), s = p.squaredNorm(), k = D.k(s);
  J(0, 0) = k * x;
  J(1, 1) = k * y;
  J(0, 2) = 1.0;
  J(1, 3) = 1.0;
  int c = 4;
  if (skew) J(0, c++) = k * y;
  double si = s;
  for (int i = 0; i < nd; ++i, si *= s, ++c) {
    J(0, c) = (K.fx * x + K.eta * y) * si;
    J(1, c) = K.fy * y * si;
  }
  return J;
}

inline std::vector<Eigen::Matrix2d> propagate(const Intrinsics& K, const Distortion& D, const Eigen::MatrixXd& param_cov,
                                              const std::vector<Point2>& points, bool skew = false) {
  const Eigen::Index n = 4 + (skew ? 1 : 0) + Eigen::Index(D.d.size());
  if (param_cov.rows() != n || param_cov.cols() != n)
    throw InvalidArgument("propagate: parameter covariance has dimension " + std::to_string(param_cov.rows()) +
                          ", expected " + std::to_string(n));
  std::vector<Eigen::Matrix2d> out;
  out.reserve(points.size());
  for (const auto& p : points) {
    const auto J = projection_jacobian(K, D, p, skew);
    out.push_back(J * param_cov * J.transpose());
  }
  return out;
}

struct UncertaintyMap {
  int width = 0;
  int height = 0;
  std::vector<double> kxx, kxy, kyy;  // px^2, NaN where no ray reaches the pixel
  std::vector<double> scalar;         // px

  double coverage() const {
    size_t n = 0;
    for (double v : scalar) n += std::isfinite(v) ? 1 : 0;
    return scalar.empty() ? 0.0 : double(n) / double(scalar.size());
  }
};

// Bilinear interpolation in (azimuth, elevation) of grid covariances to every pixel.
inline UncertaintyMap render_map(const Intrinsics& K, const Distortion& D, const RayGrid& grid,
                                 const std::vector<Eigen::Matrix2d>& cov, int width, int height) {
  if (cov.size() != grid.points.size()) throw InvalidArgument("render_map: one covariance per grid point required");
  if (grid.n_az < 3 || grid.n_el < 2) throw InvalidArgument("render_map: grid too sparse");
  UncertaintyMap m;
  m.width = width;
  m.height = height;
  const size_t N = size_t(width) * size_t(height);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  m.kxx.assign(N, nan), m.kxy.assign(N, nan), m.kyy.assign(N, nan), m.scalar.assign(N, nan);
  const double r_fold = D.monotone_radius();
  auto C = [&](int j, int i) -> const Eigen::Matrix2d& {
    return cov[size_t(j) * size_t(grid.n_az) + size_t((i + grid.n_az) % grid.n_az)];
  };
  for (int v = 0; v < height; ++v)
    for (int u = 0; u < width; ++u) {
      Point2 pn;
      if (!D.undistort(K.unapply({double(u), double(v)}), pn) || pn.norm() >= r_fold) continue;
      const double phi = std::atan(pn.norm());
      if (phi > grid.phi_max) continue;
      double th = std::atan2(pn.y(), pn.x());
      if (th < 0) th += 2 * M_PI;
      const double fj = phi / grid.phi_max * (grid.n_el - 1), fi = th / (2 * M_PI) * grid.n_az;
      const int j0 = std::min(int(fj), grid.n_el - 2), i0 = std::min(int(fi), grid.n_az - 1);
      const double a = fj - j0, b = fi - i0;
      const Eigen::Matrix2d S = (1 - a) * ((1 - b) * C(j0, i0) + b * C(j0, i0 + 1)) +
                                a * ((1 - b) * C(j0 + 1, i0) + b * C(j0 + 1, i0 + 1));
      const size_t idx = size_t(v) * size_t(width) + size_t(u);
      m.kxx[idx] = S(0, 0);
      m.kxy[idx] = S(0, 1);
      m.kyy[idx] = S(1, 1);
      m.scalar[idx] = scalar_uncertainty(S);
    }
  return m;
}

inline UncertaintyMap uncertainty_map(const Intrinsics& K, const Distortion& D, const Eigen::MatrixXd& param_cov,
                                      int width, int height, bool skew = false, int n_az = 41, int n_el = 41) {
  const RayGrid g = ray_grid(K, D, width, height, n_az, n_el);
  return render_map(K, D, g, propagate(K, D, param_cov, g.points, skew), width, height);
}

inline double mean_uncertainty(const UncertaintyMap& m) {
  double acc = 0.0;
  size_t n = 0;
  for (double v : m.scalar)
    if (std::isfinite(v)) acc += v, ++n;
  if (n == 0) throw InvalidArgument("mean_uncertainty: empty map");
  return acc / double(n);
}

struct Heatmap {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;
  double min = 0.0;
  double max = 0.0;
};

// Linear colour scale over the finite scalar range; unreachable pixels are black.
inline Heatmap heatmap(const UncertaintyMap& m) {
  Heatmap h;
  h.width = m.width;
  h.height = m.height;
  h.min = std::numeric_limits<double>::infinity();
  h.max = -std::numeric_limits<double>::infinity();
  for (double v : m.scalar)
    if (std::isfinite(v)) h.min = std::min(h.min, v), h.max = std::max(h.max, v);
  if (!std::isfinite(h.min)) h.min = h.max = 0.0;
  const double span = h.max > h.min ? h.max - h.min : 1.0;
  h.rgb.assign(m.scalar.size() * 3, 0);
  for (size_t i = 0; i < m.scalar.size(); ++i) {
    if (!std::isfinite(m.scalar[i])) continue;
    const int c = std::clamp(int(std::lround(255.0 * (m.scalar[i] - h.min) / span)), 0, 255);
    for (int ch = 0; ch < 3; ++ch) h.rgb[3 * i + size_t(ch)] = kColormap[size_t(c)][size_t(ch)];
  }
  return h;
}

// White dots of radius 2 px at the given image points.
inline void overlay_points(Heatmap& h, const std::vector<Point2>& pts) {
  for (const auto& p : pts) {
    const int cu = int(std::lround(p.x())), cv = int(std::lround(p.y()));
    for (int dv = -2; dv <= 2; ++dv)
      for (int du = -2; du <= 2; ++du) {
        const int u = cu + du, v = cv + dv;
        if (du * du + dv * dv > 5 || u < 0 || v < 0 || u >= h.width || v >= h.height) continue;
        for (int ch = 0; ch < 3; ++ch) h.rgb[3 * (size_t(v) * size_t(h.width) + size_t(u)) + size_t(ch)] = 255;
      }
  }
}

}  // namespace discocal
