#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <vector>

#include "discocal/error.hpp"
#include "discocal/moments.hpp"

namespace discocal {

struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  double eta = 0.0;  // skew

  Eigen::Matrix3d matrix() const {
    Eigen::Matrix3d K;
    K << fx, eta, cx, 0, fy, cy, 0, 0, 1;
    return K;
  }
  Point2 apply(const Point2& pd) const { return {fx * pd.x() + eta * pd.y() + cx, fy * pd.y() + cy}; }
  Point2 unapply(const Point2& px) const {
    const double y = (px.y() - cy) / fy;
    return {(px.x() - cx - eta * y) / fx, y};
  }
};

// Radial model k(s) = 1 + d1 s + d2 s^2 + ..., s = x^2 + y^2 on the normalised plane.
struct Distortion {
  std::vector<double> d;

  double k(double s) const {
    double acc = 0.0;
    for (auto it = d.rbegin(); it != d.rend(); ++it) acc = (acc + *it) * s;
    return 1.0 + acc;
  }
  // d/dr of r k(r^2), positive while the map is monotone in radius.
  double radial_slope(double r) const {
    const double s = r * r;
    double acc = 1.0, sp = s;
    for (size_t i = 0; i < d.size(); ++i, sp *= s) acc += double(2 * i + 3) * d[i] * sp;
    return acc;
  }
  Point2 apply(const Point2& pn) const { return k(pn.squaredNorm()) * pn; }

  // Inverse radial map by Newton iteration; false when no monotone preimage exists.
  bool undistort(const Point2& pd, Point2& pn) const {
    const double rd = pd.norm();
    if (rd == 0.0) {
      pn = pd;
      return true;
    }
    double r = rd;
    for (int it = 0; it < 50; ++it) {
      const double f = r * k(r * r) - rd;
      const double df = radial_slope(r);
      if (df <= 0.0) return false;
      const double step = f / df;
      r -= step;
      if (r < 0.0) r = 0.5 * (r + step);
      if (std::abs(step) < 1e-15 * std::max(1.0, r)) break;
    }
    if (radial_slope(r) <= 0.0 || std::abs(r * k(r * r) - rd) > 1e-12 * std::max(1.0, rd)) return false;
    pn = pd * (r / rd);
    return true;
  }

  // Largest radius from 0 over which r k(r^2) increases, capped at r_cap.
  double monotone_radius(double r_cap = 10.0) const {
    const int steps = 2000;
    for (int i = 1; i <= steps; ++i) {
      const double r = r_cap * i / steps;
      if (radial_slope(r) <= 0.0 || k(r * r) <= 0.0) return r_cap * (i - 1) / steps;
    }
    return r_cap;
  }
};

// Axis-angle rotation and translation, target frame to camera frame.
struct Pose {
  Eigen::Vector3d rvec = Eigen::Vector3d::Zero();
  Eigen::Vector3d t = Eigen::Vector3d(0, 0, 1);

  Eigen::Matrix3d R() const {
    const double th = rvec.norm();
    if (th < 1e-300) return Eigen::Matrix3d::Identity();
    return Eigen::AngleAxisd(th, rvec / th).toRotationMatrix();
  }
  static Pose from_rotation(const Eigen::Matrix3d& R, const Eigen::Vector3d& t) {
    const Eigen::AngleAxisd aa(R);
    return {aa.angle() * aa.axis(), t};
  }
};

struct TargetSpec {
  int rows = 3;
  int cols = 4;
  double spacing = 1.0;
  double radius = 0.35;

  int count() const { return rows * cols; }
  // Row-major: index k = row * cols + col.
  Point2 center(int k) const { return {(k % cols) * spacing, (k / cols) * spacing}; }
  void validate() const {
    if (rows < 1 || cols < 1 || rows * cols < 4) throw InvalidArgument("target must have at least 4 circles");
    if (!(spacing > 0.0) || !(radius > 0.0) || !(radius < 0.5 * spacing))
      throw InvalidArgument("target radius must be positive and below spacing/2");
  }
};

// Target plane point to normalised image plane.
inline Point2 to_normalized(const Pose& E, const Eigen::Matrix3d& R, const Point2& pw) {
  const Eigen::Vector3d pc = R.col(0) * pw.x() + R.col(1) * pw.y() + E.t;
  if (!(pc.z() > 0.0)) throw InvalidArgument("point behind camera");
  return {pc.x() / pc.z(), pc.y() / pc.z()};
}

inline Point2 project_point(const Intrinsics& K, const Distortion& D, const Pose& E, const Point2& pw) {
  return K.apply(D.apply(to_normalized(E, E.R(), pw)));
}

inline Eigen::Matrix3d homography(const Intrinsics& K, const Pose& E) {
  const Eigen::Matrix3d R = E.R();
  Eigen::Matrix3d M;
  M.col(0) = R.col(0);
  M.col(1) = R.col(1);
  M.col(2) = E.t;
  Eigen::Matrix3d H = K.matrix() * M;
  if (std::abs(H(2, 2)) < 1e-300) throw InvalidArgument("homography: target plane passes through camera centre");
  return H / H(2, 2);
}

namespace detail {

struct AngleTable {
  std::vector<double> c, s;
};

// Shared cos/sin tables keyed by sample count.
inline const AngleTable& angle_table(int m) {
  static std::mutex mu;
  static std::map<int, std::unique_ptr<AngleTable>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto& slot = cache[m];
  if (!slot) {
    slot = std::make_unique<AngleTable>();
    slot->c.resize(size_t(m));
    slot->s.resize(size_t(m));
    for (int j = 0; j < m; ++j) {
      const double a = 2.0 * M_PI * j / m;
      slot->c[size_t(j)] = std::cos(a);
      slot->s[size_t(j)] = std::sin(a);
    }
  }
  return *slot;
}

}  // namespace detail

// Centroid of the image of a target circle under the full projection. The
// boundary is sampled at 2M uniform angles (fixed phase); polygon centroids of
// the M- and 2M-gons are combined by Richardson extrapolation, which cancels
// the O(1/M^2) polygon error.
inline Point2 unbiased_circle_centroid(const Intrinsics& K, const Distortion& D, const Pose& E, const Point2& center,
                                       double radius, int M = 2000) {
  if (M < 8) throw InvalidArgument("unbiased_circle_centroid: M too small");
  const auto& tab = detail::angle_table(2 * M);
  const Eigen::Matrix3d R = E.R();
  const Eigen::Vector3d p0 = R.col(0) * center.x() + R.col(1) * center.y() + E.t;
  const Eigen::Vector3d a = radius * R.col(0), b = radius * R.col(1);
  auto image = [&](int j) {
    const Eigen::Vector3d pc = p0 + a * tab.c[size_t(j)] + b * tab.s[size_t(j)];
    if (!(pc.z() > 0.0)) throw InvalidArgument("point behind camera");
    return K.apply(D.apply(Point2(pc.x() / pc.z(), pc.y() / pc.z())));
  };
  // Shoelace moments of the 2M-gon and of its even-vertex M-gon, relative to vertex 0.
  const Point2 o = image(0);
  double af = 0, xf = 0, yf = 0, ac = 0, xc = 0, yc = 0;
  Point2 prev = Point2::Zero(), prev_even = Point2::Zero();
  for (int j = 1; j <= 2 * M; ++j) {
    const Point2 q = j == 2 * M ? Point2::Zero() : Point2(image(j) - o);
    const double cf = prev.x() * q.y() - q.x() * prev.y();
    af += cf, xf += cf * (prev.x() + q.x()), yf += cf * (prev.y() + q.y());
    if (j % 2 == 0) {
      const double cc = prev_even.x() * q.y() - q.x() * prev_even.y();
      ac += cc, xc += cc * (prev_even.x() + q.x()), yc += cc * (prev_even.y() + q.y());
      prev_even = q;
    }
    prev = q;
  }
  if (std::abs(af) < 2e-6) throw InvalidArgument("unbiased_circle_centroid: degenerate projection");
  const Point2 cf(xf / (3 * af), yf / (3 * af)), cc(xc / (3 * ac), yc / (3 * ac));
  return o + (4.0 * cf - cc) / 3.0;
}

}  // namespace discocal
