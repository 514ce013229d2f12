#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <vector>

#include "discocal/error.hpp"

namespace discocal {

using Point2 = Eigen::Vector2d;

// Closed polygon; the last point connects back to the first.
using Contour = std::vector<Point2>;

struct PolygonMoments {
  double m00 = 0.0;
  double m10 = 0.0;
  double m01 = 0.0;
  bool flipped = false;  // input winding was reversed to make m00 positive
};

namespace detail {

struct KahanSum {
  double sum = 0.0;
  double c = 0.0;
  void add(double x) {
    const double y = x - c;
    const double t = sum + y;
    c = (t - sum) - y;
    sum = t;
  }
};

}  // namespace detail

// Green-theorem moments. Accumulates relative to the first vertex to keep the
// cross terms small, then shifts back. Compensated summation above 1e4 points.
inline PolygonMoments polygon_moments(const Contour& c) {
  const size_t n = c.size();
  if (n < 3) throw InvalidArgument("polygon_moments: need at least 3 points");
  const Point2 o = c[0];
  detail::KahanSum s0, s1, s2;
  double a0 = 0.0, a1 = 0.0, a2 = 0.0;
  const bool kahan = n > 10000;
  for (size_t i = 0; i < n; ++i) {
    const Point2 p = c[i] - o;
    const Point2 q = c[(i + 1) % n] - o;
    const double cr = q.x() * p.y() - p.x() * q.y();
    const double t1 = cr * (q.x() + p.x());
    const double t2 = cr * (q.y() + p.y());
    if (kahan) {
      s0.add(cr);
      s1.add(t1);
      s2.add(t2);
    } else {
      a0 += cr;
      a1 += t1;
      a2 += t2;
    }
  }
  if (kahan) {
    a0 = s0.sum;
    a1 = s1.sum;
    a2 = s2.sum;
  }
  PolygonMoments m;
  m.m00 = 0.5 * a0;
  if (std::abs(m.m00) < 1e-9) throw InvalidArgument("polygon_moments: degenerate polygon");
  const double m10 = a1 / 6.0, m01 = a2 / 6.0;
  m.m10 = m10 + o.x() * m.m00;
  m.m01 = m01 + o.y() * m.m00;
  if (m.m00 < 0.0) {
    m.m00 = -m.m00;
    m.m10 = -m.m10;
    m.m01 = -m.m01;
    m.flipped = true;
  }
  return m;
}

inline Point2 polygon_centroid(const PolygonMoments& m) {
  if (std::abs(m.m00) < 1e-9) throw InvalidArgument("polygon_centroid: degenerate moments");
  return {m.m10 / m.m00, m.m01 / m.m00};
}

// Reverses the winding in place when the signed area is negative.
inline void normalize_orientation(Contour& c) {
  if (polygon_moments(c).flipped) std::reverse(c.begin(), c.end());
}

}  // namespace discocal
