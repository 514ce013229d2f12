#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "discocal/error.hpp"
#include "discocal/image.hpp"
#include "discocal/moments.hpp"
#include "discocal/projection.hpp"
#include "discocal/uncertainty.hpp"

namespace discocal {

struct EllipseParams {
  double fit_tol = 0.02;      // RMS Sampson distance relative to mean semi-axis
  double fit_quant = 0.35;    // px allowance for pixel-centre quantisation of the contour
  double ratio_max = 8.0;
  double area_min = 30.0;     // px^2
  double area_max_frac = 0.25;  // of image area
};

struct DetectParams {
  std::vector<ThresholdSpec> thresholds = default_thresholds();
  UncertaintyParams uncertainty;
  EllipseParams ellipse;
  double dedupe_factor = 0.3;
  bool use_closing = true;

  static std::vector<ThresholdSpec> default_thresholds() {
    std::vector<ThresholdSpec> out;
    for (int t = 100; t <= 200; t += 10) out.push_back(ThresholdSpec::global(t));
    for (int b : {31, 63})
      for (double c : {5.0, 10.0}) out.push_back(ThresholdSpec::adaptive(b, c));
    return out;
  }
};

struct BlobCandidate {
  Contour contour;
  CentroidMeasurement measurement;
  ThresholdSpec threshold;
};

struct DetectedGrid {
  int rows = 0;
  int cols = 0;
  int width = 0;  // source image size, 0 when unknown
  int height = 0;
  std::vector<CentroidMeasurement> measurements;  // row-major, aligned with TargetSpec::center
  std::vector<ThresholdSpec> thresholds;
  std::vector<int> contour_sizes;
};

struct EllipseFit {
  bool ok = false;
  Eigen::Matrix<double, 6, 1> conic;  // a x^2 + b xy + c y^2 + d x + e y + f, pixel coordinates
  Point2 center = Point2::Zero();
  double semi_major = 0.0;
  double semi_minor = 0.0;
  double rms = 0.0;  // RMS Sampson distance, px
};

// Outer boundaries of 8-connected foreground components, traced through pixel
// centres by Moore-neighbour following. Holes are ignored.
inline std::vector<Contour> find_contours(const BinaryImage& bin) {
  const int w = bin.width, h = bin.height;
  std::vector<int> label(size_t(w) * size_t(h), 0);
  std::vector<Contour> out;
  static constexpr std::array<int, 8> dx{1, 1, 0, -1, -1, -1, 0, 1};
  static constexpr std::array<int, 8> dy{0, 1, 1, 1, 0, -1, -1, -1};
  std::vector<int> stack;
  int next_label = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!bin(x, y) || label[size_t(y) * w + x]) continue;
      const int lab = ++next_label;
      stack.assign(1, y * w + x);
      label[size_t(y) * w + x] = lab;
      while (!stack.empty()) {
        const int p = stack.back();
        stack.pop_back();
        const int px = p % w, py = p / w;
        for (int k = 0; k < 8; ++k) {
          const int qx = px + dx[k], qy = py + dy[k];
          if (bin.fg(qx, qy) && !label[size_t(qy) * w + qx]) {
            label[size_t(qy) * w + qx] = lab;
            stack.push_back(qy * w + qx);
          }
        }
      }
      // (x, y) is the first raster pixel of the component, so its west neighbour is background.
      Contour c;
      c.emplace_back(x, y);
      int cx = x, cy = y, back = 4;  // direction index pointing to the backtrack pixel
      int first_dir = -1;
      for (size_t guard = 0; guard < 4 * label.size() + 8; ++guard) {
        int found = -1;
        for (int i = 1; i <= 8; ++i) {
          const int k = (back + i) % 8;
          if (bin.fg(cx + dx[k], cy + dy[k])) {
            found = k;
            break;
          }
        }
        if (found < 0) break;  // isolated pixel
        if (cx == x && cy == y) {
          if (first_dir < 0)
            first_dir = found;
          else if (found == first_dir) {
            c.pop_back();  // start was appended again on arrival
            break;
          }
        }
        cx += dx[found];
        cy += dy[found];
        // Backtrack: the neighbour scanned just before `found`, seen from the new pixel.
        const int prev = (found + 7) % 8;
        const int bx = cx - dx[found] + dx[prev], by = cy - dy[found] + dy[prev];
        for (int k = 0; k < 8; ++k)
          if (cx + dx[k] == bx && cy + dy[k] == by) back = k;
        c.emplace_back(cx, cy);
      }
      out.push_back(std::move(c));
    }
  }
  return out;
}

// Direct ellipse-specific least squares (Halir and Flusser) in normalised
// coordinates, with residuals as Sampson distances in pixels.
inline EllipseFit fit_ellipse(const Contour& c) {
  EllipseFit fit;
  const size_t n = c.size();
  if (n < 6) return fit;
  Point2 mean = Point2::Zero();
  for (const auto& p : c) mean += p;
  mean /= double(n);
  double scale = 0.0;
  for (const auto& p : c) scale += (p - mean).squaredNorm();
  scale = std::sqrt(scale / double(n));
  if (!(scale > 0.0)) return fit;

  Eigen::MatrixXd D1(n, 3), D2(n, 3);
  for (size_t i = 0; i < n; ++i) {
    const double x = (c[i].x() - mean.x()) / scale, y = (c[i].y() - mean.y()) / scale;
    D1.row(Eigen::Index(i)) << x * x, x * y, y * y;
    D2.row(Eigen::Index(i)) << x, y, 1.0;
  }
  const Eigen::Matrix3d S1 = D1.transpose() * D1, S2 = D1.transpose() * D2, S3 = D2.transpose() * D2;
  const Eigen::FullPivLU<Eigen::Matrix3d> lu3(S3);
  if (!lu3.isInvertible()) return fit;
  const Eigen::Matrix3d T = -lu3.solve(S2.transpose());
  const Eigen::Matrix3d Mr = S1 + S2 * T;
  Eigen::Matrix3d M;
  M.row(0) = Mr.row(2) / 2.0;
  M.row(1) = -Mr.row(1);
  M.row(2) = Mr.row(0) / 2.0;
  const Eigen::EigenSolver<Eigen::Matrix3d> es(M);
  int best = -1;
  double best_cond = 0.0;
  for (int k = 0; k < 3; ++k) {
    const Eigen::Vector3d v = es.eigenvectors().col(k).real();
    const double cond = 4.0 * v(0) * v(2) - v(1) * v(1);
    if (cond > best_cond) best_cond = cond, best = k;
  }
  if (best < 0) return fit;
  const Eigen::Vector3d a1 = es.eigenvectors().col(best).real();
  const Eigen::Vector3d a2 = T * a1;

  // Back to pixel coordinates: x = (X - mx)/s.
  const double A = a1(0), B = a1(1), C = a1(2), Dn = a2(0), En = a2(1), Fn = a2(2);
  const double s = scale, mx = mean.x(), my = mean.y();
  Eigen::Matrix<double, 6, 1> q;
  q(0) = A / (s * s);
  q(1) = B / (s * s);
  q(2) = C / (s * s);
  q(3) = (-2 * A * mx - B * my) / (s * s) + Dn / s;
  q(4) = (-2 * C * my - B * mx) / (s * s) + En / s;
  q(5) = (A * mx * mx + B * mx * my + C * my * my) / (s * s) - (Dn * mx + En * my) / s + Fn;
  q /= q.norm();
  fit.conic = q;

  Eigen::Matrix2d Q;
  Q << q(0), q(1) / 2, q(1) / 2, q(2);
  const Eigen::Vector2d ctr = Q.ldlt().solve(Eigen::Vector2d(-q(3) / 2, -q(4) / 2));
  const double F0 = q(0) * ctr.x() * ctr.x() + q(1) * ctr.x() * ctr.y() + q(2) * ctr.y() * ctr.y() +
                    q(3) * ctr.x() + q(4) * ctr.y() + q(5);
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> qe(Q);
  const double l0 = qe.eigenvalues()(0), l1 = qe.eigenvalues()(1);
  if (!(-F0 / l0 > 0.0) || !(-F0 / l1 > 0.0)) return fit;
  fit.center = ctr;
  fit.semi_major = std::sqrt(-F0 / l0);
  fit.semi_minor = std::sqrt(-F0 / l1);
  if (fit.semi_major < fit.semi_minor) std::swap(fit.semi_major, fit.semi_minor);

  double ss = 0.0;
  for (const auto& p : c) {
    const double x = p.x(), y = p.y();
    const double F = q(0) * x * x + q(1) * x * y + q(2) * y * y + q(3) * x + q(4) * y + q(5);
    const double gx = 2 * q(0) * x + q(1) * y + q(3), gy = q(1) * x + 2 * q(2) * y + q(4);
    const double g2 = gx * gx + gy * gy;
    ss += g2 > 0.0 ? F * F / g2 : 0.0;
  }
  fit.rms = std::sqrt(ss / double(n));
  fit.ok = true;
  return fit;
}

inline bool ellipse_test(const Contour& c, const EllipseParams& prm = {}, double image_area = 0.0) {
  if (c.size() < 6) return false;
  double area;
  try {
    area = polygon_moments(c).m00;
  } catch (const InvalidArgument&) {
    return false;
  }
  if (area < prm.area_min) return false;
  if (image_area > 0.0 && area > prm.area_max_frac * image_area) return false;
  const EllipseFit fit = fit_ellipse(c);
  if (!fit.ok) return false;
  if (fit.semi_major / fit.semi_minor >= prm.ratio_max) return false;
  const double mean_axis = 0.5 * (fit.semi_major + fit.semi_minor);
  return fit.rms < prm.fit_tol * mean_axis + prm.fit_quant;
}

namespace detail {

inline bool touches_border(const Contour& c, int w, int h) {
  for (const auto& p : c)
    if (p.x() <= 0 || p.y() <= 0 || p.x() >= w - 1 || p.y() >= h - 1) return true;
  return false;
}

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const size_t m = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + std::ptrdiff_t(m), v.end());
  return v[m];
}

inline std::vector<double> nearest_neighbour_distances(const std::vector<Point2>& pts) {
  std::vector<double> out;
  for (size_t i = 0; i < pts.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (size_t j = 0; j < pts.size(); ++j)
      if (i != j) best = std::min(best, (pts[i] - pts[j]).norm());
    if (std::isfinite(best)) out.push_back(best);
  }
  return out;
}

}  // namespace detail

// Candidates from a single threshold setting, in trace order.
inline std::vector<BlobCandidate> candidates_for(const GrayImage& img, const GradientField& grad,
                                                 const ThresholdSpec& spec, const DetectParams& prm = {}) {
  BinaryImage bin = threshold(img, spec);
  if (prm.use_closing) bin = closing(bin);
  std::vector<BlobCandidate> out;
  const double area = double(img.width) * img.height;
  for (auto& c : find_contours(bin)) {
    if (c.size() < 6 || detail::touches_border(c, img.width, img.height)) continue;
    if (!ellipse_test(c, prm.ellipse, area)) continue;
    try {
      CentroidMeasurement m = measure_centroid(img, grad, c, prm.uncertainty);
      out.push_back({std::move(c), m, spec});
    } catch (const NotPositiveDefinite&) {
    } catch (const InvalidArgument&) {
    }
  }
  return out;
}

// All ellipse-passing candidates over the threshold sweep, grouped by threshold in sweep order.
inline std::vector<std::vector<BlobCandidate>> sweep_candidates(const GrayImage& img, const DetectParams& prm = {}) {
  const GradientField grad = gradient(img);
  std::vector<std::vector<BlobCandidate>> out;
  for (const auto& spec : prm.thresholds) out.push_back(candidates_for(img, grad, spec, prm));
  return out;
}

// Minimum-uncertainty selection among candidates closer than the dedupe distance.
inline std::vector<BlobCandidate> select_candidates(const std::vector<std::vector<BlobCandidate>>& sweep,
                                                    double dedupe_factor = 0.3) {
  std::vector<double> spacings;
  for (const auto& group : sweep) {
    std::vector<Point2> pts;
    for (const auto& b : group) pts.push_back(b.measurement.p);
    const auto nn = detail::nearest_neighbour_distances(pts);
    if (!nn.empty()) spacings.push_back(detail::median(nn));
  }
  const double thr = dedupe_factor * detail::median(spacings);
  std::vector<BlobCandidate> kept;
  for (const auto& group : sweep) {
    for (const auto& b : group) {
      bool matched = false;
      for (auto& k : kept) {
        if ((k.measurement.p - b.measurement.p).norm() < thr) {
          matched = true;
          if (b.measurement.epsilon < k.measurement.epsilon) k = b;
          break;
        }
      }
      if (!matched) kept.push_back(b);
    }
  }
  return kept;
}

// perm[k] is the input index assigned to grid slot k (row-major).
inline std::vector<int> order_grid(const std::vector<Point2>& pts, int rows, int cols) {
  const int n = rows * cols;
  if (int(pts.size()) != n) throw InvalidArgument("order_grid: point count does not match grid");
  Point2 mean = Point2::Zero();
  for (const auto& p : pts) mean += p;
  mean /= n;
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  for (const auto& p : pts) cov += (p - mean) * (p - mean).transpose();
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(cov);
  Eigen::Vector2d major = es.eigenvectors().col(1), minor = es.eigenvectors().col(0);
  // Within-row direction is the longer grid side.
  Eigen::Vector2d along = cols >= rows ? major : minor;
  Eigen::Vector2d across = cols >= rows ? minor : major;

  auto label = [&](const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
    std::vector<int> idx(static_cast<size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int i, int j) { return pts[size_t(i)].dot(b) < pts[size_t(j)].dot(b); });
    for (int r = 0; r < rows; ++r)
      std::stable_sort(idx.begin() + r * cols, idx.begin() + (r + 1) * cols,
                       [&](int i, int j) { return pts[size_t(i)].dot(a) < pts[size_t(j)].dot(a); });
    return idx;
  };
  // Front-facing targets keep their handedness in the image (v down).
  if (along.x() * across.y() - along.y() * across.x() < 0.0) across = -across;
  std::vector<int> p1 = label(along, across), p2 = label(-along, -across);
  const Point2 &f1 = pts[size_t(p1[0])], &f2 = pts[size_t(p2[0])];
  const bool first = f1.x() < f2.x() || (f1.x() == f2.x() && f1.y() <= f2.y());
  std::vector<int> perm = first ? p1 : p2;

  // Each row must be close to a line, and neighbouring row lines must be
  // separated by more than that spread; merged rows break this.
  std::vector<Point2> row_mean(static_cast<size_t>(rows));
  std::vector<Eigen::Vector2d> row_normal(static_cast<size_t>(rows));
  double spread = 0.0;
  for (int r = 0; r < rows; ++r) {
    std::vector<Point2> row;
    for (int c = 0; c < cols; ++c) row.push_back(pts[size_t(perm[size_t(r * cols + c)])]);
    Point2 m = Point2::Zero();
    for (const auto& p : row) m += p;
    m /= cols;
    Eigen::Matrix2d rc = Eigen::Matrix2d::Zero();
    for (const auto& p : row) rc += (p - m) * (p - m).transpose();
    const Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> re(rc);
    const Eigen::Vector2d nrm = cols >= 2 ? Eigen::Vector2d(re.eigenvectors().col(0)) : across;
    double step = 0.0, resid = 0.0;
    for (int c = 0; c < cols; ++c) {
      resid = std::max(resid, std::abs((row[size_t(c)] - m).dot(nrm)));
      if (c > 0) step += (row[size_t(c)] - row[size_t(c - 1)]).norm();
    }
    if (cols >= 3 && resid > 0.25 * step / (cols - 1)) throw DetectionError("order_grid: ambiguous row clustering");
    spread = std::max(spread, resid);
    row_mean[size_t(r)] = m;
    row_normal[size_t(r)] = nrm;
  }
  for (int r = 0; r + 1 < rows; ++r) {
    const double gap = std::abs((row_mean[size_t(r + 1)] - row_mean[size_t(r)]).dot(row_normal[size_t(r)]));
    if (gap <= 4.0 * spread) throw DetectionError("order_grid: rows not separable");
  }
  if (rows >= 3) {
    std::vector<Point2> col;
    for (int c = 0; c < cols; ++c) {
      col.clear();
      for (int r = 0; r < rows; ++r) col.push_back(pts[size_t(perm[size_t(r * cols + c)])]);
      Point2 m = Point2::Zero();
      for (const auto& p : col) m += p;
      m /= rows;
      Eigen::Matrix2d cc = Eigen::Matrix2d::Zero();
      for (const auto& p : col) cc += (p - m) * (p - m).transpose();
      const Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> ce(cc);
      double step = 0.0, resid = 0.0;
      for (int r = 0; r < rows; ++r) {
        resid = std::max(resid, std::abs((col[size_t(r)] - m).dot(ce.eigenvectors().col(0))));
        if (r > 0) step += (col[size_t(r)] - col[size_t(r - 1)]).norm();
      }
      step /= (rows - 1);
      if (resid > 0.25 * step) throw DetectionError("order_grid: ambiguous column clustering");
    }
  }
  return perm;
}

// Threshold sweep, minimum-uncertainty selection and grid ordering for one image.
inline DetectedGrid detect(const GrayImage& img, const TargetSpec& target, const DetectParams& prm = {}) {
  if (target.rows * target.cols < 4) throw InvalidArgument("detect: target needs at least 4 circles");
  const auto kept = select_candidates(sweep_candidates(img, prm), prm.dedupe_factor);
  const int want = target.rows * target.cols;
  if (int(kept.size()) != want)
    throw DetectionError("detected " + std::to_string(kept.size()) + " blobs, expected " + std::to_string(want));
  std::vector<Point2> pts;
  for (const auto& b : kept) pts.push_back(b.measurement.p);
  const auto perm = order_grid(pts, target.rows, target.cols);
  DetectedGrid g;
  g.rows = target.rows;
  g.cols = target.cols;
  g.width = img.width;
  g.height = img.height;
  for (int k : perm) {
    g.measurements.push_back(kept[size_t(k)].measurement);
    g.thresholds.push_back(kept[size_t(k)].threshold);
    g.contour_sizes.push_back(int(kept[size_t(k)].contour.size()));
  }
  return g;
}

}  // namespace discocal
