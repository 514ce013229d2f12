#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "discocal/detector.hpp"
#include "discocal/error.hpp"
#include "discocal/projection.hpp"
#include "discocal/uncertainty.hpp"

namespace discocal {

struct CalibOptions {
  int nd = 2;                  // radial coefficients estimated
  bool estimate_skew = false;
  bool weighted = true;        // use measurement covariance in the loss
  bool unbiased = true;        // circle centroid model; false projects the centre point
  int samples = 2000;          // boundary samples of the centroid estimator
  int max_iter = 200;
  double rel_tol = 1e-10;
  double step_tol = 1e-12;
  double cov_floor = 1e-6;     // px^2, eigenvalue floor before inverting Sigma_p
  double fd_step = 1e-6;       // relative central-difference step
};

struct ViewStats {
  double rms = 0.0;
  double max = 0.0;
};

struct CalibrationResult {
  Intrinsics K;
  Distortion D;
  std::vector<Pose> poses;
  Eigen::MatrixXd param_cov;  // (fx, fy, cx, cy[, eta], d1..d_nd)
  double rms_reproj = 0.0;
  double cost = 0.0;
  int iterations = 0;
  std::vector<ViewStats> per_view;
  std::vector<std::string> param_names;
  std::vector<double> cost_history;  // cost after each accepted step, starting with the initial cost
};

struct InitResult {
  Intrinsics K;
  std::vector<Pose> poses;
};

namespace detail {

// Hartley-normalised DLT homography from target plane to image.
inline Eigen::Matrix3d fit_homography(const std::vector<Point2>& src, const std::vector<Point2>& dst) {
  const size_t n = src.size();
  if (n < 4 || dst.size() != n) throw InvalidArgument("homography needs at least 4 correspondences");
  auto normaliser = [](const std::vector<Point2>& p) {
    Point2 m = Point2::Zero();
    for (const auto& q : p) m += q;
    m /= double(p.size());
    double d = 0.0;
    for (const auto& q : p) d += (q - m).norm();
    d /= double(p.size());
    const double s = d > 0 ? std::sqrt(2.0) / d : 1.0;
    Eigen::Matrix3d T;
    T << s, 0, -s * m.x(), 0, s, -s * m.y(), 0, 0, 1;
    return T;
  };
  const Eigen::Matrix3d Ts = normaliser(src), Td = normaliser(dst);
  Eigen::MatrixXd A(2 * n, 9);
  for (size_t i = 0; i < n; ++i) {
    const Eigen::Vector3d a = Ts * Eigen::Vector3d(src[i].x(), src[i].y(), 1);
    const Eigen::Vector3d b = Td * Eigen::Vector3d(dst[i].x(), dst[i].y(), 1);
    const Eigen::Index r = Eigen::Index(2 * i);
    A.row(r) << 0, 0, 0, -a.x(), -a.y(), -1, b.y() * a.x(), b.y() * a.y(), b.y();
    A.row(r + 1) << a.x(), a.y(), 1, 0, 0, 0, -b.x() * a.x(), -b.x() * a.y(), -b.x();
  }
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullV);
  const Eigen::VectorXd h = svd.matrixV().col(8);
  Eigen::Matrix3d Hn;
  Hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
  Eigen::Matrix3d H = Td.inverse() * Hn * Ts;
  return H / H(2, 2);
}

inline Eigen::Matrix<double, 1, 6> zhang_row(const Eigen::Matrix3d& H, int i, int j) {
  const Eigen::Vector3d a = H.col(i), b = H.col(j);
  Eigen::Matrix<double, 1, 6> v;
  v << a(0) * b(0), a(0) * b(1) + a(1) * b(0), a(1) * b(1), a(2) * b(0) + a(0) * b(2), a(2) * b(1) + a(1) * b(2),
      a(2) * b(2);
  return v;
}

inline Eigen::Matrix3d nearest_rotation(const Eigen::Matrix3d& M) {
  const Eigen::JacobiSVD<Eigen::Matrix3d> svd(M, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d R = svd.matrixU() * svd.matrixV().transpose();
  if (R.determinant() < 0) {
    Eigen::Matrix3d U = svd.matrixU();
    U.col(2) *= -1;
    R = U * svd.matrixV().transpose();
  }
  return R;
}

}  // namespace detail

inline Pose pose_from_homography(const Intrinsics& K, const Eigen::Matrix3d& H) {
  const Eigen::Matrix3d Ki = K.matrix().inverse();
  Eigen::Vector3d h1 = Ki * H.col(0), h2 = Ki * H.col(1), h3 = Ki * H.col(2);
  const double lam = 2.0 / (h1.norm() + h2.norm());
  h1 *= lam, h2 *= lam, h3 *= lam;
  if (h3.z() < 0) h1 = -h1, h2 = -h2, h3 = -h3;
  Eigen::Matrix3d M;
  M.col(0) = h1;
  M.col(1) = h2;
  M.col(2) = h1.cross(h2);
  return Pose::from_rotation(detail::nearest_rotation(M), h3);
}

// Closed-form intrinsics from the absolute-conic constraints, distortion ignored.
inline InitResult zhang_init(const std::vector<std::vector<Point2>>& views, const TargetSpec& target,
                             bool estimate_skew = false) {
  const size_t min_views = estimate_skew ? 3 : 2;
  if (views.size() < min_views) throw DegenerateConfiguration("zhang_init: not enough views");
  std::vector<Point2> world;
  for (int k = 0; k < target.count(); ++k) world.push_back(target.center(k));

  // Pixel normalisation keeps the constraint matrix well conditioned.
  Point2 m = Point2::Zero();
  double cnt = 0;
  for (const auto& v : views)
    for (const auto& p : v) m += p, cnt += 1;
  m /= cnt;
  double s = 0;
  for (const auto& v : views)
    for (const auto& p : v) s += (p - m).norm();
  s = cnt / s;
  Eigen::Matrix3d N;
  N << s, 0, -s * m.x(), 0, s, -s * m.y(), 0, 0, 1;

  std::vector<Eigen::Matrix3d> Hs;
  Eigen::MatrixXd V(2 * views.size() + (estimate_skew ? 0 : 1), 6);
  for (size_t j = 0; j < views.size(); ++j) {
    if (int(views[j].size()) != target.count()) throw InvalidArgument("zhang_init: view has wrong point count");
    Hs.push_back(detail::fit_homography(world, views[j]));
    const Eigen::Matrix3d Hn = N * Hs.back();
    V.row(Eigen::Index(2 * j)) = detail::zhang_row(Hn, 0, 1);
    V.row(Eigen::Index(2 * j + 1)) = detail::zhang_row(Hn, 0, 0) - detail::zhang_row(Hn, 1, 1);
  }
  if (!estimate_skew) V.row(V.rows() - 1) << 0, 1, 0, 0, 0, 0;
  if (V.rows() < 5) throw DegenerateConfiguration("zhang_init: not enough constraints");

  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(V, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  if (sv(4) < 1e-10 * sv(0)) throw DegenerateConfiguration("zhang_init: singular constraint system (repeated view orientation)");
  Eigen::VectorXd b = svd.matrixV().col(5);
  if (b(0) < 0) b = -b;
  const double B11 = b(0), B12 = b(1), B22 = b(2), B13 = b(3), B23 = b(4), B33 = b(5);
  const double den = B11 * B22 - B12 * B12;
  if (!(den > 0) || !(B11 > 0)) throw DegenerateConfiguration("zhang_init: constraint solution is not a valid conic");
  const double v0 = (B12 * B13 - B11 * B23) / den;
  const double lam = B33 - (B13 * B13 + v0 * (B12 * B13 - B11 * B23)) / B11;
  if (!(lam / B11 > 0)) throw DegenerateConfiguration("zhang_init: constraint solution is not a valid conic");
  const double alpha = std::sqrt(lam / B11);
  const double beta = std::sqrt(lam * B11 / den);
  const double gamma = estimate_skew ? -B12 * alpha * alpha * beta / lam : 0.0;
  const double u0 = gamma * v0 / beta - B13 * alpha * alpha / lam;

  Eigen::Matrix3d Kn;
  Kn << alpha, gamma, u0, 0, beta, v0, 0, 0, 1;
  const Eigen::Matrix3d Kp = N.inverse() * Kn;
  InitResult out;
  out.K = {Kp(0, 0), Kp(1, 1), Kp(0, 2), Kp(1, 2), estimate_skew ? Kp(0, 1) : 0.0};
  for (const auto& H : Hs) out.poses.push_back(pose_from_homography(out.K, H));
  return out;
}

namespace detail {

// Mean homography transfer error of the views relative to their spread.
inline double homography_misfit(const std::vector<std::vector<Point2>>& views, const std::vector<Point2>& world) {
  double acc = 0.0;
  for (const auto& v : views) {
    const Eigen::Matrix3d H = fit_homography(world, v);
    Point2 m = Point2::Zero();
    for (const auto& p : v) m += p;
    m /= double(v.size());
    double spread = 0.0, err = 0.0;
    for (size_t k = 0; k < v.size(); ++k) {
      const Eigen::Vector3d q = H * Eigen::Vector3d(world[k].x(), world[k].y(), 1.0);
      err += (q.head<2>() / q.z() - v[k]).squaredNorm();
      spread += (v[k] - m).squaredNorm();
    }
    acc += std::sqrt(err / spread);
  }
  return acc / double(views.size());
}

// Inverts q_d = q_u (1 + kappa |q_u|^2) in coordinates scaled by 1/rmax about c.
inline bool radial_correct(const std::vector<std::vector<Point2>>& views, const Point2& c, double rmax, double kappa,
                           std::vector<std::vector<Point2>>& out) {
  const Distortion D{{kappa}};
  out = views;
  for (auto& v : out)
    for (auto& p : v) {
      Point2 q;
      if (!D.undistort((p - c) / rmax, q)) return false;
      p = c + rmax * q;
    }
  return true;
}

}  // namespace detail

// Zhang initialisation preceded by a one-parameter radial correction about
// `centre`, q_d = q_u (1 + kappa |q_u|^2) in pixels scaled by the largest
// observed radius. kappa is chosen so the corrected points are best explained by
// homographies; d1 then starts at kappa fx fy / rmax^2.
struct RadialInit {
  InitResult init;
  Distortion D;
  double kappa = 0.0;
};

inline RadialInit radial_zhang_init(const std::vector<std::vector<Point2>>& views, const TargetSpec& target,
                                    const Point2& centre, int nd, bool estimate_skew = false) {
  std::vector<Point2> world;
  for (int k = 0; k < target.count(); ++k) world.push_back(target.center(k));
  double rmax = 0.0;
  for (const auto& v : views)
    for (const auto& p : v) rmax = std::max(rmax, (p - centre).norm());
  if (!(rmax > 0.0)) throw DegenerateConfiguration("radial_zhang_init: observations collapse to a point");
  std::vector<std::vector<Point2>> tmp;
  auto misfit = [&](double k) {
    if (!detail::radial_correct(views, centre, rmax, k, tmp)) return std::numeric_limits<double>::infinity();
    return detail::homography_misfit(tmp, world);
  };

  // Below -4/27 the unit radius has no monotone preimage.
  const int steps = 100;
  const double lo = -4.0 / 27.0, hi = 0.6;
  double best = 0.0, best_f = misfit(0.0);
  for (int i = 0; i <= steps; ++i) {
    const double k = lo + (hi - lo) * i / steps;
    const double f = misfit(k);
    if (f < best_f) best = k, best_f = f;
  }
  double a = std::max(lo, best - (hi - lo) / steps), b = std::min(hi, best + (hi - lo) / steps);
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = b - g * (b - a), x2 = a + g * (b - a), f1 = misfit(x1), f2 = misfit(x2);
  for (int it = 0; it < 40; ++it) {
    if (f1 < f2)
      b = x2, x2 = x1, f2 = f1, x1 = b - g * (b - a), f1 = misfit(x1);
    else
      a = x1, x1 = x2, f1 = f2, x2 = a + g * (b - a), f2 = misfit(x2);
  }
  const double mid = 0.5 * (a + b);
  RadialInit out;
  out.kappa = misfit(mid) < best_f ? mid : best;
  detail::radial_correct(views, centre, rmax, out.kappa, tmp);
  out.init = zhang_init(tmp, target, estimate_skew);
  out.D.d.assign(size_t(std::max(nd, 0)), 0.0);
  if (nd > 0) out.D.d[0] = out.kappa * out.init.K.fx * out.init.K.fy / (rmax * rmax);
  return out;
}

inline std::vector<std::vector<Point2>> grid_points(const std::vector<DetectedGrid>& grids) {
  std::vector<std::vector<Point2>> out;
  for (const auto& g : grids) {
    std::vector<Point2> v;
    for (const auto& m : g.measurements) v.push_back(m.p);
    out.push_back(std::move(v));
  }
  return out;
}

// Joint intrinsic/distortion/pose problem over detected grids.
class CalibrationProblem {
 public:
  CalibrationProblem(const std::vector<DetectedGrid>& grids, const TargetSpec& target, const CalibOptions& opt)
      : target_(target), opt_(opt) {
    if (opt.nd < 0 || opt.nd > 4) throw InvalidArgument("nd must be in [0, 4]");
    for (const auto& g : grids) {
      if (int(g.measurements.size()) != target.count()) throw InvalidArgument("view has wrong number of observations");
      std::vector<Point2> pts;
      std::vector<Eigen::Matrix2d> W, L;
      for (const auto& m : g.measurements) {
        pts.push_back(m.p);
        const Eigen::Matrix2d w = information(m.sigma);
        W.push_back(w);
        L.push_back(w.llt().matrixL());
      }
      obs_.push_back(std::move(pts));
      info_.push_back(std::move(W));
      chol_.push_back(std::move(L));
    }
  }

  int views() const { return int(obs_.size()); }
  int intrinsic_count() const { return 4 + (opt_.estimate_skew ? 1 : 0) + opt_.nd; }
  int param_count() const { return intrinsic_count() + 6 * views(); }
  int residual_count() const { return 2 * target_.count() * views(); }
  const CalibOptions& options() const { return opt_; }

  std::vector<std::string> intrinsic_names() const {
    std::vector<std::string> n{"fx", "fy", "cx", "cy"};
    if (opt_.estimate_skew) n.push_back("eta");
    for (int i = 1; i <= opt_.nd; ++i) n.push_back("d" + std::to_string(i));
    return n;
  }

  // Sigma_p^-1 with eigenvalues of Sigma_p floored, or identity when unweighted.
  Eigen::Matrix2d information(const Eigen::Matrix2d& sigma) const {
    if (!opt_.weighted) return Eigen::Matrix2d::Identity();
    if (sigma(0, 1) == 0.0 && sigma(1, 0) == 0.0) {
      Eigen::Matrix2d w = Eigen::Matrix2d::Zero();
      w(0, 0) = 1.0 / std::max(sigma(0, 0), opt_.cov_floor);
      w(1, 1) = 1.0 / std::max(sigma(1, 1), opt_.cov_floor);
      return w;
    }
    const Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(0.5 * (sigma + sigma.transpose()));
    const Eigen::Vector2d ev = es.eigenvalues().cwiseMax(opt_.cov_floor);
    return es.eigenvectors() * ev.cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
  }

  Eigen::VectorXd pack(const Intrinsics& K, const Distortion& D, const std::vector<Pose>& poses) const {
    Eigen::VectorXd x(param_count());
    int i = 0;
    x(i++) = K.fx, x(i++) = K.fy, x(i++) = K.cx, x(i++) = K.cy;
    if (opt_.estimate_skew) x(i++) = K.eta;
    for (int k = 0; k < opt_.nd; ++k) x(i++) = k < int(D.d.size()) ? D.d[size_t(k)] : 0.0;
    for (const auto& p : poses) {
      x.segment<3>(i) = p.rvec;
      x.segment<3>(i + 3) = p.t;
      i += 6;
    }
    return x;
  }

  void unpack(const Eigen::VectorXd& x, Intrinsics& K, Distortion& D) const {
    int i = 0;
    K.fx = x(i++), K.fy = x(i++), K.cx = x(i++), K.cy = x(i++);
    K.eta = opt_.estimate_skew ? x(i++) : 0.0;
    D.d.assign(size_t(opt_.nd), 0.0);
    for (int k = 0; k < opt_.nd; ++k) D.d[size_t(k)] = x(i++);
  }

  Pose pose(const Eigen::VectorXd& x, int j) const {
    const int o = intrinsic_count() + 6 * j;
    return {x.segment<3>(o), x.segment<3>(o + 3)};
  }

  // Predicted control points of one view.
  std::vector<Point2> predict(const Eigen::VectorXd& x, int j) const {
    Intrinsics K;
    Distortion D;
    unpack(x, K, D);
    const Pose E = pose(x, j);
    std::vector<Point2> out(static_cast<size_t>(target_.count()));
    for (int k = 0; k < target_.count(); ++k) {
      const Point2 c = target_.center(k);
      out[size_t(k)] = opt_.unbiased ? unbiased_circle_centroid(K, D, E, c, target_.radius, opt_.samples)
                                     : project_point(K, D, E, c);
    }
    return out;
  }

  // Raw residuals measured - predicted for one view.
  Eigen::VectorXd view_residual(const Eigen::VectorXd& x, int j) const {
    const auto pred = predict(x, j);
    Eigen::VectorXd r(2 * target_.count());
    for (int k = 0; k < target_.count(); ++k) r.segment<2>(2 * k) = obs_[size_t(j)][size_t(k)] - pred[size_t(k)];
    return r;
  }

  Eigen::VectorXd residual(const Eigen::VectorXd& x) const {
    Eigen::VectorXd r(residual_count());
    const int m = 2 * target_.count();
    for (int j = 0; j < views(); ++j) r.segment(j * m, m) = view_residual(x, j);
    return r;
  }

  // sum r^T W r, evaluated term by term.
  double cost(const Eigen::VectorXd& r) const {
    double c = 0.0;
    const int n = target_.count();
    for (int j = 0; j < views(); ++j)
      for (int k = 0; k < n; ++k) {
        const Eigen::Index o = 2 * (j * n + k);
        const Eigen::Matrix2d& W = info_[size_t(j)][size_t(k)];
        const double r0 = r(o), r1 = r(o + 1);
        c += r0 * (W(0, 0) * r0 + W(0, 1) * r1) + r1 * (W(1, 0) * r0 + W(1, 1) * r1);
      }
    return c;
  }

  static double unweighted_cost(const Eigen::VectorXd& r) {
    double c = 0.0;
    for (Eigen::Index i = 0; i < r.size(); i += 2) c += r(i) * r(i) + r(i + 1) * r(i + 1);
    return c;
  }

  // L^T r per observation, so that |whitened|^2 = r^T W r.
  Eigen::VectorXd whiten(const Eigen::VectorXd& r) const {
    Eigen::VectorXd w(r.size());
    const int n = target_.count();
    for (int j = 0; j < views(); ++j)
      for (int k = 0; k < n; ++k) {
        const Eigen::Index o = 2 * (j * n + k);
        w.segment<2>(o) = chol_[size_t(j)][size_t(k)].transpose() * r.segment<2>(o);
      }
    return w;
  }

  // d(prediction)/d(params) by central differences; pose columns only touch their view.
  Eigen::MatrixXd prediction_jacobian(const Eigen::VectorXd& x) const {
    const int m = 2 * target_.count();
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(residual_count(), param_count());
    auto stack = [&](const Eigen::VectorXd& xx, int j) {
      const auto p = predict(xx, j);
      Eigen::VectorXd v(m);
      for (int k = 0; k < target_.count(); ++k) v.segment<2>(2 * k) = p[size_t(k)];
      return v;
    };
    Eigen::VectorXd xp = x;
    for (int c = 0; c < param_count(); ++c) {
      const double h = opt_.fd_step * std::max(std::abs(x(c)), 1.0);
      const int j0 = c < intrinsic_count() ? 0 : (c - intrinsic_count()) / 6;
      const int j1 = c < intrinsic_count() ? views() : j0 + 1;
      for (int j = j0; j < j1; ++j) {
        xp(c) = x(c) + h;
        const Eigen::VectorXd a = stack(xp, j);
        xp(c) = x(c) - h;
        const Eigen::VectorXd b = stack(xp, j);
        xp(c) = x(c);
        J.block(j * m, c, m, 1) = (a - b) / (2 * h);
      }
    }
    return J;
  }

  Eigen::MatrixXd whiten_jacobian(const Eigen::MatrixXd& J) const {
    Eigen::MatrixXd out(J.rows(), J.cols());
    const int n = target_.count();
    for (int j = 0; j < views(); ++j)
      for (int k = 0; k < n; ++k) {
        const Eigen::Index o = 2 * (j * n + k);
        out.middleRows<2>(o) = chol_[size_t(j)][size_t(k)].transpose() * J.middleRows<2>(o);
      }
    return out;
  }

  // Largest squared normalised radius reached by any target circle centre.
  double max_normalized_radius2(const Eigen::VectorXd& x) const {
    double s = 0.0;
    for (int j = 0; j < views(); ++j) {
      const Pose E = pose(x, j);
      const Eigen::Matrix3d R = E.R();
      for (int k = 0; k < target_.count(); ++k) {
        const Point2 c = target_.center(k);
        for (double a = 0; a < 2 * M_PI; a += M_PI / 2) {
          const Point2 pn = to_normalized(E, R, c + target_.radius * Point2(std::cos(a), std::sin(a)));
          s = std::max(s, pn.squaredNorm());
        }
      }
    }
    return s;
  }

  // Distortion factor stays positive over the observed field of view.
  bool monotone(const Eigen::VectorXd& x) const {
    Intrinsics K;
    Distortion D;
    unpack(x, K, D);
    if (!(K.fx > 0) || !(K.fy > 0)) return false;
    double smax;
    try {
      smax = max_normalized_radius2(x);
    } catch (const InvalidArgument&) {
      return false;
    }
    for (int i = 0; i <= 100; ++i)
      if (!(D.k(smax * i / 100.0) > 0.0)) return false;
    return true;
  }

 private:
  TargetSpec target_;
  CalibOptions opt_;
  std::vector<std::vector<Point2>> obs_;
  std::vector<std::vector<Eigen::Matrix2d>> info_;
  std::vector<std::vector<Eigen::Matrix2d>> chol_;
};

// Pose-marginalised covariance of intrinsics and distortion: (J^T W J)^-1 with
// the pose blocks removed by Schur complement.
inline Eigen::MatrixXd parameter_covariance(const CalibrationProblem& prob, const Eigen::VectorXd& x) {
  const Eigen::MatrixXd Jw = prob.whiten_jacobian(prob.prediction_jacobian(x));
  const Eigen::MatrixXd I = Jw.transpose() * Jw;
  const int a = prob.intrinsic_count(), b = int(I.rows()) - a;
  const Eigen::MatrixXd Iaa = I.topLeftCorner(a, a), Iab = I.topRightCorner(a, b), Ibb = I.bottomRightCorner(b, b);
  const Eigen::LDLT<Eigen::MatrixXd> pose_block(Ibb);
  if (pose_block.info() != Eigen::Success) throw DegenerateConfiguration("parameter_covariance: singular pose information");
  Eigen::MatrixXd S = Iaa - Iab * pose_block.solve(Iab.transpose());
  S = 0.5 * (S + S.transpose());
  // Scale-free conditioning check on the correlation form.
  const Eigen::VectorXd d = S.diagonal().cwiseMax(0.0).cwiseSqrt();
  if ((d.array() <= 0.0).any()) throw DegenerateConfiguration("parameter_covariance: singular information matrix");
  const Eigen::MatrixXd C = d.cwiseInverse().asDiagonal() * S * d.cwiseInverse().asDiagonal();
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(C, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff(), hi = es.eigenvalues().maxCoeff();
  if (!(lo > 1e-10 * hi)) throw DegenerateConfiguration("parameter_covariance: singular information matrix");
  const Eigen::MatrixXd Ci = C.ldlt().solve(Eigen::MatrixXd::Identity(a, a));
  Eigen::MatrixXd cov = d.cwiseInverse().asDiagonal() * Ci * d.cwiseInverse().asDiagonal();
  return 0.5 * (cov + cov.transpose());
}

// Levenberg-Marquardt refinement of all parameters.
inline CalibrationResult optimize(const std::vector<DetectedGrid>& grids, const TargetSpec& target,
                                  const Intrinsics& K0, const Distortion& D0, const std::vector<Pose>& poses0,
                                  const CalibOptions& opt = {}) {
  if (poses0.size() != grids.size()) throw InvalidArgument("optimize: one initial pose per view required");
  const CalibrationProblem prob(grids, target, opt);
  Eigen::VectorXd x = prob.pack(K0, D0, poses0);
  if (!prob.monotone(x)) throw OptimizationError("optimize: initial distortion violates the monotonicity guard");
  Eigen::VectorXd r = prob.residual(x);
  double c = prob.cost(r);
  std::vector<double> history{c};
  double lambda = 1e-3;
  bool converged = false;
  int it = 0;
  for (; it < opt.max_iter && !converged; ++it) {
    if (c < 1e-28) {
      converged = true;
      break;
    }
    const Eigen::MatrixXd Jw = prob.whiten_jacobian(prob.prediction_jacobian(x));
    const Eigen::VectorXd rw = prob.whiten(r);
    // r = measured - predicted, so d r / d x = -J.
    const Eigen::MatrixXd A = Jw.transpose() * Jw;
    const Eigen::VectorXd g = Jw.transpose() * rw;
    bool accepted = false;
    while (!accepted) {
      Eigen::MatrixXd Ad = A;
      Ad.diagonal() += lambda * A.diagonal().cwiseMax(1e-12);
      const Eigen::VectorXd dx = Ad.ldlt().solve(g);
      if (!dx.allFinite()) {
        lambda *= 10;
        if (lambda > 1e16) break;
        continue;
      }
      const Eigen::VectorXd xn = x + dx;
      double cn = std::numeric_limits<double>::infinity();
      Eigen::VectorXd rn;
      if (prob.monotone(xn)) {
        try {
          rn = prob.residual(xn);
          cn = prob.cost(rn);
        } catch (const InvalidArgument&) {
        }
      }
      if (cn < c) {
        const double rel = (c - cn) / c;
        x = xn;
        r = rn;
        c = cn;
        history.push_back(c);
        lambda = std::max(lambda / 10, 1e-12);
        accepted = true;
        if (rel < opt.rel_tol || dx.norm() < opt.step_tol * std::max(1.0, x.norm())) converged = true;
      } else {
        if (dx.norm() < opt.step_tol * std::max(1.0, x.norm())) {
          converged = true;
          break;
        }
        lambda *= 10;
        if (lambda > 1e16) {
          converged = true;  // no descent direction left
          break;
        }
      }
    }
  }
  if (!converged) throw OptimizationError("optimize: no convergence within the iteration limit");
  if (!prob.monotone(x)) throw OptimizationError("optimize: solution violates the monotonicity guard");

  CalibrationResult res;
  prob.unpack(x, res.K, res.D);
  for (int j = 0; j < prob.views(); ++j) res.poses.push_back(prob.pose(x, j));
  res.cost = c;
  res.iterations = it;
  res.cost_history = std::move(history);
  res.param_names = prob.intrinsic_names();
  const int m = 2 * target.count();
  double total = 0.0;
  for (int j = 0; j < prob.views(); ++j) {
    const Eigen::VectorXd rv = r.segment(j * m, m);
    ViewStats vs;
    for (int k = 0; k < target.count(); ++k) vs.max = std::max(vs.max, rv.segment<2>(2 * k).norm());
    vs.rms = std::sqrt(CalibrationProblem::unweighted_cost(rv) / target.count());
    total += CalibrationProblem::unweighted_cost(rv);
    res.per_view.push_back(vs);
  }
  res.rms_reproj = std::sqrt(total / (target.count() * prob.views()));
  return res;
}

// Zhang initialisation, refinement and covariance in one call.
inline CalibrationResult calibrate(const std::vector<DetectedGrid>& grids, const TargetSpec& target,
                                   const CalibOptions& opt = {}) {
  if (grids.size() < 3) throw DegenerateConfiguration("calibrate: at least 3 views required");
  const auto views = grid_points(grids);
  Point2 centre = Point2::Zero();
  if (grids[0].width > 0 && grids[0].height > 0) {
    centre = Point2(0.5 * (grids[0].width - 1), 0.5 * (grids[0].height - 1));
  } else {
    double n = 0;
    for (const auto& v : views)
      for (const auto& p : v) centre += p, n += 1;
    centre /= n;
  }
  const RadialInit ri = radial_zhang_init(views, target, centre, opt.nd, opt.estimate_skew);
  // The centre-point model is cheap and lands close to the unbiased optimum.
  CalibOptions first = opt;
  first.unbiased = false;
  CalibrationResult res = optimize(grids, target, ri.init.K, ri.D, ri.init.poses, first);
  if (opt.unbiased) res = optimize(grids, target, res.K, res.D, res.poses, opt);
  // Covariance always uses the measurement covariances, whatever the loss.
  CalibOptions copt = opt;
  copt.weighted = true;
  const CalibrationProblem prob(grids, target, copt);
  res.param_cov = parameter_covariance(prob, prob.pack(res.K, res.D, res.poses));
  return res;
}

}  // namespace discocal
