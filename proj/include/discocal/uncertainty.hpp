#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>
#include <algorithm>
#include <cmath>
#include <vector>

#include "discocal/error.hpp"
#include "discocal/image.hpp"
#include "discocal/moments.hpp"

namespace discocal {

using SparseMat = Eigen::SparseMatrix<double>;
using Matrix2xX = Eigen::Matrix<double, 2, Eigen::Dynamic>;

// Normalisation of the ring prior so a neighbour-conditioned point has variance sigma^2.
inline const double kPriorZ = 3.0 - std::sqrt(2.0);

// State vector layout is interleaved: [u0, v0, u1, v1, ...].
struct PriorInfo {
  SparseMat omega;
  double sigma = 1.0;
  double z = kPriorZ;
  int n = 0;
};

struct Posterior {
  SparseMat omega;
  bool positive_definite = false;
};

struct CentroidMeasurement {
  Point2 p = Point2::Zero();
  Eigen::Matrix2d sigma = Eigen::Matrix2d::Zero();
  double epsilon = 0.0;
};

struct UncertaintyParams {
  double sigma = 1.0;     // connectivity scale of the prior, px
  int window = 5;         // half-width of the intensity-range window, px
  double g_floor = 1e-3;  // gradient norm below which a point carries no information
};

// 2*sqrt(trace/2): mean 2-sigma radius.
inline double scalar_uncertainty(const Eigen::Matrix2d& s) { return 2.0 * std::sqrt(0.5 * s.trace()); }

inline PriorInfo prior_information(int n, double sigma) {
  if (n < 3) throw InvalidArgument("prior_information: n must be >= 3");
  if (!(sigma > 0.0)) throw InvalidArgument("prior_information: sigma must be positive");
  const double s = 1.0 / (kPriorZ * sigma * sigma);
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(size_t(6 * n));
  for (int i = 0; i < n; ++i) {
    const int prev = (i + n - 1) % n, next = (i + 1) % n;
    for (int k = 0; k < 2; ++k) {
      trip.emplace_back(2 * i + k, 2 * i + k, 2.0 * s);
      trip.emplace_back(2 * i + k, 2 * prev + k, -s);
      trip.emplace_back(2 * i + k, 2 * next + k, -s);
    }
  }
  PriorInfo p;
  p.omega.resize(2 * n, 2 * n);
  p.omega.setFromTriplets(trip.begin(), trip.end());
  p.sigma = sigma;
  p.n = n;
  return p;
}

// Rank-one information along the local gradient, (4|g| / (Imax - Imin))^2 g^ g^T.
inline Eigen::Matrix2d gradient_information(const GrayImage& img, const GradientField& grad, const Point2& pt,
                                            int window = 5, double g_floor = 1e-3) {
  const int u = std::clamp(int(std::lround(pt.x())), 0, img.width - 1);
  const int v = std::clamp(int(std::lround(pt.y())), 0, img.height - 1);
  const Eigen::Vector2d g(grad.x(u, v), grad.y(u, v));
  const double gn = g.norm();
  const auto r = local_intensity_range(img, pt.x(), pt.y(), window);
  const double range = r.max - r.min;
  if (gn < g_floor || !(range > 0.0)) return Eigen::Matrix2d::Zero();
  const double w = 4.0 * gn / range;
  const Eigen::Vector2d gh = g / gn;
  return (w * w) * (gh * gh.transpose());
}

namespace detail {

// Posterior is PD iff the summed point information pins both translation directions.
inline bool pins_translation(const std::vector<Eigen::Matrix2d>& infos) {
  Eigen::Matrix2d sum = Eigen::Matrix2d::Zero();
  for (const auto& m : infos) sum += m;
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(sum, Eigen::EigenvaluesOnly);
  const double hi = es.eigenvalues()(1), lo = es.eigenvalues()(0);
  return hi > 0.0 && lo > 1e-12 * hi;
}

}  // namespace detail

inline Posterior posterior_information(const PriorInfo& prior, const std::vector<Eigen::Matrix2d>& infos) {
  if (int(infos.size()) != prior.n) throw InvalidArgument("posterior_information: size mismatch");
  SparseMat blocks(2 * prior.n, 2 * prior.n);
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(infos.size() * 4);
  for (int i = 0; i < prior.n; ++i)
    for (int r = 0; r < 2; ++r)
      for (int c = 0; c < 2; ++c) trip.emplace_back(2 * i + r, 2 * i + c, infos[size_t(i)](r, c));
  blocks.setFromTriplets(trip.begin(), trip.end());
  Posterior post;
  post.omega = prior.omega + blocks;
  post.positive_definite = false;
  if (detail::pins_translation(infos)) {
    Eigen::SimplicialLLT<SparseMat> llt(post.omega);
    post.positive_definite = llt.info() == Eigen::Success;
  }
  return post;
}

// d(centroid)/d(points), 2 x 2n, interleaved columns. Computed in coordinates
// relative to the first vertex; the result is translation invariant.
inline Matrix2xX centroid_jacobian(const Contour& c) {
  const int n = int(c.size());
  if (n < 3) throw InvalidArgument("centroid_jacobian: need at least 3 points");
  const Point2 o = c[0];
  const size_t sn = c.size();
  std::vector<double> u(sn), v(sn), cr(sn);
  for (int i = 0; i < n; ++i) {
    u[size_t(i)] = c[size_t(i)].x() - o.x();
    v[size_t(i)] = c[size_t(i)].y() - o.y();
  }
  double a0 = 0.0, a1 = 0.0, a2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const int j = (i + 1) % n;
    cr[size_t(i)] = u[size_t(j)] * v[size_t(i)] - u[size_t(i)] * v[size_t(j)];
    a0 += cr[size_t(i)];
    a1 += cr[size_t(i)] * (u[size_t(j)] + u[size_t(i)]);
    a2 += cr[size_t(i)] * (v[size_t(j)] + v[size_t(i)]);
  }
  const double m00 = 0.5 * a0;
  if (std::abs(m00) < 1e-9) throw InvalidArgument("centroid_jacobian: degenerate polygon");
  const double pu = a1 / 6.0 / m00, pv = a2 / 6.0 / m00;

  Matrix2xX J(2, 2 * n);
  for (int i = 0; i < n; ++i) {
    const size_t p = size_t((i + n - 1) % n), q = size_t((i + 1) % n), k = size_t(i);
    const double d00u = 0.5 * (v[p] - v[q]);
    const double d00v = 0.5 * (u[q] - u[p]);
    const double d10u = (v[p] * (u[k] + u[p]) + cr[p] - v[q] * (u[q] + u[k]) + cr[k]) / 6.0;
    const double d10v = (u[q] * (u[q] + u[k]) - u[p] * (u[k] + u[p])) / 6.0;
    const double d01u = (v[p] * (v[k] + v[p]) - v[q] * (v[q] + v[k])) / 6.0;
    const double d01v = (u[q] * (v[q] + v[k]) + cr[k] - u[p] * (v[k] + v[p]) + cr[p]) / 6.0;
    J(0, 2 * i) = (d10u - pu * d00u) / m00;
    J(0, 2 * i + 1) = (d10v - pu * d00v) / m00;
    J(1, 2 * i) = (d01u - pv * d00u) / m00;
    J(1, 2 * i + 1) = (d01v - pv * d00v) / m00;
  }
  return J;
}

// J Omega^-1 J^T through the Cholesky factor: T = L^-1 P J^T, Sigma = T^T T.
inline Eigen::Matrix2d centroid_covariance(const Matrix2xX& J, const SparseMat& omega) {
  if (omega.rows() != J.cols() || omega.cols() != J.cols())
    throw InvalidArgument("centroid_covariance: dimension mismatch");
  Eigen::SimplicialLLT<SparseMat> llt(omega);
  if (llt.info() != Eigen::Success) throw NotPositiveDefinite("centroid_covariance: information not positive definite");
  Eigen::MatrixXd pj = llt.permutationP() * J.transpose();
  llt.matrixL().solveInPlace(pj);
  Eigen::Matrix2d s = pj.transpose() * pj;
  return 0.5 * (s + s.transpose());
}

inline Eigen::Matrix2d centroid_covariance(const Matrix2xX& J, const Eigen::MatrixXd& omega) {
  if (omega.rows() != J.cols() || omega.cols() != J.cols())
    throw InvalidArgument("centroid_covariance: dimension mismatch");
  Eigen::LLT<Eigen::MatrixXd> llt(omega);
  if (llt.info() != Eigen::Success) throw NotPositiveDefinite("centroid_covariance: information not positive definite");
  const Eigen::MatrixXd T = llt.matrixL().solve(J.transpose());
  Eigen::Matrix2d s = T.transpose() * T;
  return 0.5 * (s + s.transpose());
}

// Sigma_p for a contour with given per-point information. Contour winding must be normalised.
inline Eigen::Matrix2d contour_covariance(const Contour& c, const std::vector<Eigen::Matrix2d>& infos, double sigma) {
  const PriorInfo prior = prior_information(int(c.size()), sigma);
  const Posterior post = posterior_information(prior, infos);
  if (!post.positive_definite) throw NotPositiveDefinite("no usable gradient on the boundary");
  return centroid_covariance(centroid_jacobian(c), post.omega);
}

// Full centroid measurement for one traced contour.
inline CentroidMeasurement measure_centroid(const GrayImage& img, const GradientField& grad, Contour c,
                                            const UncertaintyParams& prm = {}) {
  normalize_orientation(c);
  std::vector<Eigen::Matrix2d> infos(c.size());
  for (size_t i = 0; i < c.size(); ++i) infos[i] = gradient_information(img, grad, c[i], prm.window, prm.g_floor);
  CentroidMeasurement out;
  out.p = polygon_centroid(polygon_moments(c));
  out.sigma = contour_covariance(c, infos, prm.sigma);
  out.epsilon = scalar_uncertainty(out.sigma);
  return out;
}

}  // namespace discocal
