#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "discocal/calib.hpp"
#include "discocal/detector.hpp"
#include "discocal/error.hpp"
#include "discocal/image.hpp"
#include "discocal/parallel.hpp"
#include "discocal/projection.hpp"
#include "discocal/uncmap.hpp"

namespace discocal {

struct Blur {
  enum class Kind { None, Gaussian, Translation, Rotation };
  Kind kind = Kind::None;
  double sigma = 0.0;            // Gaussian, px
  Point2 shift = Point2::Zero();  // Translation: frames span [-shift, +shift] px
  double angle = 0.0;            // Rotation: frames span [-angle, +angle] deg about the target centre image

  static Blur none() { return {}; }
  static Blur gaussian(double s) { return {Kind::Gaussian, s, Point2::Zero(), 0.0}; }
  static Blur translation(const Point2& d) { return {Kind::Translation, 0.0, d, 0.0}; }
  static Blur rotation(double deg) { return {Kind::Rotation, 0.0, Point2::Zero(), deg}; }
};

struct RenderSpec {
  Intrinsics K;
  Distortion D;
  Pose pose;
  TargetSpec target;
  int width = 1200;
  int height = 900;
  int supersample = 8;
  Blur blur;
  double noise = 0.0;  // additive Gaussian, gray levels
  bool quantize = true;
  int frames = 15;     // motion-blur sub-frames
  double max_radius = 0.85;  // normalised radius every circle must stay below
};

struct RenderResult {
  GrayImage image;
  std::vector<Point2> centroids;  // true projected centroids, row-major
  std::vector<Contour> contours;  // true projected boundaries
};

// Image of a target circle boundary sampled at m uniform angles.
inline Contour projected_circle(const Intrinsics& K, const Distortion& D, const Pose& E, const Point2& c, double r,
                                int m = 720) {
  const Eigen::Matrix3d R = E.R();
  Contour out(static_cast<size_t>(m));
  for (int j = 0; j < m; ++j) {
    const double a = 2.0 * M_PI * j / m;
    out[size_t(j)] = K.apply(D.apply(to_normalized(E, R, c + r * Point2(std::cos(a), std::sin(a)))));
  }
  return out;
}

namespace detail {

// Pixel -> target plane through the inverse camera model.
class InverseMap {
 public:
  InverseMap(const Intrinsics& K, const Distortion& D, const Pose& E) : K_(K), D_(D) {
    const Eigen::Matrix3d R = E.R();
    Eigen::Matrix3d H;
    H.col(0) = R.col(0);
    H.col(1) = R.col(1);
    H.col(2) = E.t;
    Hi_ = H.inverse();
    r_fold_ = D.monotone_radius();
  }

  std::optional<Point2> operator()(const Point2& px) const {
    Point2 pn;
    if (!D_.undistort(K_.unapply(px), pn) || pn.norm() >= r_fold_) return std::nullopt;
    const Eigen::Vector3d q = Hi_ * Eigen::Vector3d(pn.x(), pn.y(), 1.0);
    if (!(q.z() > 0.0)) return std::nullopt;  // ray meets the plane behind the camera
    return Point2(q.x() / q.z(), q.y() / q.z());
  }

 private:
  Intrinsics K_;
  Distortion D_;
  Eigen::Matrix3d Hi_;
  double r_fold_;
};

inline bool inside_target_circle(const TargetSpec& t, const Point2& q) {
  const int c = std::clamp(int(std::lround(q.x() / t.spacing)), 0, t.cols - 1);
  const int r = std::clamp(int(std::lround(q.y() / t.spacing)), 0, t.rows - 1);
  return (q - Point2(c * t.spacing, r * t.spacing)).squaredNorm() < t.radius * t.radius;
}

struct PixelBox {
  int u0, v0, u1, v1;  // inclusive
};

// Coverage fraction of the circles over the pixels of `box`, pixel positions
// first mapped by `warp`. Pixels outside the box stay at zero.
template <class Warp>
std::vector<double> coverage(const RenderSpec& s, const Warp& warp, const PixelBox& box) {
  const InverseMap inv(s.K, s.D, s.pose);
  const int W = s.width, H = s.height;
  const int bw = box.u1 - box.u0 + 1, bh = box.v1 - box.v0 + 1;
  const size_t cw = size_t(bw) + 1;
  std::vector<std::optional<Point2>> corner(cw * (size_t(bh) + 1));
  for (int v = 0; v <= bh; ++v)
    for (int u = 0; u <= bw; ++u)
      corner[size_t(v) * cw + size_t(u)] = inv(warp(Point2(box.u0 + u - 0.5, box.v0 + v - 0.5)));

  const double r2 = s.target.radius * s.target.radius;
  std::vector<double> cov(size_t(W) * size_t(H), 0.0);
  for (int v = box.v0; v <= box.v1; ++v)
    for (int u = box.u0; u <= box.u1; ++u) {
      const size_t cu = size_t(u - box.u0), cv = size_t(v - box.v0);
      const std::optional<Point2>* c4[4] = {&corner[cv * cw + cu], &corner[cv * cw + cu + 1],
                                            &corner[(cv + 1) * cw + cu], &corner[(cv + 1) * cw + cu + 1]};
      bool valid = true;
      Point2 lo(1e300, 1e300), hi(-1e300, -1e300);
      for (auto* c : c4) {
        if (!c->has_value()) {
          valid = false;
          break;
        }
        lo = lo.cwiseMin(**c);
        hi = hi.cwiseMax(**c);
      }
      if (valid) {
        // Margin covers the curvature of the pixel preimage between its corners.
        const Point2 pad = 0.1 * (hi - lo) + Point2::Constant(1e-9);
        lo -= pad, hi += pad;
        int state = 0;  // 0 outside all, 1 fully inside one, 2 mixed
        for (int k = 0; k < s.target.count() && state != 2; ++k) {
          const Point2 cc = s.target.center(k);
          const Point2 near = cc.cwiseMax(lo).cwiseMin(hi);
          if ((near - cc).squaredNorm() >= r2) continue;
          const Point2 far((cc.x() - lo.x() > hi.x() - cc.x()) ? lo.x() : hi.x(),
                           (cc.y() - lo.y() > hi.y() - cc.y()) ? lo.y() : hi.y());
          state = (far - cc).squaredNorm() < r2 ? 1 : 2;
        }
        if (state != 2) {
          cov[size_t(v) * size_t(W) + size_t(u)] = state;
          continue;
        }
      }
      const int n = s.supersample;
      int hits = 0;
      for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
          const auto q = inv(warp(Point2(u - 0.5 + (i + 0.5) / n, v - 0.5 + (j + 0.5) / n)));
          if (q && inside_target_circle(s.target, *q)) ++hits;
        }
      cov[size_t(v) * size_t(W) + size_t(u)] = double(hits) / double(n * n);
    }
  return cov;
}

}  // namespace detail

// Dark circles on a white target. Throws InvalidArgument when a circle leaves the frame.
inline RenderResult render(const RenderSpec& s, std::mt19937_64* rng = nullptr) {
  s.target.validate();
  if (s.supersample < 4) throw InvalidArgument("render: supersample must be >= 4");
  if (s.width < 8 || s.height < 8) throw InvalidArgument("render: image too small");

  RenderResult out;
  const Eigen::Matrix3d R = s.pose.R();
  for (int k = 0; k < s.target.count(); ++k) {
    const Point2 c = s.target.center(k);
    for (int j = 0; j < 64; ++j) {
      const double a = 2.0 * M_PI * j / 64;
      if (to_normalized(s.pose, R, c + s.target.radius * Point2(std::cos(a), std::sin(a))).norm() > s.max_radius)
        throw InvalidArgument("render: circle beyond the usable field of view");
    }
    out.contours.push_back(projected_circle(s.K, s.D, s.pose, c, s.target.radius));
    for (const auto& p : out.contours.back())
      if (p.x() < 2 || p.y() < 2 || p.x() > s.width - 3 || p.y() > s.height - 3)
        throw InvalidArgument("render: circle out of frame");
    out.centroids.push_back(unbiased_circle_centroid(s.K, s.D, s.pose, c, s.target.radius));
  }

  // Pixels whose (warped) footprint can touch a circle image.
  auto box_of = [&](const auto& fwd) {
    Point2 lo(1e300, 1e300), hi(-1e300, -1e300);
    for (const auto& c : out.contours)
      for (const auto& p : c) {
        const Point2 q = fwd(p);
        lo = lo.cwiseMin(q), hi = hi.cwiseMax(q);
      }
    return detail::PixelBox{std::max(0, int(std::floor(lo.x())) - 2), std::max(0, int(std::floor(lo.y())) - 2),
                            std::min(s.width - 1, int(std::ceil(hi.x())) + 2),
                            std::min(s.height - 1, int(std::ceil(hi.y())) + 2)};
  };

  std::vector<double> cov;
  const bool motion = s.blur.kind == Blur::Kind::Translation || s.blur.kind == Blur::Kind::Rotation;
  if (!motion) {
    const auto id = [](const Point2& p) { return p; };
    cov = detail::coverage(s, id, box_of(id));
  } else {
    if (s.frames < 2) throw InvalidArgument("render: motion blur needs at least 2 frames");
    const Point2 pivot = project_point(s.K, s.D, s.pose,
                                       Point2(0.5 * (s.target.cols - 1) * s.target.spacing,
                                              0.5 * (s.target.rows - 1) * s.target.spacing));
    cov.assign(size_t(s.width) * size_t(s.height), 0.0);
    for (int f = 0; f < s.frames; ++f) {
      const double a = -1.0 + 2.0 * f / (s.frames - 1);
      std::vector<double> fc;
      if (s.blur.kind == Blur::Kind::Translation) {
        const Point2 d = a * s.blur.shift;
        fc = detail::coverage(s, [d](const Point2& p) { return Point2(p - d); },
                              box_of([d](const Point2& p) { return Point2(p + d); }));
      } else {
        const Eigen::Matrix2d Rf = Eigen::Rotation2D<double>(a * s.blur.angle * M_PI / 180.0).toRotationMatrix();
        const Eigen::Matrix2d Ri = Rf.transpose();
        fc = detail::coverage(s, [&](const Point2& p) { return Point2(pivot + Ri * (p - pivot)); },
                              box_of([&](const Point2& p) { return Point2(pivot + Rf * (p - pivot)); }));
      }
      for (size_t i = 0; i < cov.size(); ++i) cov[i] += fc[i] / s.frames;
    }
  }

  out.image = GrayImage(s.width, s.height);
  for (size_t i = 0; i < cov.size(); ++i) out.image.data[i] = 255.0 * (1.0 - cov[i]);
  if (s.blur.kind == Blur::Kind::Gaussian && s.blur.sigma > 0) out.image = gaussian_blur(out.image, s.blur.sigma);
  if (s.noise > 0) {
    if (!rng) throw InvalidArgument("render: noise requires a random generator");
    std::normal_distribution<double> n(0.0, s.noise);
    for (auto& v : out.image.data) v += n(*rng);
  }
  if (s.quantize)
    for (auto& v : out.image.data) v = double(to_u8(v));
  else
    for (auto& v : out.image.data) v = std::clamp(v, 0.0, 255.0);
  return out;
}

// Target centre at distance rho in direction (azimuth, revolution); target
// normal tilted by `tilt` from the optical axis towards the same azimuth. With
// tilt == revolution the target is tangent to the camera-centred sphere.
inline Pose sphere_pose(const TargetSpec& t, double rho, double azimuth, double revolution, double tilt, double roll) {
  auto dir = [azimuth](double polar) {
    return Eigen::Vector3d(std::sin(polar) * std::cos(azimuth), std::sin(polar) * std::sin(azimuth), std::cos(polar));
  };
  const Eigen::Vector3d P = rho * dir(revolution);
  const Eigen::Vector3d n = dir(tilt);
  Eigen::Vector3d x = Eigen::Vector3d::UnitX() - n.x() * n;
  x.normalize();
  x = Eigen::AngleAxisd(roll, n) * x;
  Eigen::Matrix3d R;
  R.col(0) = x;
  R.col(1) = n.cross(x);
  R.col(2) = n;
  const Eigen::Vector3d c(0.5 * (t.cols - 1) * t.spacing, 0.5 * (t.rows - 1) * t.spacing, 0.0);
  return Pose::from_rotation(R, P - R * c);
}

inline Pose tangent_pose(const TargetSpec& t, double rho, double azimuth, double revolution, double roll) {
  return sphere_pose(t, rho, azimuth, revolution, revolution, roll);
}

// Largest normalised radius reached by any circle boundary.
inline double max_field_radius(const TargetSpec& t, const Pose& E, int samples = 16) {
  const Eigen::Matrix3d R = E.R();
  double m = 0.0;
  for (int k = 0; k < t.count(); ++k)
    for (int j = 0; j < samples; ++j) {
      const double a = 2 * M_PI * j / samples;
      const Eigen::Vector3d pc = R * Eigen::Vector3d(t.center(k).x() + t.radius * std::cos(a),
                                                     t.center(k).y() + t.radius * std::sin(a), 0.0) + E.t;
      if (!(pc.z() > 0)) return std::numeric_limits<double>::infinity();
      m = std::max(m, pc.head<2>().norm() / pc.z());
    }
  return m;
}

struct PoseSampler {
  double rho_near = 6.0;   // target spacings
  double rho_far = 9.0;
  double max_tilt = 40.0;  // deg
  double max_roll = 20.0;
  double max_radius = 0.8;  // every circle stays inside this normalised radius
};

// Alternates near and far shells. Tilt is uniform in [0, max_tilt]; the
// revolution starts at the tilt (tangent) and shrinks until the target fits.
inline std::vector<Pose> sample_poses(int n, const TargetSpec& t, const PoseSampler& ps, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const double deg = M_PI / 180.0;
  std::vector<Pose> out;
  int attempts = 0;
  while (int(out.size()) < n) {
    if (++attempts > 1000 * std::max(n, 1))
      throw InvalidArgument("sample_poses: sampler cannot satisfy the field-of-view limit");
    const double rho = (out.size() % 2 == 0 ? ps.rho_near : ps.rho_far) * t.spacing;
    const double tilt = ps.max_tilt * deg * u01(rng);
    const double az = 2 * M_PI * u01(rng);
    const double roll = ps.max_roll * deg * (2 * u01(rng) - 1);
    for (double rev = tilt; rev >= 0.0; rev -= deg) {
      const Pose E = sphere_pose(t, rho, az, rev, tilt, roll);
      if (max_field_radius(t, E) < ps.max_radius) {
        out.push_back(E);
        break;
      }
    }
  }
  return out;
}

struct DatasetConfig {
  Intrinsics K{600, 600, 600, 450, 0};
  Distortion D{{-0.4}};
  TargetSpec target{3, 4, 1.0, 0.35};
  int width = 1200;
  int height = 900;
  int count = 30;
  int supersample = 8;
  double noise = 1.0;
  bool motion_blur = false;
  double max_shift = 5.0;   // px, translation blur half-extent upper bound
  double max_angle = 5.0;   // deg, rotation blur half-extent upper bound
  PoseSampler sampler;
  std::uint64_t seed = 42;
};

struct Dataset {
  DatasetConfig config;
  std::vector<Pose> poses;
  std::vector<Blur> blurs;
  std::vector<RenderResult> renders;
};

inline Dataset make_dataset(const DatasetConfig& cfg, int jobs = 1) {
  if (cfg.count < 1) throw InvalidArgument("make_dataset: count must be positive");
  std::mt19937_64 rng(cfg.seed);
  Dataset ds;
  ds.config = cfg;
  ds.poses = sample_poses(cfg.count, cfg.target, cfg.sampler, rng);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::vector<std::uint64_t> seeds;
  for (int j = 0; j < cfg.count; ++j) {
    Blur b;
    if (cfg.motion_blur) {
      // Alternate translation and rotation blur of random extent.
      if (j % 2 == 0) {
        const double a = 2 * M_PI * u01(rng), e = cfg.max_shift * (0.2 + 0.8 * u01(rng));
        b = Blur::translation(e * Point2(std::cos(a), std::sin(a)));
      } else {
        b = Blur::rotation(cfg.max_angle * (0.2 + 0.8 * u01(rng)) * (u01(rng) < 0.5 ? -1 : 1));
      }
    }
    ds.blurs.push_back(b);
    seeds.push_back(rng());
  }
  ds.renders.resize(size_t(cfg.count));
  parallel_for(cfg.count, jobs, [&](int j) {
    RenderSpec s;
    s.K = cfg.K;
    s.D = cfg.D;
    s.pose = ds.poses[size_t(j)];
    s.target = cfg.target;
    s.width = cfg.width;
    s.height = cfg.height;
    s.supersample = cfg.supersample;
    s.blur = ds.blurs[size_t(j)];
    s.noise = cfg.noise;
    s.max_radius = 1.0;
    std::mt19937_64 r(seeds[size_t(j)]);
    ds.renders[size_t(j)] = render(s, &r);
  });
  return ds;
}

// ---- Monte-Carlo harness ----

struct Arm {
  std::string name;
  bool unbiased = true;
  bool weighted = true;
};

inline std::vector<Arm> default_arms() {
  return {{"naive_unweighted", false, false}, {"unbiased_unweighted", true, false}, {"unbiased_weighted", true, true}};
}

struct ParamStats {
  std::string name;
  double mean = 0.0;
  double std = 0.0;
};

struct ArmResult {
  std::string name;
  std::vector<ParamStats> params;
  std::vector<std::vector<double>> draws;  // successful draws, values in `params` order
  int fails = 0;
};

struct MonteCarloConfig {
  int draws = 30;
  int per_draw = 6;
  std::uint64_t seed = 42;
  CalibOptions calib;
  DetectParams detect;
  std::vector<Arm> arms = default_arms();
  int jobs = 1;
};

struct MonteCarloResult {
  int images = 0;
  int detection_fails = 0;
  std::vector<std::vector<int>> subsets;
  std::vector<ArmResult> arms;
};

// Draws `per_draw` distinct detected images per repetition and calibrates each arm on them.
inline MonteCarloResult monte_carlo(const std::vector<GrayImage>& images, const TargetSpec& target,
                                    const MonteCarloConfig& cfg) {
  if (cfg.per_draw < 3) throw InvalidArgument("monte_carlo: per_draw must be >= 3");
  MonteCarloResult res;
  res.images = int(images.size());
  std::vector<std::optional<DetectedGrid>> det(images.size());
  parallel_for(int(images.size()), cfg.jobs, [&](int i) {
    try {
      det[size_t(i)] = detect(images[size_t(i)], target, cfg.detect);
    } catch (const DetectionError&) {
    }
  });
  std::vector<int> ok;
  for (size_t i = 0; i < det.size(); ++i)
    if (det[i])
      ok.push_back(int(i));
    else
      ++res.detection_fails;
  if (int(ok.size()) < cfg.per_draw) throw DetectionError("monte_carlo: too few detected images");

  std::mt19937_64 rng(cfg.seed);
  for (int d = 0; d < cfg.draws; ++d) {
    std::vector<int> pool = ok;
    for (int i = 0; i < cfg.per_draw; ++i) {
      const auto j = size_t(i) + size_t(rng() % (pool.size() - size_t(i)));
      std::swap(pool[size_t(i)], pool[j]);
    }
    pool.resize(size_t(cfg.per_draw));
    res.subsets.push_back(pool);
  }

  const size_t na = cfg.arms.size(), nd = size_t(cfg.draws);
  std::vector<std::optional<CalibrationResult>> runs(na * nd);
  parallel_for(int(na * nd), cfg.jobs, [&](int t) {
    const Arm& arm = cfg.arms[size_t(t) / nd];
    CalibOptions opt = cfg.calib;
    opt.unbiased = arm.unbiased;
    opt.weighted = arm.weighted;
    std::vector<DetectedGrid> grids;
    for (int i : res.subsets[size_t(t) % nd]) grids.push_back(*det[size_t(i)]);
    try {
      runs[size_t(t)] = calibrate(grids, target, opt);
    } catch (const Error&) {
    }
  });

  for (size_t a = 0; a < na; ++a) {
    ArmResult ar;
    ar.name = cfg.arms[a].name;
    std::vector<std::string> names{"fx", "fy", "cx", "cy"};
    if (cfg.calib.estimate_skew) names.push_back("eta");
    for (int i = 1; i <= cfg.calib.nd; ++i) names.push_back("d" + std::to_string(i));
    for (size_t d = 0; d < nd; ++d) {
      const auto& r = runs[a * nd + d];
      if (!r) {
        ++ar.fails;
        continue;
      }
      std::vector<double> v{r->K.fx, r->K.fy, r->K.cx, r->K.cy};
      if (cfg.calib.estimate_skew) v.push_back(r->K.eta);
      for (double di : r->D.d) v.push_back(di);
      ar.draws.push_back(v);
    }
    for (size_t p = 0; p < names.size(); ++p) {
      ParamStats ps{names[p], 0.0, 0.0};
      const double n = double(ar.draws.size());
      for (const auto& v : ar.draws) ps.mean += v[p] / n;
      for (const auto& v : ar.draws) ps.std += (v[p] - ps.mean) * (v[p] - ps.mean);
      ps.std = n > 1 ? std::sqrt(ps.std / (n - 1)) : 0.0;
      if (ar.draws.empty()) ps.mean = ps.std = std::nan("");
      ar.params.push_back(ps);
    }
    res.arms.push_back(std::move(ar));
  }
  return res;
}

// ---- Self-rotation study ----------------------------------------------------
//
// A target turned by theta about the camera's vertical axis is carried along a
// horizontal arc of radius rho; for each revolution phi the mean map
// uncertainty of six fixed anchor views plus the probe view is recorded.

struct SweepConfig {
  Intrinsics K{600, 600, 600, 450, 0};
  Distortion D;  // pinhole by default
  TargetSpec target;
  int width = 1200;
  int height = 900;
  double rho = 16.0;
  double sigma = 0.01;  // isotropic centroid variance, px^2
  double phi_lo = -20.0, phi_hi = 55.0, step = 2.5;  // deg
  int jobs = 1;
};

struct SweepPoint {
  double phi = 0.0;  // deg
  double mean = 0.0;  // px
};

struct SweepResult {
  double theta = 0.0;  // deg
  std::vector<SweepPoint> points;
  double argmin = std::numeric_limits<double>::quiet_NaN();
};

// Anchors sit above and below the arc so the probe path never overlaps them.
inline std::vector<Pose> anchor_poses(const TargetSpec& t, double rho) {
  const Eigen::Vector3d c(0.5 * (t.cols - 1) * t.spacing, 0.5 * (t.rows - 1) * t.spacing, 0.0);
  std::vector<Pose> out;
  for (int j = 0; j < 6; ++j) {
    const double side = j % 2 ? 1.0 : -1.0, k = j / 2 - 1;
    const Eigen::Matrix3d R = (Eigen::AngleAxisd(k * 20 * M_PI / 180, Eigen::Vector3d::UnitY()) *
                               Eigen::AngleAxisd(-side * 20 * M_PI / 180, Eigen::Vector3d::UnitX()))
                                  .toRotationMatrix();
    out.push_back(Pose::from_rotation(R, Eigen::Vector3d(0.25 * k * rho, 0.3 * side * rho, rho) - R * c));
  }
  return out;
}

inline bool in_frame(const SweepConfig& cfg, const Pose& E) {
  if (!cfg.D.d.empty() && max_field_radius(cfg.target, E) > 0.85) return false;
  for (int k = 0; k < cfg.target.count(); ++k)
    for (const auto& q : projected_circle(cfg.K, cfg.D, E, cfg.target.center(k), cfg.target.radius, 32))
      if (!(q.x() > 2 && q.y() > 2 && q.x() < cfg.width - 3 && q.y() < cfg.height - 3)) return false;
  return true;
}

inline Eigen::MatrixXd pose_set_covariance(const SweepConfig& cfg, const std::vector<Pose>& poses) {
  std::vector<DetectedGrid> grids;
  for (const auto& E : poses) {
    DetectedGrid g;
    for (int k = 0; k < cfg.target.count(); ++k) {
      CentroidMeasurement m;
      m.p = unbiased_circle_centroid(cfg.K, cfg.D, E, cfg.target.center(k), cfg.target.radius);
      m.sigma = cfg.sigma * Eigen::Matrix2d::Identity();
      g.measurements.push_back(m);
    }
    grids.push_back(std::move(g));
  }
  CalibOptions opt;
  opt.nd = int(cfg.D.d.size());
  const CalibrationProblem prob(grids, cfg.target, opt);
  return parameter_covariance(prob, prob.pack(cfg.K, cfg.D, poses));
}

// Revolutions whose probe leaves the frame are skipped.
inline SweepResult revolution_sweep(const SweepConfig& cfg, double theta) {
  const auto anchors = anchor_poses(cfg.target, cfg.rho);
  const double deg = M_PI / 180;
  std::vector<Pose> probes;
  std::vector<double> phis;
  for (double phi = cfg.phi_lo; phi <= cfg.phi_hi + 1e-9; phi += cfg.step) {
    const Pose E = sphere_pose(cfg.target, cfg.rho, 0.0, phi * deg, theta * deg, 0.0);
    if (in_frame(cfg, E)) probes.push_back(E), phis.push_back(phi);
  }
  if (probes.empty()) throw InvalidArgument("revolution_sweep: no probe pose fits the frame");
  SweepResult r;
  r.theta = theta;
  r.points.resize(probes.size());
  parallel_for(int(probes.size()), cfg.jobs, [&](int i) {
    auto poses = anchors;
    poses.push_back(probes[size_t(i)]);
    const auto m = uncertainty_map(cfg.K, cfg.D, pose_set_covariance(cfg, poses), cfg.width, cfg.height);
    r.points[size_t(i)] = {phis[size_t(i)], mean_uncertainty(m)};
  });
  double best = std::numeric_limits<double>::infinity();
  for (const auto& p : r.points)
    if (p.mean < best) best = p.mean, r.argmin = p.phi;
  return r;
}

}  // namespace discocal
