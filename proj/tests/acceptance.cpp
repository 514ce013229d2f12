// End-to-end acceptance run: one PASS/FAIL line per criterion, non-zero exit if any fail.

#include <Eigen/Geometry>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>

#include "discocal/discocal.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace discocal;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void verdict(int id, const std::string& name, bool pass, const std::string& detail) {
  std::cout << (pass ? "PASS" : "FAIL") << "  [" << id << "] " << name << "  " << detail << std::endl;
  if (!pass) ++failures;
}

template <class F>
void guarded(int id, const std::string& name, F&& body) {
  try {
    body();
  } catch (const std::exception& e) {
    verdict(id, name, false, std::string("threw: ") + e.what());
  }
}

std::string fmt(double v, int prec = 4) {
  std::ostringstream s;
  s << std::setprecision(prec) << v;
  return s.str();
}

int jobs() { return int(std::max(1u, std::thread::hardware_concurrency())); }

const ParamStats& param(const MonteCarloResult& m, const std::string& arm, const std::string& name) {
  for (const auto& a : m.arms)
    if (a.name == arm)
      for (const auto& p : a.params)
        if (p.name == name) return p;
  throw std::runtime_error("missing " + arm + "/" + name);
}

struct Tolerance {
  std::string name;
  double truth, mean_tol, std_max;
};

// Ground truth with mean tolerances and 3x the published spreads.
const std::vector<Tolerance> kTable = {{"fx", 600, 1.5, 1.26}, {"fy", 600, 1.5, 1.26}, {"cx", 600, 1.5, 1.02},
                                       {"cy", 450, 1.0, 0.57}, {"d1", -0.4, 0.01, 0.006}};

MonteCarloResult run_mc(bool motion_blur) {
  const Config cfg;
  DatasetConfig dc = cfg.dataset();
  dc.motion_blur = motion_blur;
  const Dataset ds = make_dataset(dc, jobs());
  std::vector<GrayImage> images;
  for (const auto& r : ds.renders) images.push_back(r.image);
  MonteCarloConfig mc = cfg.monte_carlo();
  mc.jobs = jobs();
  return monte_carlo(images, dc.target, mc);
}

// ---- property suites ----

struct Suite {
  std::vector<std::string> failed;
  void expect(bool ok, const std::string& what) {
    if (!ok) failed.push_back(what);
  }
};

void jacobian_checks(Suite& s) {
  std::mt19937 rng(11);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    Contour c = testutil::random_polygon(rng, 20 + t % 40, 10 + t % 25, 0.3);
    if (t % 2) std::reverse(c.begin(), c.end());
    const auto J = centroid_jacobian(c);
    const auto N = oracles::numeric_jacobian(c, 1e-5);
    worst = std::max(worst, (J - N).cwiseAbs().maxCoeff() / J.cwiseAbs().maxCoeff());
  }
  s.expect(worst < 1e-6, "jacobian_fd " + fmt(worst));
}

void cholesky_check(Suite& s) {
  std::mt19937 rng(4);
  std::normal_distribution<double> nd;
  const Contour c = testutil::random_polygon(rng, 20, 10, 0.2);
  const auto J = centroid_jacobian(c);
  Eigen::MatrixXd A(40, 40);
  for (Eigen::Index i = 0; i < A.size(); ++i) A.data()[i] = nd(rng);
  const Eigen::MatrixXd O = A * A.transpose() + 0.5 * Eigen::MatrixXd::Identity(40, 40);
  const Eigen::Matrix2d ref = J * O.inverse() * J.transpose();
  const double dense = (centroid_covariance(J, O) - ref).norm() / ref.norm();
  const double sparse = (centroid_covariance(J, SparseMat(O.sparseView())) - ref).norm() / ref.norm();
  s.expect(dense < 1e-8 && sparse < 1e-8, "cholesky " + fmt(std::max(dense, sparse)));
}

void equivariance_checks(Suite& s) {
  std::mt19937 rng(9);
  Contour c = testutil::random_polygon(rng, 50, 20, 0.1);
  for (auto& q : c) q = (q * 256.0).array().round() / 256.0;
  const auto infos = oracles::ideal_infos(c, 3.0);
  Contour shifted = c;
  for (auto& q : shifted) q += Point2(1000, -37);
  s.expect(contour_covariance(c, infos, 1.0) == contour_covariance(shifted, infos, 1.0), "translation");

  double real = 0.0;
  for (int t = 0; t < 10; ++t) {
    const Contour p = testutil::random_polygon(rng, 60, 20, 0.1);
    const auto in = oracles::ideal_infos(p, 2.0 + t);
    const Eigen::Matrix2d R = Eigen::Rotation2D<double>(0.37 * (t + 1)).toRotationMatrix();
    Contour pr = p;
    auto ir = in;
    for (size_t i = 0; i < p.size(); ++i) pr[i] = R * p[i], ir[i] = R * in[i] * R.transpose();
    const Eigen::Matrix2d a = contour_covariance(p, in, 1.0), b = contour_covariance(pr, ir, 1.0);
    real = std::max(real, (R * a * R.transpose() - b).cwiseAbs().maxCoeff());
  }
  s.expect(real < 1e-9, "rotation_real " + fmt(real));

  double raster = 0.0;
  const auto base = testutil::measure_blob(testutil::render_ellipse(60, 60, 24, 14, 0.0));
  for (double a : {0.3, 0.9, M_PI / 2, 2.2}) {
    const Eigen::Matrix2d R = Eigen::Rotation2D<double>(a).toRotationMatrix();
    const auto m = testutil::measure_blob(testutil::render_ellipse(60, 60, 24, 14, a));
    raster = std::max(raster, (R * base.sigma * R.transpose() - m.sigma).cwiseAbs().maxCoeff());
  }
  s.expect(raster <= 0.05, "rotation_raster " + fmt(raster));
}

void far_near_checks(Suite& s) {
  const int N = 20000;
  const Contour c = testutil::regular_polygon(N, 0, 0, 100);
  const auto J = centroid_jacobian(c);
  const double m00 = polygon_moments(c).m00;
  double far = 0.0;
  for (int i = 0; i < N; i += 37) {
    if (std::abs(c[size_t(i)].x()) < 0.01 * m00) continue;
    const Eigen::Vector2d t = (c[size_t((i + 1) % N)] - c[size_t((i + N - 1) % N)]).normalized();
    const Eigen::Matrix2d B = J.block<2, 2>(0, 2 * i);
    far = std::max(far, (B * t).norm() / (B * Eigen::Vector2d(-t.y(), t.x())).norm());
  }
  s.expect(far < 1e-6, "far_point " + fmt(far));

  const Contour d = testutil::regular_polygon(400, 10, 20, 40, 0.123);
  const auto Jd = centroid_jacobian(d);
  const auto m = polygon_moments(d);
  const double ubar = polygon_centroid(m).x();
  int checked = 0, violated = 0;
  for (size_t i = 0; i < d.size(); ++i) {
    const double du = std::abs(d[i].x() - ubar);
    if (du >= 0.01 * m.m00) continue;
    ++checked;
    violated += Jd.block<1, 2>(0, Eigen::Index(2 * i)).norm() > (std::sqrt(2.0) / 3 + std::sqrt(2.0) * du) / m.m00;
  }
  s.expect(checked > 0 && violated == 0, "near_point " + std::to_string(violated) + "/" + std::to_string(checked));
}

void green_pixel_check(Suite& s) {
  std::mt19937 rng(21);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  int bad = 0;
  for (int t = 0; t < 50; ++t) {
    const double cu = 60 + 5 * uni(rng), cv = 60 + 5 * uni(rng), a = 8 + 30 * uni(rng), b = a * (0.4 + 0.6 * uni(rng));
    const int k = 6 + t % 7;
    const double ph = uni(rng), ang = M_PI * uni(rng);
    const GrayImage img = t % 2 ? testutil::render_ellipse(cu, cv, a, b, ang)
                                : testutil::render_shape(120, 120, [&](double x, double y) {
                                    for (int i = 0; i < k; ++i) {
                                      const double th = ph + 2 * M_PI * i / k;
                                      if ((x - cu) * std::cos(th) + (y - cv) * std::sin(th) > a * std::cos(M_PI / k))
                                        return false;
                                    }
                                    return true;
                                  });
    const auto bin = threshold(img, ThresholdSpec::global(128));
    const auto cs = find_contours(bin);
    if (cs.size() != 1) {
      ++bad;
      continue;
    }
    const Point2 g = polygon_centroid(polygon_moments(cs[0]));
    bad += (g - oracles::pixel_average(bin)).norm() >= 0.5 / std::sqrt(double(cs[0].size()));
  }
  s.expect(bad == 0, "green_vs_pixels " + std::to_string(bad) + "/50");
}

void unbiased_check(Suite& s) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const Intrinsics K{600, 600, 600, 450, 0};
  double worst = 0.0;
  for (int t = 0; t < 20; ++t) {
    const Distortion D{{-0.3 + 0.1 * u(rng)}};
    const Eigen::Vector3d axis(u(rng), u(rng), 0.2 * u(rng));
    const Pose E{axis.normalized() * (0.7 * std::abs(u(rng))), {0.5 * u(rng), 0.5 * u(rng), 4 + u(rng)}};
    const Point2 c(u(rng), u(rng));
    const double r = 0.4 + 0.1 * u(rng);
    worst = std::max(worst, (unbiased_circle_centroid(K, D, E, c, r) - oracles::interior_oracle(K, D, E, c, r)).norm());
  }
  s.expect(worst <= 1e-3, "unbiased_vs_interior " + fmt(worst));
}

void structure_checks(Suite& s) {
  for (int n : {3, 4, 17, 64}) {
    const auto p = prior_information(n, 0.7);
    Eigen::VectorXd ex = Eigen::VectorXd::Zero(2 * n), ey = ex;
    for (int i = 0; i < n; ++i) ex(2 * i) = 1, ey(2 * i + 1) = 1;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es{Eigen::MatrixXd(p.omega)};
    const bool ok = (p.omega * ex).cwiseAbs().maxCoeff() == 0.0 && (p.omega * ey).cwiseAbs().maxCoeff() == 0.0 &&
                    std::abs(es.eigenvalues()(1)) < 1e-12 && es.eigenvalues()(2) > 1e-6;
    s.expect(ok, "prior_null_space n=" + std::to_string(n));
  }
  const auto prior = prior_information(6, 1.0);
  s.expect(!posterior_information(prior, std::vector<Eigen::Matrix2d>(6, Eigen::Matrix2d::Zero())).positive_definite,
           "posterior_zero");
  std::vector<Eigen::Matrix2d> parallel(6, Eigen::Matrix2d::Zero());
  parallel[0](0, 0) = 3.0;
  parallel[3](0, 0) = 1.0;
  s.expect(!posterior_information(prior, parallel).positive_definite, "posterior_parallel");
  std::vector<Eigen::Matrix2d> spread;
  for (int i = 0; i < 6; ++i) {
    const Eigen::Vector2d d(std::cos(i), std::sin(i));
    spread.push_back(d * d.transpose());
  }
  s.expect(posterior_information(prior, spread).positive_definite, "posterior_spread");
}

void propagation_check(Suite& s) {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> n01;
  Eigen::MatrixXd A(7, 7);
  for (int i = 0; i < 49; ++i) A(i / 7, i % 7) = n01(rng);
  const Eigen::VectorXd scale = (Eigen::VectorXd(7) << 0.3, 0.3, 0.2, 0.2, 0.05, 1e-3, 1e-3).finished();
  const Eigen::MatrixXd P =
      scale.asDiagonal() * (A * A.transpose() / 7 + Eigen::MatrixXd::Identity(7, 7)) * scale.asDiagonal();
  const Intrinsics K{600, 602, 598, 451, 0.5};
  const Distortion D{{-0.3, 0.05}};
  const Eigen::MatrixXd L = P.llt().matrixL();
  double worst = 0.0;
  for (const Point2& p : {Point2(0.4, 0.1), Point2(-0.2, 0.5), Point2(0.05, -0.3)}) {
    const Eigen::Matrix2d lin = propagate(K, D, P, {p}, true)[0];
    const int draws = 100000;
    std::vector<Eigen::Vector2d> xs;
    Eigen::Vector2d mean = Eigen::Vector2d::Zero();
    for (int t = 0; t < draws; ++t) {
      Eigen::VectorXd e(7);
      for (int i = 0; i < 7; ++i) e(i) = n01(rng);
      const Eigen::VectorXd q = L * e;
      const Intrinsics Kq{K.fx + q(0), K.fy + q(1), K.cx + q(2), K.cy + q(3), K.eta + q(4)};
      xs.push_back(Kq.apply(Distortion{{D.d[0] + q(5), D.d[1] + q(6)}}.apply(p)));
      mean += xs.back() / draws;
    }
    Eigen::Matrix2d acc = Eigen::Matrix2d::Zero();
    for (const auto& x : xs) acc += (x - mean) * (x - mean).transpose() / (draws - 1);
    worst = std::max(worst, (acc - lin).norm() / lin.norm());
  }
  s.expect(worst <= 0.03, "propagation_vs_mc " + fmt(worst));
}

// ---- blurred-ellipse threshold sweep ----

bool in_polygon(const Contour& P, double x, double y) {
  bool in = false;
  for (size_t i = 0, j = P.size() - 1; i < P.size(); j = i++) {
    const double xi = P[i].x(), yi = P[i].y(), xj = P[j].x(), yj = P[j].y();
    if ((yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi) in = !in;
  }
  return in;
}

// Returns true when the minimum-epsilon candidate also has the highest contour IoU.
bool selection_trial(std::mt19937_64& rng, const DetectParams& prm) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double cu = 80 + 4 * u(rng), cv = 80 + 4 * u(rng), a = 20 + 15 * u(rng), b = a * (0.5 + 0.5 * u(rng));
  const double th = M_PI * u(rng), c = std::cos(th), s = std::sin(th);
  auto inside = [=](double x, double y) {
    const double dx = x - cu, dy = y - cv, p = (c * dx + s * dy) / a, q = (-s * dx + c * dy) / b;
    return p * p + q * q < 1.0;
  };
  GrayImage img = testutil::render_shape(160, 160, inside);
  for (int k = 0; k < 3; ++k) img = gaussian_blur(img, 3.0);
  const GradientField grad = gradient(img);
  double best_eps = 1e300, eps_iou = 0.0, best_iou = 0.0;
  for (int T = 100; T <= 200; T += 10) {
    const auto cands = candidates_for(img, grad, ThresholdSpec::global(T), prm);
    if (cands.empty()) continue;
    const auto& bc = *std::max_element(cands.begin(), cands.end(), [](const auto& x, const auto& y) {
      return x.contour.size() < y.contour.size();
    });
    double inter = 0, uni = 0;
    for (double y = 30; y < 130; y += 0.25)
      for (double x = 30; x < 130; x += 0.25) {
        const bool g = inside(x, y), p = in_polygon(bc.contour, x, y);
        inter += g && p;
        uni += g || p;
      }
    const double iou = inter / uni;
    if (bc.measurement.epsilon < best_eps) best_eps = bc.measurement.epsilon, eps_iou = iou;
    best_iou = std::max(best_iou, iou);
  }
  return best_iou > 0 && eps_iou >= best_iou;
}

int run(const std::string& args) {
  const std::string cmd = std::string(DISCOCAL_BIN) + " " + args + " 2>/dev/null";
  const int st = std::system(cmd.c_str());
  return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

}  // namespace

int main() {
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();

  std::optional<MonteCarloResult> original, blurred;
  try {
    original = run_mc(false);
    blurred = run_mc(true);
  } catch (const std::exception& e) {
    std::cout << "Monte-Carlo runs threw: " << e.what() << std::endl;
  }

  guarded(1, "table1_unbiased_weighted", [&] {
    if (!original) throw std::runtime_error("no Monte-Carlo result");
    bool ok = true;
    std::string detail;
    for (const auto& t : kTable) {
      const auto& p = param(*original, "unbiased_weighted", t.name);
      ok = ok && std::abs(p.mean - t.truth) <= t.mean_tol && p.std <= t.std_max;
      detail += t.name + " " + fmt(p.mean, 7) + "+-" + fmt(p.std, 3) + "  ";
    }
    verdict(1, "table1_unbiased_weighted", ok, detail);
  });

  guarded(2, "centre_projection_bias", [&] {
    if (!original) throw std::runtime_error("no Monte-Carlo result");
    const double naive = param(*original, "naive_unweighted", "fx").mean;
    const double unbiased = param(*original, "unbiased_unweighted", "fx").mean;
    verdict(2, "centre_projection_bias", std::abs(naive - 600) >= 2.0 && std::abs(unbiased - 600) < 0.5,
            "naive fx " + fmt(naive, 7) + ", unbiased fx " + fmt(unbiased, 7));
  });

  guarded(3, "motion_blur_weighting", [&] {
    if (!blurred) throw std::runtime_error("no Monte-Carlo result");
    bool ok = true;
    std::string detail;
    for (const char* n : {"fx", "fy"}) {
      const double w = param(*blurred, "unbiased_weighted", n).std, uw = param(*blurred, "unbiased_unweighted", n).std;
      ok = ok && w < uw;
      detail += std::string(n) + " std " + fmt(w, 3) + " vs " + fmt(uw, 3) + "  ";
    }
    verdict(3, "motion_blur_weighting", ok, detail);
  });

  guarded(4, "detection_failures", [&] {
    if (!original || !blurred) throw std::runtime_error("no Monte-Carlo result");
    verdict(4, "detection_failures", original->detection_fails == 0 && blurred->detection_fails == 0,
            std::to_string(original->detection_fails) + "/" + std::to_string(original->images) + " original, " +
                std::to_string(blurred->detection_fails) + "/" + std::to_string(blurred->images) + " motion blur");
  });

  guarded(5, "prior_normalisation", [&] {
    const double z = oracles::normalisation_from_conditioning(200);
    verdict(5, "prior_normalisation", std::abs(z - kPriorZ) <= 1e-4,
            "conditioning oracle z " + fmt(z, 8) + ", constant " + fmt(kPriorZ, 8));
  });

  guarded(6, "property_suites", [&] {
    const auto s0 = clock::now();
    Suite s;
    jacobian_checks(s);
    cholesky_check(s);
    equivariance_checks(s);
    far_near_checks(s);
    green_pixel_check(s);
    unbiased_check(s);
    structure_checks(s);
    propagation_check(s);
    const double secs = std::chrono::duration<double>(clock::now() - s0).count();
    std::string detail = fmt(secs, 3) + " s";
    for (const auto& f : s.failed) detail += "; failed " + f;
    verdict(6, "property_suites", s.failed.empty() && secs < 60.0, detail);
  });

  guarded(7, "selection_fidelity", [&] {
    DetectParams prm;
    std::mt19937_64 rng(7);
    int agree = 0;
    for (int t = 0; t < 100; ++t) agree += selection_trial(rng, prm);
    verdict(7, "selection_fidelity", agree >= 95, std::to_string(agree) + "/100 trials pick the max-IoU contour");
  });

  guarded(8, "revolution_optimum", [&] {
    SweepConfig cfg;
    cfg.jobs = jobs();
    bool ok = true;
    std::string detail;
    for (double theta : {15.0, 25.0, 35.0}) {
      const auto r = revolution_sweep(cfg, theta);
      ok = ok && std::abs(r.argmin - theta) <= 5.0;
      detail += "theta " + fmt(theta) + " -> phi " + fmt(r.argmin) + "  ";
    }
    verdict(8, "revolution_optimum", ok, detail);
  });

  guarded(9, "cli_round_trip", [&] {
    const fs::path dir = fs::temp_directory_path() / "discocal_acceptance";
    fs::remove_all(dir);
    fs::create_directories(dir / "images");
    const std::string j = " -j " + std::to_string(jobs());
    if (run("synth -o " + (dir / "images").string() + j) != 0) throw std::runtime_error("synth failed");
    if (run("calibrate " + (dir / "images").string() + " -o " + (dir / "report.json").string() + j) != 0)
      throw std::runtime_error("calibrate failed");
    const Json rep = report::read_json((dir / "report.json").string());
    const Json& K = rep["calibration"]["K"];
    const std::vector<double> got{K["fx"].get<double>(), K["fy"].get<double>(), K["cx"].get<double>(),
                                  K["cy"].get<double>(), rep["calibration"]["D"][0].get<double>()};
    bool ok = true;
    std::string detail;
    for (size_t i = 0; i < kTable.size(); ++i) {
      ok = ok && std::abs(got[i] - kTable[i].truth) <= kTable[i].mean_tol;
      detail += kTable[i].name + " " + fmt(got[i], 7) + "  ";
    }
    verdict(9, "cli_round_trip", ok, detail + "(" + std::to_string(rep["images"].size()) + " images)");
  });

  std::cout << (failures ? std::to_string(failures) + " criteria failed" : "all criteria passed") << " in "
            << fmt(std::chrono::duration<double>(clock::now() - t0).count(), 4) << " s" << std::endl;
  return failures ? 1 : 0;
}
