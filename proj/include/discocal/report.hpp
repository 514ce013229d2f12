#pragma once

#include <cmath>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "discocal/calib.hpp"
#include "discocal/config.hpp"
#include "discocal/detector.hpp"
#include "discocal/error.hpp"
#include "discocal/synth.hpp"
#include "discocal/uncmap.hpp"
#include "json.hpp"

namespace discocal {

using Json = nlohmann::json;  // object keys are kept sorted

inline constexpr int kSchemaVersion = 1;

namespace report {

inline Json number(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

inline double number(const Json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

inline Json point(const Point2& p) { return Json::array({number(p.x()), number(p.y())}); }

inline Json matrix(const Eigen::MatrixXd& m) {
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(number(m(r, c)));
    rows.push_back(row);
  }
  return rows;
}

inline Eigen::MatrixXd matrix(const Json& j) {
  const auto n = Eigen::Index(j.size());
  const auto m = n ? Eigen::Index(j[0].size()) : 0;
  Eigen::MatrixXd out(n, m);
  for (Eigen::Index r = 0; r < n; ++r) {
    if (Eigen::Index(j[size_t(r)].size()) != m) throw ConfigError("report: ragged matrix");
    for (Eigen::Index c = 0; c < m; ++c) out(r, c) = number(j[size_t(r)][size_t(c)]);
  }
  return out;
}

inline Json config(const Config& c) {
  Json out = Json::object();
  for (const auto& [k, v] : c.values()) std::visit([&](const auto& x) { out[k] = x; }, v);
  return out;
}

inline Json intrinsics(const Intrinsics& K) {
  return {{"fx", K.fx}, {"fy", K.fy}, {"cx", K.cx}, {"cy", K.cy}, {"eta", K.eta}};
}

inline Json pose(const Pose& E) {
  return {{"rvec", {E.rvec.x(), E.rvec.y(), E.rvec.z()}}, {"t", {E.t.x(), E.t.y(), E.t.z()}}};
}

inline Json target(const TargetSpec& t) {
  return {{"rows", t.rows}, {"cols", t.cols}, {"spacing", t.spacing}, {"radius", t.radius}};
}

inline Json measurement(const CentroidMeasurement& m) {
  return {{"p", point(m.p)}, {"sigma", matrix(m.sigma)}, {"epsilon", number(m.epsilon)}};
}

inline Json grid(const DetectedGrid& g) {
  Json ms = Json::array(), th = Json::array();
  for (const auto& m : g.measurements) ms.push_back(measurement(m));
  for (const auto& t : g.thresholds) th.push_back(t.str());
  return {{"rows", g.rows},          {"cols", g.cols},        {"width", g.width}, {"height", g.height},
          {"measurements", ms},      {"thresholds", th},      {"contour_sizes", g.contour_sizes}};
}

inline DetectedGrid grid(const Json& j) {
  DetectedGrid g;
  g.rows = j.at("rows").get<int>();
  g.cols = j.at("cols").get<int>();
  g.width = j.at("width").get<int>();
  g.height = j.at("height").get<int>();
  for (const auto& m : j.at("measurements")) {
    CentroidMeasurement c;
    c.p = {number(m.at("p")[0]), number(m.at("p")[1])};
    c.sigma = matrix(m.at("sigma"));
    c.epsilon = number(m.at("epsilon"));
    g.measurements.push_back(c);
  }
  g.contour_sizes = j.at("contour_sizes").get<std::vector<int>>();
  return g;
}

inline Json calibration(const CalibrationResult& r) {
  Json pv = Json::array(), poses = Json::array(), sd = Json::object();
  for (const auto& v : r.per_view) pv.push_back({{"rms", v.rms}, {"max", v.max}});
  for (const auto& E : r.poses) poses.push_back(pose(E));
  for (size_t i = 0; i < r.param_names.size(); ++i)
    sd[r.param_names[i]] = number(std::sqrt(r.param_cov(Eigen::Index(i), Eigen::Index(i))));
  return {{"K", intrinsics(r.K)},
          {"D", r.D.d},
          {"poses", poses},
          {"param_names", r.param_names},
          {"param_cov", matrix(r.param_cov)},
          {"param_std", sd},
          {"rms_reproj", r.rms_reproj},
          {"cost", r.cost},
          {"iterations", r.iterations},
          {"per_view", pv}};
}

inline Json monte_carlo(const MonteCarloResult& m) {
  Json arms = Json::array();
  for (const auto& a : m.arms) {
    Json params = Json::object();
    for (const auto& p : a.params) params[p.name] = {{"mean", number(p.mean)}, {"std", number(p.std)}};
    arms.push_back({{"name", a.name}, {"fails", a.fails}, {"runs", a.draws.size()}, {"params", params}});
  }
  return {{"images", m.images}, {"detection_fails", m.detection_fails}, {"subsets", m.subsets}, {"arms", arms}};
}

// What uncertainty mapping needs from a calibration report.
struct CalibrationReport {
  Intrinsics K;
  Distortion D;
  Eigen::MatrixXd param_cov;
  bool skew = false;
  int width = 0;
  int height = 0;
  std::vector<Point2> points;  // all measured centroids
};

inline CalibrationReport read_calibration(const Json& j) {
  try {
    if (j.at("schema_version").get<int>() != kSchemaVersion) throw ConfigError("report: unsupported schema_version");
    CalibrationReport r;
    const Json& c = j.at("calibration");
    const Json& K = c.at("K");
    r.K = {K.at("fx").get<double>(), K.at("fy").get<double>(), K.at("cx").get<double>(), K.at("cy").get<double>(),
           K.at("eta").get<double>()};
    r.D.d = c.at("D").get<std::vector<double>>();
    r.param_cov = matrix(c.at("param_cov"));
    const auto names = c.at("param_names").get<std::vector<std::string>>();
    r.skew = std::find(names.begin(), names.end(), "eta") != names.end();
    r.width = j.at("image").at("width").get<int>();
    r.height = j.at("image").at("height").get<int>();
    for (const auto& im : j.at("images"))
      if (im.contains("detection"))
        for (const auto& m : im.at("detection").at("measurements"))
          r.points.emplace_back(number(m.at("p")[0]), number(m.at("p")[1]));
    if (r.width < 1 || r.height < 1) throw ConfigError("report: missing image size");
    return r;
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("report: ") + e.what());
  }
}

inline Json read_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read " + path);
  try {
    return Json::parse(f);
  } catch (const Json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

inline void write_json(const std::string& path, const Json& j) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path);
  f << j.dump(2) << '\n';
  if (!f) throw IoError("write failed: " + path);
}

}  // namespace report
}  // namespace discocal
