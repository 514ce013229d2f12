#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "discocal/calib.hpp"
#include "discocal/config.hpp"
#include "discocal/detector.hpp"
#include "discocal/image.hpp"
#include "discocal/parallel.hpp"
#include "discocal/report.hpp"
#include "discocal/synth.hpp"
#include "discocal/uncmap.hpp"

namespace discocal::cli {

namespace fs = std::filesystem;

enum Exit : int { kOk = 0, kFailure = 1, kConfigError = 2, kDetectionShortfall = 3, kOptimizationFailure = 4 };

inline int exit_code(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const IoError*>(&e) ||
      dynamic_cast<const InvalidArgument*>(&e))
    return kConfigError;
  if (dynamic_cast<const DetectionError*>(&e)) return kDetectionShortfall;
  if (dynamic_cast<const OptimizationError*>(&e) || dynamic_cast<const DegenerateConfiguration*>(&e) ||
      dynamic_cast<const NotPositiveDefinite*>(&e))
    return kOptimizationFailure;
  return kFailure;
}

// PNG and PGM files directly inside `dir`, in path order.
inline std::vector<fs::path> list_images(const std::string& dir) {
  std::error_code ec;
  if (dir.empty()) throw ConfigError("no image directory given");
  if (!fs::is_directory(dir, ec)) throw IoError("not a readable directory: " + dir);
  std::vector<fs::path> out;
  for (fs::directory_iterator it(dir, ec), end; !ec && it != end; it.increment(ec)) {
    if (!it->is_regular_file()) continue;
    std::string ext = it->path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return char(std::tolower(c)); });
    if (ext == ".png" || ext == ".pgm") out.push_back(it->path());
  }
  if (ec) throw IoError("cannot list " + dir + ": " + ec.message());
  if (out.empty()) throw IoError("no PNG or PGM images in " + dir);
  std::sort(out.begin(), out.end());
  return out;
}

struct ImageDetection {
  fs::path path;
  std::optional<DetectedGrid> grid;
  std::string error;
};

inline std::vector<ImageDetection> detect_all(const std::vector<fs::path>& paths, const TargetSpec& target,
                                              const DetectParams& prm, int jobs) {
  std::vector<ImageDetection> out(paths.size());
  parallel_for(int(paths.size()), jobs, [&](int i) {
    auto& r = out[size_t(i)];
    r.path = paths[size_t(i)];
    try {
      r.grid = detect(load_gray(r.path.string()), target, prm);
    } catch (const Error& e) {
      r.error = e.what();
    }
  });
  return out;
}

inline Json detection_record(const ImageDetection& d) {
  Json j = {{"image", d.path.filename().string()}, {"status", d.grid ? "ok" : "failed"}};
  if (d.grid)
    j["detection"] = report::grid(*d.grid);
  else
    j["error"] = d.error;
  return j;
}

inline Json envelope(const Config& cfg, const std::string& command) {
  return {{"schema_version", kSchemaVersion}, {"command", command}, {"config", report::config(cfg)}};
}

struct DetectSummary {
  int detected = 0;
  int failed = 0;
};

// One <image>.json per input plus summary.json. Fails only if nothing was detected.
inline DetectSummary cmd_detect(const Config& cfg, const std::string& images, const std::string& out_dir,
                                std::ostream& log) {
  const auto paths = list_images(images);
  if (out_dir.empty()) throw ConfigError("detect: no output directory given");
  fs::create_directories(out_dir);
  const auto dets = detect_all(paths, cfg.target(), cfg.detect(), cfg.jobs());
  DetectSummary s;
  Json list = Json::array();
  for (const auto& d : dets) {
    Json rec = envelope(cfg, "detect");
    rec.update(detection_record(d));
    report::write_json((fs::path(out_dir) / (d.path.filename().string() + ".json")).string(), rec);
    list.push_back({{"image", d.path.filename().string()}, {"status", rec["status"]}});
    if (d.grid) {
      ++s.detected;
    } else {
      ++s.failed;
      log << "warning: " << d.path.filename().string() << ": " << d.error << "\n";
    }
  }
  Json summary = envelope(cfg, "detect");
  summary["detected"] = s.detected;
  summary["failed"] = s.failed;
  summary["images"] = list;
  report::write_json((fs::path(out_dir) / "summary.json").string(), summary);
  log << s.detected << " detected, " << s.failed << " failed\n";
  if (s.detected == 0) throw DetectionError("detect: no image could be detected");
  return s;
}

inline CalibrationResult cmd_calibrate(const Config& cfg, const std::string& images, const std::string& out_file,
                                       std::ostream& log) {
  const auto paths = list_images(images);
  if (out_file.empty()) throw ConfigError("calibrate: no output file given");
  const TargetSpec target = cfg.target();
  const auto dets = detect_all(paths, target, cfg.detect(), cfg.jobs());
  std::vector<DetectedGrid> grids;
  for (const auto& d : dets) {
    if (d.grid)
      grids.push_back(*d.grid);
    else
      log << "warning: " << d.path.filename().string() << ": " << d.error << "\n";
  }
  if (grids.size() < 3)
    throw DetectionError("insufficient views: " + std::to_string(grids.size()) + " detected, at least 3 required");
  for (const auto& g : grids)
    if (g.width != grids[0].width || g.height != grids[0].height)
      throw ConfigError("calibrate: images differ in size");
  const CalibrationResult r = calibrate(grids, target, cfg.calib());

  Json j = envelope(cfg, "calibrate");
  Json list = Json::array();
  int view = 0;
  for (const auto& d : dets) {
    Json rec = detection_record(d);
    if (d.grid) rec["view"] = view++;
    list.push_back(rec);
  }
  j["images"] = list;
  j["image"] = {{"width", grids[0].width}, {"height", grids[0].height}};
  j["target"] = report::target(target);
  j["calibration"] = report::calibration(r);
  report::write_json(out_file, j);
  log << std::fixed << std::setprecision(3) << grids.size() << " views, fx " << r.K.fx << ", fy " << r.K.fy
      << ", cx " << r.K.cx << ", cy " << r.K.cy << ", rms " << r.rms_reproj << " px\n";
  return r;
}

namespace detail {

inline void write_channel(std::ostream& os, const std::vector<double>& v) {
  os << '[';
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) os << ',';
    if (std::isfinite(v[i]))
      os << v[i];
    else
      os << "null";
  }
  os << ']';
}

}  // namespace detail

// uncmap.json (channels in px^2, row-major, null where no ray reaches), uncmap.png,
// uncmap_scale.json with the colour range and, when requested, overlay.png.
inline UncertaintyMap cmd_uncmap(const Config& cfg, const std::string& report_path, const std::string& out_dir,
                                 std::ostream& log) {
  if (report_path.empty()) throw ConfigError("uncmap: no report given");
  if (out_dir.empty()) throw ConfigError("uncmap: no output directory given");
  const auto rep = report::read_calibration(report::read_json(report_path));
  const auto m = uncertainty_map(rep.K, rep.D, rep.param_cov, rep.width, rep.height, rep.skew,
                                 int(cfg.integer("uncmap.n_az")), int(cfg.integer("uncmap.n_el")));
  fs::create_directories(out_dir);
  auto h = heatmap(m);
  const double mean = mean_uncertainty(m);

  Json meta = envelope(cfg, "uncmap");
  meta["width"] = m.width;
  meta["height"] = m.height;
  meta["mean"] = mean;
  meta["min"] = h.min;
  meta["max"] = h.max;
  meta["coverage"] = m.coverage();
  meta["units"] = "px^2";
  {
    // The channels are large; they are streamed with 7 significant digits.
    std::ofstream f(fs::path(out_dir) / "uncmap.json");
    if (!f) throw IoError("cannot write uncmap.json");
    f << std::setprecision(7) << "{\n  \"channels\": {\"kxx\": ";
    detail::write_channel(f, m.kxx);
    f << ", \"kxy\": ";
    detail::write_channel(f, m.kxy);
    f << ", \"kyy\": ";
    detail::write_channel(f, m.kyy);
    f << "},\n" << meta.dump(2).substr(2) << '\n';
    if (!f) throw IoError("write failed: uncmap.json");
  }
  save_png((fs::path(out_dir) / "uncmap.png").string(), h.width, h.height, 3, h.rgb);
  report::write_json((fs::path(out_dir) / "uncmap_scale.json").string(),
                     {{"schema_version", kSchemaVersion}, {"min", h.min}, {"max", h.max}, {"units", "px"},
                      {"colormap", "viridis"}, {"quantity", "2*sqrt(trace/2)"}});
  if (cfg.boolean("uncmap.overlay") && !rep.points.empty()) {
    overlay_points(h, rep.points);
    save_png((fs::path(out_dir) / "overlay.png").string(), h.width, h.height, 3, h.rgb);
  }
  log << std::fixed << std::setprecision(4) << "mean uncertainty " << mean << " px, range [" << h.min << ", "
      << h.max << "]\n";
  return m;
}

inline Json blur_json(const Blur& b) {
  switch (b.kind) {
    case Blur::Kind::Gaussian: return {{"kind", "gaussian"}, {"sigma", b.sigma}};
    case Blur::Kind::Translation: return {{"kind", "translation"}, {"shift", report::point(b.shift)}};
    case Blur::Kind::Rotation: return {{"kind", "rotation"}, {"angle_deg", b.angle}};
    default: return {{"kind", "none"}};
  }
}

// img_NNN.png plus gt.json with the true camera, poses and centroids.
inline Dataset cmd_synth(const Config& cfg, const std::string& out_dir, std::ostream& log) {
  if (out_dir.empty()) throw ConfigError("synth: no output directory given");
  const DatasetConfig dc = cfg.dataset();
  const Dataset ds = make_dataset(dc, cfg.jobs());
  fs::create_directories(out_dir);
  Json imgs = Json::array();
  for (size_t j = 0; j < ds.renders.size(); ++j) {
    char name[32];
    std::snprintf(name, sizeof name, "img_%03zu.png", j);
    save_png((fs::path(out_dir) / name).string(), ds.renders[j].image);
    Json c = Json::array();
    for (const auto& p : ds.renders[j].centroids) c.push_back(report::point(p));
    imgs.push_back({{"file", name}, {"pose", report::pose(ds.poses[j])}, {"blur", blur_json(ds.blurs[j])},
                    {"centroids", c}});
  }
  Json gt = envelope(cfg, "synth");
  gt["K"] = report::intrinsics(dc.K);
  gt["D"] = dc.D.d;
  gt["target"] = report::target(dc.target);
  gt["image"] = {{"width", dc.width}, {"height", dc.height}};
  gt["images"] = imgs;
  report::write_json((fs::path(out_dir) / "gt.json").string(), gt);
  log << ds.renders.size() << " images written to " << out_dir << "\n";
  return ds;
}

inline void print_table(std::ostream& os, const std::string& name, const MonteCarloResult& m) {
  os << name << ": " << m.images << " images, " << m.detection_fails << " detection failures, "
     << m.subsets.size() << " draws\n";
  if (m.arms.empty()) return;
  os << std::left << std::setw(22) << "arm";
  for (const auto& p : m.arms[0].params) os << std::setw(20) << p.name;
  os << "fails\n";
  for (const auto& a : m.arms) {
    os << std::setw(22) << a.name;
    for (const auto& p : a.params) {
      std::ostringstream cell;
      const int prec = p.name[0] == 'd' ? 4 : 2;
      cell << std::fixed << std::setprecision(prec) << p.mean << " +- " << p.std;
      os << std::setw(20) << cell.str();
    }
    os << a.fails << "\n";
  }
  os << std::right;
}

// Renders the configured datasets and runs every ablation arm on each.
inline Json cmd_mc(const Config& cfg, const std::string& out_file, std::ostream& log) {
  if (out_file.empty()) throw ConfigError("mc: no output file given");
  std::vector<std::pair<std::string, bool>> sets;
  if (cfg.boolean("mc.original")) sets.emplace_back("original", false);
  if (cfg.boolean("mc.motion_blur")) sets.emplace_back("motion_blur", true);
  if (sets.empty()) throw ConfigError("mc: both datasets disabled");
  Json out = envelope(cfg, "mc");
  DatasetConfig dc = cfg.dataset();
  out["ground_truth"] = {{"K", report::intrinsics(dc.K)}, {"D", dc.D.d}};
  Json results = Json::object();
  for (const auto& [name, blur] : sets) {
    dc.motion_blur = blur;
    const Dataset ds = make_dataset(dc, cfg.jobs());
    std::vector<GrayImage> images;
    for (const auto& r : ds.renders) images.push_back(r.image);
    const auto m = monte_carlo(images, dc.target, cfg.monte_carlo());
    results[name] = report::monte_carlo(m);
    print_table(log, name, m);
  }
  out["datasets"] = results;
  report::write_json(out_file, out);
  return out;
}

}  // namespace discocal::cli
