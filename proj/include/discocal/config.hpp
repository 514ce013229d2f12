#pragma once

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "discocal/calib.hpp"
#include "discocal/detector.hpp"
#include "discocal/error.hpp"
#include "discocal/synth.hpp"

namespace discocal {

using ConfigValue = std::variant<bool, std::int64_t, double, std::string>;

struct KeySpec {
  std::string key;  // "section.name"
  ConfigValue value;
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  std::string help;
};

namespace detail {

constexpr double kInf = std::numeric_limits<double>::infinity();

inline const std::vector<KeySpec>& config_schema() {
  using I = std::int64_t;
  static const std::vector<KeySpec> s = {
      {"target.rows", I(3), 1, 1000, "circle rows"},
      {"target.cols", I(4), 1, 1000, "circle columns"},
      {"target.spacing", 1.0, 1e-9, kInf, "centre spacing, target units"},
      {"target.radius", 0.35, 1e-9, kInf, "circle radius, target units"},

      {"detect.global_min", I(100), 0, 255, "lowest global threshold"},
      {"detect.global_max", I(200), 0, 255, "highest global threshold"},
      {"detect.global_step", I(10), 1, 255, "global threshold step"},
      {"detect.adaptive", true, 0, 1, "add adaptive thresholds (blocks 31, 63; offsets 5, 10)"},
      {"detect.closing", true, 0, 1, "morphological closing before tracing"},
      {"detect.sigma", 1.0, 1e-6, 100, "boundary prior scale, px"},
      {"detect.window", I(5), 1, 50, "intensity-range half-width, px"},
      {"detect.fit_tol", 0.02, 0, 1, "ellipse RMS residual relative to mean semi-axis"},
      {"detect.fit_quant", 0.35, 0, 5, "ellipse residual allowance for pixel quantisation, px"},
      {"detect.ratio_max", 8.0, 1, 1000, "largest semi-axis ratio"},
      {"detect.area_min", 30.0, 0, kInf, "smallest blob area, px^2"},
      {"detect.area_max_frac", 0.25, 0, 1, "largest blob area as a fraction of the image"},
      {"detect.dedupe", 0.3, 0, 1, "duplicate radius as a fraction of the blob spacing"},

      {"model.nd", I(2), 0, 6, "radial distortion coefficients"},
      {"model.skew", false, 0, 1, "estimate skew"},

      {"optimizer.weighted", true, 0, 1, "weight residuals by measurement covariance"},
      {"optimizer.unbiased", true, 0, 1, "model projected circle centroids"},
      {"optimizer.samples", I(2000), 16, 1000000, "boundary samples of the centroid model"},
      {"optimizer.max_iter", I(200), 1, 100000, "iteration limit"},
      {"optimizer.rel_tol", 1e-10, 0, 1, "relative cost change at convergence"},
      {"optimizer.step_tol", 1e-12, 0, 1, "relative step at convergence"},
      {"optimizer.cov_floor", 1e-6, 0, 1, "eigenvalue floor of measurement covariances, px^2"},

      {"run.seed", I(42), 0, 9.2e18, "random seed"},
      {"run.jobs", I(0), 0, 4096, "worker threads, 0 for all cores"},

      {"synth.fx", 600.0, 1e-6, kInf, "focal length x, px"},
      {"synth.fy", 600.0, 1e-6, kInf, "focal length y, px"},
      {"synth.cx", 600.0, -kInf, kInf, "principal point x, px"},
      {"synth.cy", 450.0, -kInf, kInf, "principal point y, px"},
      {"synth.d1", -0.4, -10, 10, "first radial coefficient"},
      {"synth.d2", 0.0, -10, 10, "second radial coefficient"},
      {"synth.width", I(1200), 16, 20000, "image width, px"},
      {"synth.height", I(900), 16, 20000, "image height, px"},
      {"synth.count", I(30), 1, 100000, "images"},
      {"synth.supersample", I(8), 4, 64, "edge supersampling per axis"},
      {"synth.noise", 1.0, 0, 255, "additive Gaussian noise, gray levels"},
      {"synth.motion_blur", false, 0, 1, "alternate translation and rotation blur"},
      {"synth.max_shift", 5.0, 0, 100, "translation blur half-extent bound, px"},
      {"synth.max_angle", 5.0, 0, 90, "rotation blur half-extent bound, deg"},
      {"synth.rho_near", 6.0, 1e-3, kInf, "near shell radius, target spacings"},
      {"synth.rho_far", 9.0, 1e-3, kInf, "far shell radius, target spacings"},
      {"synth.max_tilt", 40.0, 0, 85, "largest target tilt, deg"},
      {"synth.max_roll", 20.0, 0, 180, "largest in-plane roll, deg"},

      {"mc.draws", I(30), 1, 100000, "Monte-Carlo repetitions"},
      {"mc.per_draw", I(6), 3, 100000, "images per repetition"},
      {"mc.original", true, 0, 1, "run the sharp dataset"},
      {"mc.motion_blur", true, 0, 1, "run the motion-blur dataset"},

      {"uncmap.n_az", I(41), 3, 10000, "ray grid azimuth samples"},
      {"uncmap.n_el", I(41), 2, 10000, "ray grid elevation samples"},
      {"uncmap.overlay", true, 0, 1, "write overlay.png with the measurements"},

      {"io.images", std::string(), 0, 0, "image directory (detect, calibrate)"},
      {"io.report", std::string(), 0, 0, "calibration report (uncmap)"},
      {"io.out", std::string(), 0, 0, "output file or directory"},
  };
  return s;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline bool valid_name(std::string_view s) {
  if (s.empty()) return false;
  for (char c : s)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_')) return false;
  return true;
}

// Strips a trailing comment that is not inside a quoted string.
inline std::string_view strip_comment(std::string_view s) {
  bool quoted = false;
  for (size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '\\' && quoted) {
      ++i;
    } else if (s[i] == '"') {
      quoted = !quoted;
    } else if (s[i] == '#' && !quoted) {
      return s.substr(0, i);
    }
  }
  return s;
}

inline std::string unquote(std::string_view s, const std::string& where) {
  if (s.size() < 2 || s.front() != '"' || s.back() != '"') return std::string(s);
  std::string out;
  for (size_t i = 1; i + 1 < s.size(); ++i) {
    if (s[i] == '\\') {
      if (i + 2 >= s.size()) throw ConfigError(where + ": dangling escape");
      const char e = s[++i];
      if (e == 'n')
        out += '\n';
      else if (e == 't')
        out += '\t';
      else if (e == '"' || e == '\\')
        out += e;
      else
        throw ConfigError(where + ": unknown escape \\" + std::string(1, e));
    } else if (s[i] == '"') {
      throw ConfigError(where + ": unescaped quote");
    } else {
      out += s[i];
    }
  }
  return out;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

}  // namespace detail

class Config {
 public:
  Config() {
    for (const auto& k : detail::config_schema()) values_[k.key] = k.value;
  }

  static const std::vector<KeySpec>& schema() { return detail::config_schema(); }

  // Grammar, one statement per line:
  //   # comment            (also after a value)
  //   [section]
  //   key = value          value: true | false | integer | real | "string"
  // Every key must belong to a section, appear at most once, and be in the schema.
  static Config parse(std::string_view text, const std::string& origin = "<config>") {
    Config c;
    std::string section;
    std::map<std::string, int> seen;
    int lineno = 0;
    std::istringstream in{std::string(text)};
    for (std::string raw; std::getline(in, raw);) {
      ++lineno;
      const std::string where = origin + ":" + std::to_string(lineno);
      const std::string_view line = detail::trim(detail::strip_comment(raw));
      if (line.empty()) continue;
      if (line.front() == '[') {
        if (line.back() != ']') throw ConfigError(where + ": malformed section header");
        const auto name = detail::trim(line.substr(1, line.size() - 2));
        if (!detail::valid_name(name)) throw ConfigError(where + ": bad section name");
        section = std::string(name);
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string_view::npos) throw ConfigError(where + ": expected key = value");
      const auto key = detail::trim(line.substr(0, eq));
      const auto value = detail::trim(line.substr(eq + 1));
      if (!detail::valid_name(key)) throw ConfigError(where + ": bad key name");
      if (section.empty()) throw ConfigError(where + ": key '" + std::string(key) + "' outside a section");
      const std::string full = section + "." + std::string(key);
      if (auto it = seen.find(full); it != seen.end())
        throw ConfigError(where + ": duplicate key '" + full + "' (first on line " + std::to_string(it->second) + ")");
      seen[full] = lineno;
      c.set(full, value, where);
    }
    return c;
  }

  static Config load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot read config file " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse(ss.str(), path);
  }

  // Parses `raw` according to the key's type and range.
  void set(const std::string& key, std::string_view raw, const std::string& where = "override") {
    const KeySpec* spec = find(key);
    if (!spec) throw ConfigError(where + ": unknown key '" + key + "'");
    const std::string_view v = detail::trim(raw);
    const std::string ctx = where + ": " + key;
    ConfigValue out;
    if (std::holds_alternative<bool>(spec->value)) {
      if (v == "true")
        out = true;
      else if (v == "false")
        out = false;
      else
        throw ConfigError(ctx + ": expected true or false, got '" + std::string(v) + "'");
    } else if (std::holds_alternative<std::int64_t>(spec->value)) {
      std::int64_t i = 0;
      if (!detail::parse_number(v, i)) throw ConfigError(ctx + ": expected an integer, got '" + std::string(v) + "'");
      check_range(*spec, double(i), ctx);
      out = i;
    } else if (std::holds_alternative<double>(spec->value)) {
      double d = 0;
      if (!detail::parse_number(v, d) || !std::isfinite(d))
        throw ConfigError(ctx + ": expected a number, got '" + std::string(v) + "'");
      check_range(*spec, d, ctx);
      out = d;
    } else {
      out = detail::unquote(v, ctx);
    }
    values_[key] = out;
  }

  // Stores a string verbatim, without unquoting.
  void set_text(const std::string& key, const std::string& value) {
    const KeySpec* spec = find(key);
    if (!spec || !std::holds_alternative<std::string>(spec->value))
      throw ConfigError("'" + key + "' is not a text key");
    values_[key] = value;
  }

  // "section.key=value"
  void apply_override(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + assignment + "': expected key=value");
    set(std::string(detail::trim(std::string_view(assignment).substr(0, eq))),
        std::string_view(assignment).substr(eq + 1));
  }

  // The DISCOCAL_SEED environment variable replaces run.seed when set.
  void apply_environment() {
    if (const char* s = std::getenv("DISCOCAL_SEED")) set("run.seed", s, "DISCOCAL_SEED");
  }

  bool boolean(const std::string& key) const { return get<bool>(key); }
  std::int64_t integer(const std::string& key) const { return get<std::int64_t>(key); }
  double real(const std::string& key) const { return get<double>(key); }
  std::string text(const std::string& key) const { return get<std::string>(key); }

  const std::map<std::string, ConfigValue>& values() const { return values_; }

  TargetSpec target() const {
    TargetSpec t{int(integer("target.rows")), int(integer("target.cols")), real("target.spacing"),
                 real("target.radius")};
    try {
      t.validate();
    } catch (const InvalidArgument& e) {
      throw ConfigError(std::string("target: ") + e.what());
    }
    return t;
  }

  DetectParams detect() const {
    DetectParams p;
    const auto lo = integer("detect.global_min"), hi = integer("detect.global_max"),
               step = integer("detect.global_step");
    if (lo > hi) throw ConfigError("detect.global_min exceeds detect.global_max");
    p.thresholds.clear();
    for (auto t = lo; t <= hi; t += step) p.thresholds.push_back(ThresholdSpec::global(double(t)));
    if (boolean("detect.adaptive"))
      for (int b : {31, 63})
        for (double c : {5.0, 10.0}) p.thresholds.push_back(ThresholdSpec::adaptive(b, c));
    p.use_closing = boolean("detect.closing");
    p.uncertainty.sigma = real("detect.sigma");
    p.uncertainty.window = int(integer("detect.window"));
    p.ellipse.fit_tol = real("detect.fit_tol");
    p.ellipse.fit_quant = real("detect.fit_quant");
    p.ellipse.ratio_max = real("detect.ratio_max");
    p.ellipse.area_min = real("detect.area_min");
    p.ellipse.area_max_frac = real("detect.area_max_frac");
    p.dedupe_factor = real("detect.dedupe");
    return p;
  }

  CalibOptions calib() const {
    CalibOptions o;
    o.nd = int(integer("model.nd"));
    o.estimate_skew = boolean("model.skew");
    o.weighted = boolean("optimizer.weighted");
    o.unbiased = boolean("optimizer.unbiased");
    o.samples = int(integer("optimizer.samples"));
    o.max_iter = int(integer("optimizer.max_iter"));
    o.rel_tol = real("optimizer.rel_tol");
    o.step_tol = real("optimizer.step_tol");
    o.cov_floor = real("optimizer.cov_floor");
    return o;
  }

  DatasetConfig dataset() const {
    DatasetConfig d;
    d.K = {real("synth.fx"), real("synth.fy"), real("synth.cx"), real("synth.cy"), 0.0};
    d.D = Distortion{{real("synth.d1"), real("synth.d2")}};
    d.target = target();
    d.width = int(integer("synth.width"));
    d.height = int(integer("synth.height"));
    d.count = int(integer("synth.count"));
    d.supersample = int(integer("synth.supersample"));
    d.noise = real("synth.noise");
    d.motion_blur = boolean("synth.motion_blur");
    d.max_shift = real("synth.max_shift");
    d.max_angle = real("synth.max_angle");
    d.sampler.rho_near = real("synth.rho_near");
    d.sampler.rho_far = real("synth.rho_far");
    d.sampler.max_tilt = real("synth.max_tilt");
    d.sampler.max_roll = real("synth.max_roll");
    d.seed = seed();
    return d;
  }

  MonteCarloConfig monte_carlo() const {
    MonteCarloConfig m;
    m.draws = int(integer("mc.draws"));
    m.per_draw = int(integer("mc.per_draw"));
    m.seed = seed();
    m.calib = calib();
    m.detect = detect();
    m.jobs = jobs();
    return m;
  }

  std::uint64_t seed() const { return std::uint64_t(integer("run.seed")); }

  int jobs() const {
    const auto j = integer("run.jobs");
    return j == 0 ? default_jobs() : int(j);
  }

 private:
  static const KeySpec* find(const std::string& key) {
    for (const auto& k : schema())
      if (k.key == key) return &k;
    return nullptr;
  }

  static void check_range(const KeySpec& s, double v, const std::string& ctx) {
    if (v < s.lo || v > s.hi) {
      std::ostringstream os;
      os << ctx << ": " << v << " outside [" << s.lo << ", " << s.hi << "]";
      throw ConfigError(os.str());
    }
  }

  template <typename T>
  T get(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end() || !std::holds_alternative<T>(it->second))
      throw ConfigError("config key '" + key + "' missing or of the wrong type");
    return std::get<T>(it->second);
  }

  std::map<std::string, ConfigValue> values_;
};

}  // namespace discocal
