#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "discocal/cli.hpp"

namespace {

struct Common {
  std::string config;
  std::vector<std::string> sets;
  std::optional<int> jobs;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("-c,--config", c.config, "key = value config file");
  app->add_option("--set", c.sets, "override, section.key=value (repeatable)");
  app->add_option("-j,--jobs", c.jobs, "worker threads (default: all cores)")->check(CLI::Range(1, 4096));
  app->add_option("--seed", c.seed, "random seed");
}

// Defaults < config file < DISCOCAL_SEED < --set < dedicated flags.
discocal::Config build_config(const Common& c) {
  discocal::Config cfg = c.config.empty() ? discocal::Config() : discocal::Config::load(c.config);
  cfg.apply_environment();
  for (const auto& s : c.sets) cfg.apply_override(s);
  if (c.jobs) cfg.set("run.jobs", std::to_string(*c.jobs), "--jobs");
  if (c.seed) cfg.set("run.seed", std::to_string(*c.seed), "--seed");
  return cfg;
}

void set_path(discocal::Config& cfg, const std::string& key, const std::string& value) {
  if (!value.empty()) cfg.set_text(key, value);
}

}  // namespace

int main(int argc, char** argv) {
  namespace cli = discocal::cli;
  CLI::App app{"Circular-grid camera calibration with centroid uncertainty"};
  app.require_subcommand(1);

  Common common;
  std::string images, out, report;

  auto* det = app.add_subcommand("detect", "detect the circle grid in every image of a directory");
  add_common(det, common);
  det->add_option("images", images, "image directory");
  det->add_option("-o,--out", out, "output directory");

  auto* cal = app.add_subcommand("calibrate", "detect and calibrate, writing a JSON report");
  add_common(cal, common);
  cal->add_option("images", images, "image directory");
  cal->add_option("-o,--out", out, "report file");

  auto* unc = app.add_subcommand("uncmap", "uncertainty map of a calibration report");
  add_common(unc, common);
  unc->add_option("report", report, "calibration report");
  unc->add_option("-o,--out", out, "output directory");

  auto* syn = app.add_subcommand("synth", "render a synthetic dataset with ground truth");
  add_common(syn, common);
  syn->add_option("-o,--out", out, "output directory");

  auto* mc = app.add_subcommand("mc", "Monte-Carlo ablation on synthetic datasets");
  add_common(mc, common);
  mc->add_option("-o,--out", out, "report file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : cli::kConfigError;
  }

  try {
    discocal::Config cfg = build_config(common);
    set_path(cfg, "io.images", images);
    set_path(cfg, "io.report", report);
    set_path(cfg, "io.out", out);
    const std::string in_dir = cfg.text("io.images"), out_path = cfg.text("io.out");
    if (*det)
      cli::cmd_detect(cfg, in_dir, out_path, std::cerr);
    else if (*cal)
      cli::cmd_calibrate(cfg, in_dir, out_path, std::cerr);
    else if (*unc)
      cli::cmd_uncmap(cfg, cfg.text("io.report"), out_path, std::cerr);
    else if (*syn)
      cli::cmd_synth(cfg, out_path, std::cerr);
    else if (*mc)
      cli::cmd_mc(cfg, out_path, std::cerr);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cli::exit_code(e);
  }
  return cli::kOk;
}
