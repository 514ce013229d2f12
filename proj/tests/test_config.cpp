#include <gtest/gtest.h>

#include <cstdlib>

#include "discocal/config.hpp"

using namespace discocal;

TEST(Config, EmptyTextGivesDefaults) {
  const Config a, b = Config::parse("\n# nothing here\n\n");
  EXPECT_EQ(a.values(), b.values());
  EXPECT_EQ(a.integer("target.rows"), 3);
  EXPECT_EQ(a.real("synth.d1"), -0.4);
  EXPECT_TRUE(a.boolean("optimizer.weighted"));
  EXPECT_EQ(a.text("io.out"), "");
}

TEST(Config, ParsesEveryValueKind) {
  const Config c = Config::parse(R"(
[target]
rows = 5      # trailing comment
radius = 0.3
[optimizer]
weighted = false
rel_tol = 1e-9
[io]
out = "dir # with hash \"quoted\""
)");
  EXPECT_EQ(c.integer("target.rows"), 5);
  EXPECT_EQ(c.real("target.radius"), 0.3);
  EXPECT_FALSE(c.boolean("optimizer.weighted"));
  EXPECT_EQ(c.real("optimizer.rel_tol"), 1e-9);
  EXPECT_EQ(c.text("io.out"), "dir # with hash \"quoted\"");
  EXPECT_EQ(c.target().rows, 5);
}

TEST(Config, RejectsMalformedInput) {
  for (const char* bad : {"[target]\nrow = 3", "rows = 3", "[target]\nrows = 3\nrows = 4", "[target]\nrows = three",
                          "[target]\nrows = 3.5", "[target]\nrows = 0", "[optimizer]\nweighted = yes",
                          "[target\nrows = 3", "[target]\nrows", "[target]\nspacing = nan",
                          "[io]\nout = \"bad \\q escape\""})
    EXPECT_THROW(Config::parse(bad), ConfigError) << bad;
}

TEST(Config, OverridesAndEnvironment) {
  Config c = Config::parse("[run]\nseed = 5\n");
  ::setenv("DISCOCAL_SEED", "77", 1);
  c.apply_environment();
  ::unsetenv("DISCOCAL_SEED");
  EXPECT_EQ(c.seed(), 77u);
  c.apply_override("run.seed=9");
  EXPECT_EQ(c.seed(), 9u);
  c.apply_override("model.nd = 1");
  EXPECT_EQ(c.calib().nd, 1);
  EXPECT_THROW(c.apply_override("model.nd"), ConfigError);
  EXPECT_THROW(c.apply_override("model.bogus=1"), ConfigError);
  EXPECT_THROW(c.set_text("model.nd", "1"), ConfigError);
}

TEST(Config, DerivedParameters) {
  Config c;
  EXPECT_EQ(c.detect().thresholds.size(), 15u);  // 11 global + 4 adaptive
  c.apply_override("detect.adaptive=false");
  c.apply_override("detect.global_step=50");
  EXPECT_EQ(c.detect().thresholds.size(), 3u);
  c.apply_override("detect.global_min=210");
  EXPECT_THROW(c.detect(), ConfigError);
  EXPECT_EQ(c.dataset().D.d.size(), 2u);
  c.apply_override("run.jobs=3");
  EXPECT_EQ(c.jobs(), 3);
  c.apply_override("target.radius=0.6");
  EXPECT_THROW(c.target(), ConfigError);
}
