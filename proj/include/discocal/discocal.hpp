#pragma once

#include "discocal/calib.hpp"
#include "discocal/cli.hpp"
#include "discocal/config.hpp"
#include "discocal/detector.hpp"
#include "discocal/error.hpp"
#include "discocal/image.hpp"
#include "discocal/moments.hpp"
#include "discocal/projection.hpp"
#include "discocal/report.hpp"
#include "discocal/synth.hpp"
#include "discocal/uncertainty.hpp"
#include "discocal/uncmap.hpp"
