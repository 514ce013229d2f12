#pragma once

#include <cmath>
#include <functional>
#include <random>

#include "discocal/detector.hpp"
#include "discocal/image.hpp"
#include "discocal/moments.hpp"

namespace testutil {

using discocal::Contour;
using discocal::GrayImage;
using discocal::Point2;

// Dark shape on white background; coverage estimated on an s x s subgrid.
inline GrayImage render_shape(int w, int h, const std::function<bool(double, double)>& inside, int s = 8) {
  GrayImage img(w, h, 255.0);
  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w; ++u) {
      int hit = 0;
      for (int j = 0; j < s; ++j)
        for (int i = 0; i < s; ++i)
          hit += inside(u - 0.5 + (i + 0.5) / s, v - 0.5 + (j + 0.5) / s);
      img(u, v) = 255.0 * (1.0 - double(hit) / (s * s));
    }
  return img;
}

inline GrayImage render_disk(int w, int h, double cu, double cv, double r, int s = 8) {
  return render_shape(w, h, [=](double x, double y) { return (x - cu) * (x - cu) + (y - cv) * (y - cv) < r * r; }, s);
}

inline Contour regular_polygon(int n, double cx, double cy, double r, double phase = 0.0) {
  Contour c;
  for (int i = 0; i < n; ++i) {
    const double t = phase + 2.0 * M_PI * i / n;
    c.emplace_back(cx + r * std::cos(t), cy + r * std::sin(t));
  }
  return c;
}

// Star-shaped random polygon with radius jitter; convex when jitter is small.
inline Contour random_polygon(std::mt19937& rng, int n, double r, double jitter) {
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  const double cx = 100 + 20 * uni(rng), cy = 100 + 20 * uni(rng);
  Contour c;
  for (int i = 0; i < n; ++i) {
    const double t = 2.0 * M_PI * (i + 0.3 * uni(rng)) / n;
    const double rr = r * (1.0 + jitter * uni(rng));
    c.emplace_back(cx + rr * std::cos(t), cy + rr * std::sin(t));
  }
  return c;
}

inline GrayImage render_ellipse(double cu, double cv, double a, double b, double angle, int size = 120) {
  const double c = std::cos(angle), s = std::sin(angle);
  return render_shape(size, size, [=](double x, double y) {
    const double dx = x - cu, dy = y - cv;
    const double p = (c * dx + s * dy) / a, q = (-s * dx + c * dy) / b;
    return p * p + q * q < 1.0;
  });
}

// Measurement of the single dark blob traced at a global threshold of 128.
inline discocal::CentroidMeasurement measure_blob(const GrayImage& img) {
  using namespace discocal;
  const auto cs = find_contours(threshold(img, ThresholdSpec::global(128)));
  if (cs.size() != 1) throw std::runtime_error("expected exactly one blob");
  return measure_centroid(img, gradient(img), cs[0]);
}

}  // namespace testutil
