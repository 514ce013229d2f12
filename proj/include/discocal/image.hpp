#pragma once

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "discocal/error.hpp"

namespace discocal {

// Row-major grayscale image, values in [0, 255]. Pixel (u, v) is column u, row v.
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<double> data;

  GrayImage() = default;
  GrayImage(int w, int h, double fill = 0.0) : width(w), height(h), data(size_t(w) * size_t(h), fill) {}

  double& operator()(int u, int v) { return data[size_t(v) * size_t(width) + size_t(u)]; }
  double operator()(int u, int v) const { return data[size_t(v) * size_t(width) + size_t(u)]; }
  bool contains(int u, int v) const { return u >= 0 && v >= 0 && u < width && v < height; }
};

// Foreground = 1. Dark blobs become foreground after thresholding.
struct BinaryImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  BinaryImage() = default;
  BinaryImage(int w, int h, std::uint8_t fill = 0) : width(w), height(h), data(size_t(w) * size_t(h), fill) {}

  std::uint8_t& operator()(int u, int v) { return data[size_t(v) * size_t(width) + size_t(u)]; }
  std::uint8_t operator()(int u, int v) const { return data[size_t(v) * size_t(width) + size_t(u)]; }
  bool fg(int u, int v) const { return u >= 0 && v >= 0 && u < width && v < height && (*this)(u, v) != 0; }
};

struct GradientField {
  int width = 0;
  int height = 0;
  std::vector<double> gx;
  std::vector<double> gy;

  double x(int u, int v) const { return gx[size_t(v) * size_t(width) + size_t(u)]; }
  double y(int u, int v) const { return gy[size_t(v) * size_t(width) + size_t(u)]; }
};

struct ThresholdSpec {
  enum class Kind { Global, Adaptive };
  Kind kind = Kind::Global;
  double level = 128.0;  // global
  int block = 31;        // adaptive, odd >= 3
  double offset = 5.0;   // adaptive

  static ThresholdSpec global(double t) { return {Kind::Global, t, 0, 0.0}; }
  static ThresholdSpec adaptive(int b, double c) { return {Kind::Adaptive, 0.0, b, c}; }

  std::string str() const {
    std::ostringstream os;
    if (kind == Kind::Global)
      os << "global:" << level;
    else
      os << "adaptive:" << block << ":" << offset;
    return os.str();
  }
  bool operator==(const ThresholdSpec&) const = default;
};

namespace detail {

inline void validate(const GrayImage& img) {
  if (img.width <= 0 || img.height <= 0) throw InvalidArgument("zero-dimension image");
  if (img.data.size() != size_t(img.width) * size_t(img.height))
    throw InvalidArgument("image data size does not match dimensions");
}

// Maps raw samples to [0,255]. 8-bit depth scales by maxval; deeper data is min/max stretched per image.
inline void rescale(std::vector<double>& px, int maxval) {
  if (maxval <= 255) {
    const double s = 255.0 / maxval;
    for (auto& p : px) p = std::clamp(p * s, 0.0, 255.0);
    return;
  }
  const auto [lo, hi] = std::minmax_element(px.begin(), px.end());
  const double a = *lo, b = *hi;
  for (auto& p : px) p = b > a ? 255.0 * (p - a) / (b - a) : 0.0;
}

inline GrayImage read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("unreadable file: " + path);
  std::string magic;
  in >> magic;
  auto next_int = [&]() {
    int c;
    while ((c = in.peek()) != EOF) {
      if (std::isspace(c)) {
        in.get();
      } else if (c == '#') {
        std::string dummy;
        std::getline(in, dummy);
      } else {
        break;
      }
    }
    long v = -1;
    if (!(in >> v)) throw IoError("unreadable file: " + path);
    return v;
  };
  const long w = next_int(), h = next_int(), maxval = next_int();
  if (w <= 0 || h <= 0) throw IoError("zero-dimension image: " + path);
  if (maxval <= 0 || maxval > 65535) throw IoError("unreadable file: " + path);
  GrayImage img{int(w), int(h)};
  const size_t n = img.data.size();
  if (magic == "P2") {
    for (size_t i = 0; i < n; ++i) {
      long v;
      if (!(in >> v)) throw IoError("unreadable file: " + path);
      img.data[i] = double(v);
    }
  } else {
    in.get();  // single whitespace after header
    const size_t bps = maxval > 255 ? 2 : 1;
    std::vector<unsigned char> buf(n * bps);
    if (!in.read(reinterpret_cast<char*>(buf.data()), std::streamsize(buf.size())))
      throw IoError("unreadable file: " + path);
    for (size_t i = 0; i < n; ++i)
      img.data[i] = bps == 1 ? buf[i] : double((buf[2 * i] << 8) | buf[2 * i + 1]);
  }
  rescale(img.data, int(maxval));
  return img;
}

struct PngReadState {
  std::FILE* fp = nullptr;
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngReadState() {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    if (fp) std::fclose(fp);
  }
};

// All C++ state lives in the caller so longjmp never skips a destructor.
inline bool png_decode(PngReadState& s, std::vector<std::uint8_t>& raw, std::vector<png_bytep>& rows,
                       png_uint_32& w, png_uint_32& h, int& channels, int& depth) {
  if (setjmp(png_jmpbuf(s.png))) return false;
  png_init_io(s.png, s.fp);
  png_read_info(s.png, s.info);
  w = png_get_image_width(s.png, s.info);
  h = png_get_image_height(s.png, s.info);
  const int color = png_get_color_type(s.png, s.info);
  depth = png_get_bit_depth(s.png, s.info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(s.png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(s.png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(s.png);
  png_read_update_info(s.png, s.info);
  channels = png_get_channels(s.png, s.info);
  depth = png_get_bit_depth(s.png, s.info);
  const size_t stride = png_get_rowbytes(s.png, s.info);
  if (w == 0 || h == 0) return true;
  raw.resize(stride * h);
  rows.resize(h);
  for (png_uint_32 r = 0; r < h; ++r) rows[r] = raw.data() + r * stride;
  png_read_image(s.png, rows.data());
  png_read_end(s.png, nullptr);
  return true;
}

inline GrayImage read_png(const std::string& path) {
  PngReadState s;
  s.fp = std::fopen(path.c_str(), "rb");
  if (!s.fp) throw IoError("unreadable file: " + path);
  s.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  s.info = s.png ? png_create_info_struct(s.png) : nullptr;
  if (!s.info) throw IoError("unreadable file: " + path);
  std::vector<std::uint8_t> raw;
  std::vector<png_bytep> rows;
  png_uint_32 w = 0, h = 0;
  int channels = 0, depth = 0;
  if (!png_decode(s, raw, rows, w, h, channels, depth)) throw IoError("unreadable file: " + path);
  if (w == 0 || h == 0) throw IoError("zero-dimension image: " + path);
  if (channels != 1 && channels != 3) throw IoError("unsupported format: " + path);
  const size_t bps = depth == 16 ? 2 : 1;
  GrayImage img{int(w), int(h)};
  for (png_uint_32 r = 0; r < h; ++r) {
    const std::uint8_t* row = rows[r];
    for (png_uint_32 c = 0; c < w; ++c) {
      auto sample = [&](int ch) {
        const size_t k = (size_t(c) * channels + ch) * bps;
        return bps == 1 ? double(row[k]) : double((row[k] << 8) | row[k + 1]);
      };
      const double g = channels == 1 ? sample(0) : 0.299 * sample(0) + 0.587 * sample(1) + 0.114 * sample(2);
      img(int(c), int(r)) = g;
    }
  }
  rescale(img.data, depth == 16 ? 65535 : 255);
  return img;
}

}  // namespace detail

// Reads PGM (P2/P5) or PNG. Colour PNGs are converted with Rec.601 luma weights.
inline GrayImage load_gray(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("unreadable file: " + path);
  std::array<unsigned char, 8> sig{};
  in.read(reinterpret_cast<char*>(sig.data()), sig.size());
  const auto got = in.gcount();
  in.close();
  if (got >= 2 && sig[0] == 'P' && (sig[1] == '2' || sig[1] == '5')) return detail::read_pgm(path);
  if (got == 8 && png_sig_cmp(sig.data(), 0, 8) == 0) return detail::read_png(path);
  if (got < 2) throw IoError("unreadable file: " + path);
  throw IoError("unsupported format: " + path);
}

inline std::uint8_t to_u8(double v) { return std::uint8_t(std::clamp(std::lround(v), 0L, 255L)); }

// Writes 8-bit gray (channels = 1) or RGB (channels = 3) PNG from interleaved bytes.
inline void save_png(const std::string& path, int width, int height, int channels,
                     const std::vector<std::uint8_t>& bytes) {
  if (width <= 0 || height <= 0 || (channels != 1 && channels != 3) ||
      bytes.size() != size_t(width) * size_t(height) * size_t(channels))
    throw InvalidArgument("save_png: bad buffer");
  std::FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw IoError("cannot write " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  std::vector<png_bytep> rows(height);
  for (int r = 0; r < height; ++r)
    rows[r] = const_cast<png_bytep>(bytes.data() + size_t(r) * width * channels);
  bool ok = false;
  if (info && !setjmp(png_jmpbuf(png))) {
    png_init_io(png, fp);
    png_set_IHDR(png, info, png_uint_32(width), png_uint_32(height), 8,
                 channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    ok = true;
  }
  png_destroy_write_struct(&png, info ? &info : nullptr);
  std::fclose(fp);
  if (!ok) throw IoError("cannot write " + path);
}

inline void save_png(const std::string& path, const GrayImage& img) {
  std::vector<std::uint8_t> bytes(img.data.size());
  std::transform(img.data.begin(), img.data.end(), bytes.begin(), to_u8);
  save_png(path, img.width, img.height, 1, bytes);
}

inline void save_pgm(const std::string& path, const GrayImage& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << "P5\n" << img.width << " " << img.height << "\n255\n";
  for (double v : img.data) out.put(char(to_u8(v)));
}

// Sobel gradient scaled by 1/8: vertical [1,2,1]/4 smoothing (rows clamped),
// then central differences inside and one-sided differences on the border.
inline GradientField gradient(const GrayImage& img) {
  detail::validate(img);
  const int w = img.width, h = img.height;
  if (w < 3 || h < 3) throw InvalidArgument("gradient: image smaller than 3x3");
  GradientField g{w, h, std::vector<double>(img.data.size()), std::vector<double>(img.data.size())};

  auto smooth_v = [&](int u, int v) {
    const int a = std::max(v - 1, 0), b = std::min(v + 1, h - 1);
    return 0.25 * (img(u, a) + 2.0 * img(u, v) + img(u, b));
  };
  auto smooth_u = [&](int u, int v) {
    const int a = std::max(u - 1, 0), b = std::min(u + 1, w - 1);
    return 0.25 * (img(a, v) + 2.0 * img(u, v) + img(b, v));
  };
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      const size_t i = size_t(v) * w + u;
      if (u == 0)
        g.gx[i] = smooth_v(1, v) - smooth_v(0, v);
      else if (u == w - 1)
        g.gx[i] = smooth_v(w - 1, v) - smooth_v(w - 2, v);
      else
        g.gx[i] = 0.5 * (smooth_v(u + 1, v) - smooth_v(u - 1, v));

      if (v == 0)
        g.gy[i] = smooth_u(u, 1) - smooth_u(u, 0);
      else if (v == h - 1)
        g.gy[i] = smooth_u(u, h - 1) - smooth_u(u, h - 2);
      else
        g.gy[i] = 0.5 * (smooth_u(u, v + 1) - smooth_u(u, v - 1));
    }
  }
  return g;
}

struct IntensityRange {
  double min;
  double max;
};

// Min/max over the (2*window+1)^2 box around the nearest pixel, clipped to the image.
inline IntensityRange local_intensity_range(const GrayImage& img, double u, double v, int window) {
  if (window < 1) throw InvalidArgument("local_intensity_range: window must be >= 1");
  const int cu = int(std::lround(u)), cv = int(std::lround(v));
  const int u0 = std::max(cu - window, 0), u1 = std::min(cu + window, img.width - 1);
  const int v0 = std::max(cv - window, 0), v1 = std::min(cv + window, img.height - 1);
  IntensityRange r{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  bool any = false;
  for (int y = v0; y <= v1; ++y)
    for (int x = u0; x <= u1; ++x) {
      r.min = std::min(r.min, img(x, y));
      r.max = std::max(r.max, img(x, y));
      any = true;
    }
  if (!any) {
    const int x = std::clamp(cu, 0, img.width - 1), y = std::clamp(cv, 0, img.height - 1);
    r = {img(x, y), img(x, y)};
  }
  return r;
}

namespace detail {

// Running-sum box mean along one axis with replicated borders.
inline void box_mean_1d(const double* in, double* out, int n, int stride, int r) {
  auto at = [&](int i) { return in[size_t(std::clamp(i, 0, n - 1)) * stride]; };
  double acc = 0.0;
  for (int i = -r; i <= r; ++i) acc += at(i);
  const double norm = 1.0 / (2 * r + 1);
  for (int i = 0; i < n; ++i) {
    out[size_t(i) * stride] = acc * norm;
    acc += at(i + r + 1) - at(i - r);
  }
}

}  // namespace detail

// Adaptive mode compares each pixel with the mean of its block x block window
// (borders replicated) minus offset.
inline BinaryImage threshold(const GrayImage& img, const ThresholdSpec& spec) {
  detail::validate(img);
  const int w = img.width, h = img.height;
  BinaryImage out(w, h);
  if (spec.kind == ThresholdSpec::Kind::Global) {
    for (size_t i = 0; i < img.data.size(); ++i) out.data[i] = img.data[i] < spec.level ? 1 : 0;
    return out;
  }
  if (spec.block < 3 || spec.block % 2 == 0) throw InvalidArgument("threshold: block size must be odd and >= 3");
  const int r = spec.block / 2;
  GrayImage tmp(w, h), mean(w, h);
  for (int y = 0; y < h; ++y) detail::box_mean_1d(&img.data[size_t(y) * w], &tmp.data[size_t(y) * w], w, 1, r);
  for (int x = 0; x < w; ++x) detail::box_mean_1d(&tmp.data[size_t(x)], &mean.data[size_t(x)], h, w, r);
  for (size_t i = 0; i < img.data.size(); ++i) out.data[i] = img.data[i] < mean.data[i] - spec.offset ? 1 : 0;
  return out;
}

// 3x3 box closing, one iteration, done as separable max/min passes. Outside
// pixels count as background for the dilation and are ignored by the erosion,
// so closing never shrinks a set.
inline BinaryImage closing(const BinaryImage& in) {
  const int w = in.width, h = in.height;
  BinaryImage a(w, h), b(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      a(x, y) = in(x, y) | (x > 0 ? in(x - 1, y) : 0) | (x + 1 < w ? in(x + 1, y) : 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      b(x, y) = a(x, y) | (y > 0 ? a(x, y - 1) : 0) | (y + 1 < h ? a(x, y + 1) : 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      a(x, y) = b(x, y) & (x > 0 ? b(x - 1, y) : 1) & (x + 1 < w ? b(x + 1, y) : 1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      b(x, y) = a(x, y) & (y > 0 ? a(x, y - 1) : 1) & (y + 1 < h ? a(x, y + 1) : 1);
  return b;
}

// Separable Gaussian blur with replicated borders; kernel radius ceil(4 sigma).
inline GrayImage gaussian_blur(const GrayImage& img, double sigma) {
  detail::validate(img);
  if (sigma <= 0.0) return img;
  const int r = int(std::ceil(4.0 * sigma));
  std::vector<double> k(2 * r + 1);
  double s = 0.0;
  for (int i = -r; i <= r; ++i) s += k[i + r] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (auto& x : k) x /= s;
  const int w = img.width, h = img.height;
  GrayImage tmp(w, h), out(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -r; i <= r; ++i) acc += k[i + r] * img(std::clamp(x + i, 0, w - 1), y);
      tmp(x, y) = acc;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -r; i <= r; ++i) acc += k[i + r] * tmp(x, std::clamp(y + i, 0, h - 1));
      out(x, y) = acc;
    }
  return out;
}

}  // namespace discocal
