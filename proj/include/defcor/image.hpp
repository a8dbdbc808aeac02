#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace defcor {

// Imaging depth over the default 384-row frame: 45 mm / 384 px.
inline constexpr double kImagingDepthMm = 45.0;
inline constexpr double kDefaultSpacingMmPerPx = kImagingDepthMm / 384.0;

/// Row-major scalar grid, x = column, y = row, origin top-left.
struct Plane {
  int width = 0;
  int height = 0;
  std::vector<double> data;

  Plane() = default;
  Plane(int w, int h, double fill = 0.0) : width(w), height(h), data(static_cast<size_t>(w) * h, fill) {}

  double& at(int x, int y) { return data[static_cast<size_t>(y) * width + x]; }
  double at(int x, int y) const { return data[static_cast<size_t>(y) * width + x]; }
  size_t size() const { return data.size(); }
  bool same_shape(const Plane& o) const { return width == o.width && height == o.height; }
};

/// Single-channel B-mode frame. Intensities are reals in [0, 255]; rows run with depth.
struct Image {
  Plane pixels;
  double spacing_mm_per_px = kDefaultSpacingMmPerPx;

  Image() = default;
  Image(int w, int h, double fill = 0.0) : pixels(w, h, fill) {}
  explicit Image(Plane p, double spacing = kDefaultSpacingMmPerPx) : pixels(std::move(p)), spacing_mm_per_px(spacing) {}

  int width() const { return pixels.width; }
  int height() const { return pixels.height; }
  double& at(int x, int y) { return pixels.at(x, y); }
  double at(int x, int y) const { return pixels.at(x, y); }
};

/// Dense displacement field in pixels: dx lateral, dy axial.
struct FlowField {
  Plane dx;
  Plane dy;

  FlowField() = default;
  FlowField(int w, int h) : dx(w, h), dy(w, h) {}
  FlowField(Plane x, Plane y) : dx(std::move(x)), dy(std::move(y)) {}

  int width() const { return dx.width; }
  int height() const { return dx.height; }
};

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  bool operator==(const Rgb&) const = default;
};

struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<Rgb> data;

  RgbImage() = default;
  RgbImage(int w, int h) : width(w), height(h), data(static_cast<size_t>(w) * h) {}
  Rgb& at(int x, int y) { return data[static_cast<size_t>(y) * width + x]; }
  const Rgb& at(int x, int y) const { return data[static_cast<size_t>(y) * width + x]; }
};

// Binary I/O. PGM/PPM are binary P5/P6 with maxval 255; images are rounded and
// clamped to [0,255] on write. DFF1 is "DFF1", u32 LE width, u32 LE height, then
// H*W (dx, dy) f32 LE pairs in row-major order.
Image read_pgm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const Image& img);
RgbImage read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const RgbImage& img);
FlowField read_dff(const std::filesystem::path& path);
void write_dff(const std::filesystem::path& path, const FlowField& flow);

// Rounds every pixel to the nearest integer in [0,255] (the 8-bit storage grid).
Image quantize(const Image& img);

}  // namespace defcor
