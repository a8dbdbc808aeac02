#include "defcor/field.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>

#include "defcor/error.hpp"

namespace defcor {

void require_same_shape(const Plane& a, const Plane& b, const char* what) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(what) + ": shape mismatch " + std::to_string(a.width) + "x" +
                     std::to_string(a.height) + " vs " + std::to_string(b.width) + "x" + std::to_string(b.height));
  }
}

BilinearTap bilinear_tap(int width, int height, double x, double y) {
  BilinearTap t{};
  const double xmax = width - 1;
  const double ymax = height - 1;
  t.inside_x = x >= 0.0 && x <= xmax;
  t.inside_y = y >= 0.0 && y <= ymax;
  x = std::clamp(x, 0.0, xmax);
  y = std::clamp(y, 0.0, ymax);
  t.x0 = std::min(static_cast<int>(std::floor(x)), width - 1);
  t.y0 = std::min(static_cast<int>(std::floor(y)), height - 1);
  t.x1 = std::min(t.x0 + 1, width - 1);
  t.y1 = std::min(t.y0 + 1, height - 1);
  t.fx = x - t.x0;
  t.fy = y - t.y0;
  return t;
}

double sample_bilinear(const Plane& p, double x, double y) {
  const auto t = bilinear_tap(p.width, p.height, x, y);
  if (t.fx == 0.0 && t.fy == 0.0) return p.at(t.x0, t.y0);
  return t.w00() * p.at(t.x0, t.y0) + t.w10() * p.at(t.x1, t.y0) + t.w01() * p.at(t.x0, t.y1) +
         t.w11() * p.at(t.x1, t.y1);
}

Plane warp(const Plane& in, const FlowField& flow) {
  require_same_shape(in, flow.dx, "warp");
  Plane out(in.width, in.height);
  for (int y = 0; y < in.height; ++y) {
    for (int x = 0; x < in.width; ++x) {
      out.at(x, y) = sample_bilinear(in, x + flow.dx.at(x, y), y + flow.dy.at(x, y));
    }
  }
  return out;
}

Image warp(const Image& image, const FlowField& flow) {
  return Image(warp(image.pixels, flow), image.spacing_mm_per_px);
}

FlowField warp(const FlowField& field, const FlowField& flow) {
  return FlowField(warp(field.dx, flow), warp(field.dy, flow));
}

FlowField compose_flows(const FlowField& f_1m, const FlowField& f_m2) {
  require_same_shape(f_1m.dx, f_m2.dx, "compose_flows");
  return add(f_1m, warp(f_m2, f_1m));
}

Plane resize(const Plane& in, int width, int height) {
  if (width < 1 || height < 1) throw ShapeError("resize: target dimensions must be positive");
  Plane out(width, height);
  const double sx = width > 1 ? static_cast<double>(in.width - 1) / (width - 1) : 0.0;
  const double sy = height > 1 ? static_cast<double>(in.height - 1) / (height - 1) : 0.0;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) out.at(x, y) = sample_bilinear(in, x * sx, y * sy);
  }
  return out;
}

Image resize(const Image& in, int width, int height) {
  const double spacing = in.spacing_mm_per_px * static_cast<double>(in.height()) / height;
  return Image(resize(in.pixels, width, height), spacing);
}

FlowField scale_flow_up(const FlowField& f, int scale) {
  if (scale < 2) throw ConfigError("scale_flow_up: scale must be >= 2");
  const int w = f.width() * scale;
  const int h = f.height() * scale;
  return scaled(FlowField(resize(f.dx, w, h), resize(f.dy, w, h)), scale);
}

FlowField scale_flow_down(const FlowField& f, int factor) {
  if (factor < 1 || f.width() % factor != 0 || f.height() % factor != 0) {
    throw ShapeError("scale_flow_down: factor " + std::to_string(factor) + " does not divide " +
                     std::to_string(f.width()) + "x" + std::to_string(f.height()));
  }
  if (factor == 1) return f;
  const int w = f.width() / factor;
  const int h = f.height() / factor;
  return scaled(FlowField(resize(f.dx, w, h), resize(f.dy, w, h)), 1.0 / factor);
}

FlowField add(const FlowField& a, const FlowField& b) {
  require_same_shape(a.dx, b.dx, "add");
  FlowField out = a;
  for (size_t i = 0; i < out.dx.size(); ++i) {
    out.dx.data[i] += b.dx.data[i];
    out.dy.data[i] += b.dy.data[i];
  }
  return out;
}

FlowField scaled(const FlowField& f, double s) {
  FlowField out = f;
  for (auto& v : out.dx.data) v *= s;
  for (auto& v : out.dy.data) v *= s;
  return out;
}

EpeResult epe(const FlowField& pred, const FlowField& gt) {
  require_same_shape(pred.dx, gt.dx, "epe");
  EpeResult r{Plane(pred.width(), pred.height()), {}};
  const size_t n = r.map.size();
  double sum = 0, sum2 = 0;
  size_t c10 = 0, c15 = 0, c20 = 0;
  for (size_t i = 0; i < n; ++i) {
    const double e = std::hypot(pred.dx.data[i] - gt.dx.data[i], pred.dy.data[i] - gt.dy.data[i]);
    r.map.data[i] = e;
    sum += e;
    sum2 += e * e;
    r.stats.max = std::max(r.stats.max, e);
    c10 += e > 10.0;
    c15 += e > 15.0;
    c20 += e > 20.0;
  }
  const double dn = static_cast<double>(n);
  r.stats.mean = sum / dn;
  r.stats.sd = std::sqrt(std::max(0.0, sum2 / dn - r.stats.mean * r.stats.mean));
  r.stats.per10 = c10 / dn;
  r.stats.per15 = c15 / dn;
  r.stats.per20 = c20 / dn;
  return r;
}

namespace {

// Middlebury wheel: segment lengths chosen for perceptual spacing.
constexpr int kRY = 15, kYG = 6, kGC = 4, kCB = 11, kBM = 13, kMR = 6;
constexpr int kWheel = kRY + kYG + kGC + kCB + kBM + kMR;

const std::array<std::array<double, 3>, kWheel>& wheel() {
  static const auto table = [] {
    std::array<std::array<double, 3>, kWheel> w{};
    int k = 0;
    // Integer steps, as in the reference colour code.
    auto step = [](int i, int n) { return static_cast<double>(255 * i / n); };
    for (int i = 0; i < kRY; ++i) w[k++] = {255, step(i, kRY), 0};
    for (int i = 0; i < kYG; ++i) w[k++] = {255 - step(i, kYG), 255, 0};
    for (int i = 0; i < kGC; ++i) w[k++] = {0, 255, step(i, kGC)};
    for (int i = 0; i < kCB; ++i) w[k++] = {0, 255 - step(i, kCB), 255};
    for (int i = 0; i < kBM; ++i) w[k++] = {step(i, kBM), 0, 255};
    for (int i = 0; i < kMR; ++i) w[k++] = {255, 0, 255 - step(i, kMR)};
    return w;
  }();
  return table;
}

}  // namespace

int color_wheel_size() { return kWheel; }

double color_wheel_position(double dx, double dy) {
  const double a = std::atan2(-dy, -dx) / std::numbers::pi;
  return (a + 1.0) / 2.0 * (kWheel - 1);
}

RgbImage flow_to_color(const FlowField& f, std::optional<double> max_magnitude) {
  double maxrad = 0;
  if (max_magnitude) {
    maxrad = *max_magnitude;
  } else {
    for (size_t i = 0; i < f.dx.size(); ++i) maxrad = std::max(maxrad, std::hypot(f.dx.data[i], f.dy.data[i]));
  }
  if (!(maxrad > 0)) maxrad = 1.0;

  const auto& w = wheel();
  RgbImage out(f.width(), f.height());
  for (size_t i = 0; i < f.dx.size(); ++i) {
    const double u = f.dx.data[i], v = f.dy.data[i];
    const double rad = std::hypot(u, v) / maxrad;
    const double fk = color_wheel_position(u, v);
    const int k0 = static_cast<int>(std::floor(fk));
    const int k1 = (k0 + 1) % kWheel;
    const double t = fk - k0;
    std::array<std::uint8_t, 3> c{};
    for (int ch = 0; ch < 3; ++ch) {
      double col = ((1 - t) * w[k0][ch] + t * w[k1][ch]) / 255.0;
      col = rad <= 1 ? 1 - rad * (1 - col) : col * 0.75;
      c[ch] = static_cast<std::uint8_t>(std::floor(255.0 * col + 0.5));
    }
    out.data[i] = {c[0], c[1], c[2]};
  }
  return out;
}

double ncc(const Plane& a, const Plane& b) {
  require_same_shape(a, b, "ncc");
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    ma += a.data[i];
    mb += b.data[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double da = a.data[i] - ma, db = b.data[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa <= 0 || sbb <= 0) throw DegenerateError("ncc: constant image has undefined correlation");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

double ncc(const Image& a, const Image& b) { return ncc(a.pixels, b.pixels); }

FlowField invert_flow(const FlowField& f, int max_iter, double tol) {
  FlowField inv(f.width(), f.height());
  for (int y = 0; y < f.height(); ++y) {
    for (int x = 0; x < f.width(); ++x) {
      double qx = x, qy = y;
      for (int it = 0; it < max_iter; ++it) {
        const double fx = sample_bilinear(f.dx, qx, qy);
        const double fy = sample_bilinear(f.dy, qx, qy);
        if (std::hypot(qx + fx - x, qy + fy - y) < tol) break;
        qx = x - fx;
        qy = y - fy;
      }
      inv.dx.at(x, y) = qx - x;
      inv.dy.at(x, y) = qy - y;
    }
  }
  return inv;
}

std::pair<double, double> pull_point(const FlowField& f, double x, double y, int max_iter, double tol) {
  double px = x, py = y;
  for (int it = 0; it < max_iter; ++it) {
    const double nx = x - sample_bilinear(f.dx, px, py);
    const double ny = y - sample_bilinear(f.dy, px, py);
    const double step = std::hypot(nx - px, ny - py);
    px = nx;
    py = ny;
    if (step < tol) break;
  }
  return {px, py};
}

}  // namespace defcor

namespace defcor {

Plane gaussian_blur(const Plane& in, double sigma) {
  if (!(sigma > 0)) throw ConfigError("gaussian_blur: sigma must be positive");
  const int r = static_cast<int>(std::ceil(3 * sigma));
  std::vector<double> k(2 * r + 1);
  double ks = 0;
  for (int i = -r; i <= r; ++i) ks += k[i + r] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (auto& v : k) v /= ks;

  Plane tmp(in.width, in.height), out(in.width, in.height);
  for (int y = 0; y < in.height; ++y) {
    for (int x = 0; x < in.width; ++x) {
      double s = 0;
      for (int i = -r; i <= r; ++i) s += k[i + r] * in.at(std::clamp(x + i, 0, in.width - 1), y);
      tmp.at(x, y) = s;
    }
  }
  for (int y = 0; y < in.height; ++y) {
    for (int x = 0; x < in.width; ++x) {
      double s = 0;
      for (int i = -r; i <= r; ++i) s += k[i + r] * tmp.at(x, std::clamp(y + i, 0, in.height - 1));
      out.at(x, y) = s;
    }
  }
  return out;
}

}  // namespace defcor
