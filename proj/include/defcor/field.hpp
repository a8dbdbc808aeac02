#pragma once

#include <optional>
#include <vector>

#include "defcor/image.hpp"

namespace defcor {

/// Bilinear footprint of a continuous sample position, border-clamped.
///
/// The sample position is clamped to [0, W-1] x [0, H-1] before the four taps
/// are chosen; `inside_x` / `inside_y` are false when clamping was active on
/// that axis (the sample is then locally constant in that coordinate).
struct BilinearTap {
  int x0, x1, y0, y1;
  double fx, fy;
  bool inside_x, inside_y;

  double w00() const { return (1 - fx) * (1 - fy); }
  double w10() const { return fx * (1 - fy); }
  double w01() const { return (1 - fx) * fy; }
  double w11() const { return fx * fy; }
};

BilinearTap bilinear_tap(int width, int height, double x, double y);

double sample_bilinear(const Plane& p, double x, double y);

// out(P) = in(P + flow(P)), bilinear, border-clamped.
Plane warp(const Plane& in, const FlowField& flow);
Image warp(const Image& image, const FlowField& flow);
// Warps each channel of `field` independently.
FlowField warp(const FlowField& field, const FlowField& flow);

// f_12 = f_1m + warp(f_m2, f_1m)
FlowField compose_flows(const FlowField& f_1m, const FlowField& f_m2);

// Align-corners bilinear resize: corner pixel centres map onto corner pixel centres.
Plane resize(const Plane& in, int width, int height);
Image resize(const Image& in, int width, int height);

// Resamples to (scale*W, scale*H) and multiplies every vector by `scale`.
FlowField scale_flow_up(const FlowField& f, int scale);
// Resamples to (W/factor, H/factor) and divides every vector by `factor`.
FlowField scale_flow_down(const FlowField& f, int factor);

FlowField add(const FlowField& a, const FlowField& b);
FlowField scaled(const FlowField& f, double s);

struct EpeStats {
  double mean = 0;
  double sd = 0;
  double max = 0;
  double per10 = 0;  // fraction of pixels with error > 10 px
  double per15 = 0;
  double per20 = 0;
};

struct EpeResult {
  Plane map;
  EpeStats stats;
};

EpeResult epe(const FlowField& pred, const FlowField& gt);

/// Middlebury colour coding. Hue encodes direction, saturation the magnitude
/// relative to `max_magnitude` (or the field's own maximum); zero is white.
RgbImage flow_to_color(const FlowField& f, std::optional<double> max_magnitude = std::nullopt);

// Fractional position on the colour wheel (0 .. wheel_size-1) used for direction (dx, dy).
double color_wheel_position(double dx, double dy);
int color_wheel_size();

/// Zero-mean normalized cross-correlation. Throws DegenerateError for a constant image.
double ncc(const Plane& a, const Plane& b);
double ncc(const Image& a, const Image& b);

/// Fixed-point inverse of a displacement field.
///
/// Returns v such that q = p + v(p) satisfies q + f(q) = p, solved per pixel by
/// q <- p - f(q) starting from q = p, until the residual is below `tol` px or
/// `max_iter` iterations have run.
FlowField invert_flow(const FlowField& f, int max_iter = 20, double tol = 0.05);

/// Moves a point through a correction field: finds P with P + f(P) = p.
/// This is where a point seen at p in the warped-from frame lands after warp(., f).
std::pair<double, double> pull_point(const FlowField& f, double x, double y, int max_iter = 50, double tol = 1e-4);

void require_same_shape(const Plane& a, const Plane& b, const char* what);

}  // namespace defcor

namespace defcor {

// Separable Gaussian blur with edge replication; kernel radius ceil(3*sigma).
Plane gaussian_blur(const Plane& in, double sigma);

}  // namespace defcor
