#pragma once

#include "defcor/autograd.hpp"

namespace defcor::ad {

inline constexpr double kLeakySlope = 0.01;

// x: {Cin,H,W}; weight: {Cout,Cin,k,k} with odd k; bias: {Cout}. Zero padding k/2, stride 1.
Var conv2d(const Var& x, const Var& weight, const Var& bias);
Var leaky_relu(const Var& x, double slope = kLeakySlope);
// 2x2 max pooling; H and W must be even.
Var downsample2x(const Var& x);
// Nearest-neighbour 2x upsampling.
Var upsample2x(const Var& x);
// Channel concatenation of {Ca,H,W} and {Cb,H,W}.
Var concat(const Var& a, const Var& b);

Var add(const Var& a, const Var& b);
Var scale(const Var& x, double s);
// x * s + b for single-element s and b.
Var affine(const Var& x, const Var& s, const Var& b);
Var sum(const Var& x);
Var mean(const Var& x);

// Align-corners bilinear resize of every channel to (height, width).
Var resize_bilinear(const Var& x, int height, int width);
// out(c, P) = x(c, P + flow(P)), bilinear with border clamping; flow is {2,H,W} (dx, dy).
Var warp(const Var& x, const Var& flow);

/// Polynomial displacement regression.
///
/// h: {1,H,W}; coeffs: {2, n} with rows (K_x, K_y), highest power first.
/// out(i, P) = force * sum_j coeffs(i, j) * h(P)^(n-1-j).
Var polynomial_field(const Var& h, const Var& coeffs, double force);

// Mean over pixels of |dx| + |dy| between a {2,H,W} prediction and a fixed target.
Var l1_flow_mean(const Var& pred, const Tensor& target);

struct SmoothnessWeights {
  double edge_lambda_x = 150;
  double edge_lambda_y = 150;
  double epsilon = 1e-3;
};

/// Edge-aware first- and second-order smoothness of a {2,H,W} flow.
///
/// For k in {1,2}: mean of exp(-lx * Ix^2) * sqrt((d^k f/dx^k)^2 + eps^2) plus the
/// y counterpart, where Ix, Iy are forward differences of `image` for k = 1 and central
/// differences for k = 2 ({1,H,W},
/// intensities in [0,1]). Means run over channels and the valid interior.
Var smoothness(const Var& flow, const Tensor& image, const SmoothnessWeights& w);

}  // namespace defcor::ad
