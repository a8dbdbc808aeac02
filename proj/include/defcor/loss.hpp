#pragma once

#include <array>

#include "defcor/autograd.hpp"
#include "defcor/image.hpp"
#include "defcor/model.hpp"

namespace defcor {

struct LossConfig {
  double lambda1 = 1.0;   // L1 weight
  double lambda2 = 10.0;  // smoothness weight
  double edge_lambda_x = 150.0;
  double edge_lambda_y = 150.0;
  double epsilon = 1e-3;

  void validate() const;
};

/// Ground truth resampled to the quarter, half and full resolution of the
/// pyramid, vectors rescaled into each resolution's pixel units.
std::array<ad::Tensor, 3> multiscale_targets(const FlowField& gt);

/// Unweighted sum over scales of the per-pixel L1 (|dx|+|dy|) mean between
/// each combined per-scale field and its rescaled target.
ad::Var l1_multiscale(const std::array<ad::Var, 3>& preds, const FlowField& gt);

// Edge-aware smoothness of the final field; image intensities are normalized to [0,1].
ad::Var smoothness_loss(const ad::Var& f32, const Image& image, const LossConfig& cfg);

struct LossTerms {
  ad::Var total;
  ad::Var l1;
  ad::Var smooth;
};

/// lambda1 * L1 + lambda2 * smoothness, supervising (f11, f12 + f21, f32).
LossTerms total_loss(const ForwardResult& fwd, const FlowField& gt, const Image& image, const LossConfig& cfg);

}  // namespace defcor
