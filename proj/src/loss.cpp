#include "defcor/loss.hpp"

#include "defcor/error.hpp"
#include "defcor/field.hpp"
#include "defcor/layers.hpp"

namespace defcor {

void LossConfig::validate() const {
  if (lambda1 < 0 || lambda2 < 0 || edge_lambda_x < 0 || edge_lambda_y < 0)
    throw ConfigError("loss weights must be non-negative");
  if (!(epsilon > 0)) throw ConfigError("loss epsilon must be positive");
}

std::array<ad::Tensor, 3> multiscale_targets(const FlowField& gt) {
  return {flow_tensor(scale_flow_down(gt, 4)), flow_tensor(scale_flow_down(gt, 2)), flow_tensor(gt)};
}

ad::Var l1_multiscale(const std::array<ad::Var, 3>& preds, const FlowField& gt) {
  const auto targets = multiscale_targets(gt);
  ad::Var acc;
  for (size_t s = 0; s < 3; ++s) {
    auto term = ad::l1_flow_mean(preds[s], targets[s]);
    acc = acc.defined() ? ad::add(acc, term) : term;
  }
  return acc;
}

ad::Var smoothness_loss(const ad::Var& f32, const Image& image, const LossConfig& cfg) {
  return ad::smoothness(f32, image_tensor(image), {cfg.edge_lambda_x, cfg.edge_lambda_y, cfg.epsilon});
}

LossTerms total_loss(const ForwardResult& fwd, const FlowField& gt, const Image& image, const LossConfig& cfg) {
  if (gt.width() != image.width() || gt.height() != image.height())
    throw ShapeError("total_loss: ground truth does not match the image");
  LossTerms t;
  t.l1 = l1_multiscale({fwd.f11, fwd.f22, fwd.f32}, gt);
  t.smooth = smoothness_loss(fwd.f32, image, cfg);
  t.total = ad::add(ad::scale(t.l1, cfg.lambda1), ad::scale(t.smooth, cfg.lambda2));
  return t;
}

}  // namespace defcor
