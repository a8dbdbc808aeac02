#include "defcor/optim.hpp"

#include <cmath>

#include "defcor/error.hpp"
#include "defcor/model.hpp"

namespace defcor {

namespace {

double to_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

}  // namespace

void adam_update(std::span<double> x, std::span<const double> grad, std::span<double> m, std::span<double> v,
                 std::int64_t t, const AdamConfig& cfg) {
  if (grad.size() != x.size() || m.size() != x.size() || v.size() != x.size())
    throw ShapeError("adam_update: parameter, gradient and moment sizes differ");
  if (t < 1) throw ConfigError("adam_update: step index must be >= 1");
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (size_t i = 0; i < x.size(); ++i) {
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad[i];
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    x[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

void adam_step(ModelParams& params, AdamState& state, const AdamConfig& cfg) {
  ++state.t;
  for (auto& np : params.params()) {
    auto& value = np.var.mutable_value();
    const auto& grad = np.var.grad();
    auto& m = state.m[np.name];
    auto& v = state.v[np.name];
    if (m.empty()) m.assign(value.numel(), 0.0);
    if (v.empty()) v.assign(value.numel(), 0.0);
    adam_update(value.data, grad.data, m, v, state.t, cfg);
    for (auto& x : value.data) x = to_f32(x);
    for (auto& x : m) x = to_f32(x);
    for (auto& x : v) x = to_f32(x);
  }
}

}  // namespace defcor
