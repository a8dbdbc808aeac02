#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace defcor {

class ModelParams;

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::int64_t t = 0;  // completed steps
  std::map<std::string, std::vector<double>> m;
  std::map<std::string, std::vector<double>> v;
};

// One bias-corrected Adam update of `x` in place; `t` is the 1-based step index.
void adam_update(std::span<double> x, std::span<const double> grad, std::span<double> m, std::span<double> v,
                 std::int64_t t, const AdamConfig& cfg);

/// Applies one Adam step to every parameter using its accumulated gradient.
/// Parameters and moments are rounded to f32 afterwards so that a checkpoint
/// captures the optimizer exactly.
void adam_step(ModelParams& params, AdamState& state, const AdamConfig& cfg);

}  // namespace defcor
