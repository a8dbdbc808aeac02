#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "defcor/autograd.hpp"
#include "defcor/calib.hpp"
#include "defcor/image.hpp"

namespace defcor {

struct ModelConfig {
  std::array<int, 3> widths{8, 16, 32};  // encoder channels per level
  int first_layer_order = 2;             // 2: quadratic DFM in layer 1; 1: linear ablation
  double leaky_slope = 0.01;

  bool operator==(const ModelConfig&) const = default;
};

struct NamedParam {
  std::string name;
  ad::Var var;
};

/// All learnable blobs of the network plus the stiffness population used to
/// normalize an unseen subject's global stiffness.
///
/// The U-shape extractor exists once; all three pyramid layers read the same
/// Var objects. Values are kept exactly representable in f32 so checkpoints
/// round-trip bit-exactly.
class ModelParams {
 public:
  ModelConfig config;
  std::optional<StiffnessPopulation> population;

  static ModelParams initialize(const ModelConfig& cfg, std::uint64_t seed);

  const ad::Var& at(const std::string& name) const;
  ad::Var& at(const std::string& name);
  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  std::vector<NamedParam>& params() { return params_; }
  const std::vector<NamedParam>& params() const { return params_; }
  size_t parameter_count() const;
  void zero_grad();
  // Deep copy (fresh graph leaves with identical values).
  ModelParams clone() const;

  void add(std::string name, ad::Tensor value);

 private:
  std::vector<NamedParam> params_;
  std::map<std::string, size_t> index_;
};

// Network input: intensities scaled to [0,1], shape {1,H,W}.
ad::Tensor image_tensor(const Image& img);
ad::Tensor flow_tensor(const FlowField& f);
FlowField tensor_to_flow(const ad::Tensor& t);

/// K_us = LeakyReLU(UNET(x)) with the shared extractor; x is {1,h,w}, h and w divisible by 4.
ad::Var stiffness_map(const ad::Var& x, const ModelParams& p);

/// LeakyReLU(c1 * k_us + c2 * k_g_n + c3) with the coefficients of pyramid layer `layer` (1..3).
ad::Var stiffness_update(const ad::Var& k_us, double k_g_n, const ModelParams& p, int layer);

/// Displacement field force * K_i * M(h) for the layer's basis (quadratic or linear).
ad::Var dfm(const ad::Var& k_g_map, double force_n, const ModelParams& p, int layer);

struct ForwardResult {
  ad::Var f11, f12, f21, f22, f23, f31, f32;
  std::array<ad::Var, 3> stiffness_raw;      // extractor output per layer
  std::array<ad::Var, 3> stiffness_updated;  // after the patient-specific update
};

/// Coarse-to-fine pass: quarter-resolution quadratic layer, then two residual
/// linear layers on the half- and full-resolution image warped by the running
/// field. Image dimensions must be divisible by 16.
ForwardResult forward(const Image& image, double force_n, double k_g_n, const ModelParams& p);

/// Normalizes k_g against the stored population, predicts the field and
/// returns warp(image, f32). `flow_out` receives the field when non-null.
Image correct(const Image& image, double force_n, double k_g, const ModelParams& p, FlowField* flow_out = nullptr);

// Predicted full-resolution correction field (no gradient tracking needed by callers).
FlowField predict_flow(const Image& image, double force_n, double k_g, const ModelParams& p);

}  // namespace defcor
