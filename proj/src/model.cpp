#include "defcor/model.hpp"

#include <cmath>
#include <random>

#include "defcor/error.hpp"
#include "defcor/field.hpp"
#include "defcor/layers.hpp"

namespace defcor {
namespace {

double to_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

std::string layer_key(const char* prefix, int layer) { return std::string(prefix) + std::to_string(layer); }

ad::Var conv_block(const ad::Var& x, const ModelParams& p, const std::string& name, double slope) {
  auto y = ad::leaky_relu(ad::conv2d(x, p.at(name + ".conv1.weight"), p.at(name + ".conv1.bias")), slope);
  return ad::leaky_relu(ad::conv2d(y, p.at(name + ".conv2.weight"), p.at(name + ".conv2.bias")), slope);
}


}  // namespace

void ModelParams::add(std::string name, ad::Tensor value) {
  for (auto& v : value.data) v = to_f32(v);
  if (index_.count(name)) throw ConfigError("duplicate parameter " + name);
  index_[name] = params_.size();
  params_.push_back({std::move(name), ad::Var::parameter(std::move(value))});
}

const ad::Var& ModelParams::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter " + name);
  return params_[it->second].var;
}

ad::Var& ModelParams::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter " + name);
  return params_[it->second].var;
}

size_t ModelParams::parameter_count() const {
  size_t n = 0;
  for (const auto& p : params_) n += p.var.numel();
  return n;
}

void ModelParams::zero_grad() {
  for (auto& p : params_) p.var.zero_grad();
}

ModelParams ModelParams::clone() const {
  ModelParams c;
  c.config = config;
  c.population = population;
  for (const auto& p : params_) c.add(p.name, p.var.value());
  return c;
}

ModelParams ModelParams::initialize(const ModelConfig& cfg, std::uint64_t seed) {
  if (cfg.first_layer_order != 1 && cfg.first_layer_order != 2) throw ConfigError("first_layer_order must be 1 or 2");
  for (int w : cfg.widths)
    if (w < 1) throw ConfigError("channel widths must be positive");

  ModelParams p;
  p.config = cfg;
  std::mt19937_64 rng(seed);
  auto conv = [&](const std::string& name, int cin, int cout, int k) {
    const double bound = std::sqrt(6.0 / (cin * k * k));  // He-uniform
    std::uniform_real_distribution<double> dist(-bound, bound);
    ad::Tensor w({cout, cin, k, k});
    for (auto& v : w.data) v = dist(rng);
    p.add(name + ".weight", std::move(w));
    p.add(name + ".bias", ad::Tensor({cout}, 0.0));
  };
  const auto [w1, w2, w3] = cfg.widths;
  conv("ushape.enc1.conv1", 1, w1, 3);
  conv("ushape.enc1.conv2", w1, w1, 3);
  conv("ushape.enc2.conv1", w1, w2, 3);
  conv("ushape.enc2.conv2", w2, w2, 3);
  conv("ushape.enc3.conv1", w2, w3, 3);
  conv("ushape.enc3.conv2", w3, w3, 3);
  conv("ushape.dec2.conv1", w3 + w2, w2, 3);
  conv("ushape.dec2.conv2", w2, w2, 3);
  conv("ushape.dec1.conv1", w2 + w1, w1, 3);
  conv("ushape.dec1.conv2", w1, w1, 3);
  conv("ushape.head", w1, 1, 1);

  for (int layer = 1; layer <= 3; ++layer) {
    const auto u = layer_key("update", layer);
    p.add(u + ".c1", ad::Tensor::scalar(1.0));
    p.add(u + ".c2", ad::Tensor::scalar(0.1));
    p.add(u + ".c3", ad::Tensor::scalar(0.0));
    const int order = layer == 1 ? cfg.first_layer_order : 1;
    p.add(layer_key("dfm", layer) + ".coeffs", ad::Tensor({2, order + 1}, 0.0));
  }
  return p;
}

ad::Tensor image_tensor(const Image& img) {
  ad::Tensor t({1, img.height(), img.width()});
  for (size_t i = 0; i < t.data.size(); ++i) t.data[i] = img.pixels.data[i] / 255.0;
  return t;
}

ad::Tensor flow_tensor(const FlowField& f) {
  const size_t hw = f.dx.size();
  ad::Tensor t({2, f.height(), f.width()});
  std::copy(f.dx.data.begin(), f.dx.data.end(), t.data.begin());
  std::copy(f.dy.data.begin(), f.dy.data.end(), t.data.begin() + static_cast<std::ptrdiff_t>(hw));
  return t;
}

FlowField tensor_to_flow(const ad::Tensor& t) {
  if (t.shape.size() != 3 || t.shape[0] != 2) throw ShapeError("tensor_to_flow: expected {2,H,W}, got " + t.shape_str());
  FlowField f(t.shape[2], t.shape[1]);
  const size_t hw = f.dx.size();
  std::copy(t.data.begin(), t.data.begin() + static_cast<std::ptrdiff_t>(hw), f.dx.data.begin());
  std::copy(t.data.begin() + static_cast<std::ptrdiff_t>(hw), t.data.end(), f.dy.data.begin());
  return f;
}

ad::Var stiffness_map(const ad::Var& x, const ModelParams& p) {
  const auto& s = x.shape();
  if (s.size() != 3 || s[0] != 1) throw ShapeError("stiffness_map: expected {1,H,W}, got " + x.value().shape_str());
  if (s[1] % 4 != 0 || s[2] % 4 != 0)
    throw ShapeError("stiffness_map: height and width must be divisible by 4, got " + x.value().shape_str());
  const double slope = p.config.leaky_slope;
  auto e1 = conv_block(x, p, "ushape.enc1", slope);
  auto e2 = conv_block(ad::downsample2x(e1), p, "ushape.enc2", slope);
  auto e3 = conv_block(ad::downsample2x(e2), p, "ushape.enc3", slope);
  auto d2 = conv_block(ad::concat(ad::upsample2x(e3), e2), p, "ushape.dec2", slope);
  auto d1 = conv_block(ad::concat(ad::upsample2x(d2), e1), p, "ushape.dec1", slope);
  auto head = ad::conv2d(d1, p.at("ushape.head.weight"), p.at("ushape.head.bias"));
  return ad::leaky_relu(head, slope);
}

ad::Var stiffness_update(const ad::Var& k_us, double k_g_n, const ModelParams& p, int layer) {
  const auto u = layer_key("update", layer);
  // c2 * k_g_n + c3 as a differentiable scalar.
  auto bias = ad::affine(p.at(u + ".c2"), ad::Var::constant(ad::Tensor::scalar(k_g_n)), p.at(u + ".c3"));
  return ad::leaky_relu(ad::affine(k_us, p.at(u + ".c1"), bias), p.config.leaky_slope);
}

ad::Var dfm(const ad::Var& k_g_map, double force_n, const ModelParams& p, int layer) {
  return ad::polynomial_field(k_g_map, p.at(layer_key("dfm", layer) + ".coeffs"), force_n);
}

ForwardResult forward(const Image& image, double force_n, double k_g_n, const ModelParams& p) {
  const int w = image.width(), h = image.height();
  if (w % 16 != 0 || h % 16 != 0)
    throw ShapeError("forward: image dimensions must be divisible by 16, got " + std::to_string(w) + "x" +
                     std::to_string(h));
  const auto full = ad::Var::constant(image_tensor(image));
  const auto half = ad::Var::constant(image_tensor(resize(image, w / 2, h / 2)));
  const auto quarter = ad::Var::constant(image_tensor(resize(image, w / 4, h / 4)));

  ForwardResult r;
  auto run_layer = [&](const ad::Var& input, int layer) {
    r.stiffness_raw[layer - 1] = stiffness_map(input, p);
    r.stiffness_updated[layer - 1] = stiffness_update(r.stiffness_raw[layer - 1], k_g_n, p, layer);
    return dfm(r.stiffness_updated[layer - 1], force_n, p, layer);
  };

  r.f11 = run_layer(quarter, 1);
  r.f12 = ad::scale(ad::resize_bilinear(r.f11, h / 2, w / 2), 2.0);
  r.f21 = run_layer(ad::warp(half, r.f12), 2);
  r.f22 = ad::add(r.f12, r.f21);
  r.f23 = ad::scale(ad::resize_bilinear(r.f22, h, w), 2.0);
  r.f31 = run_layer(ad::warp(full, r.f23), 3);
  r.f32 = ad::add(r.f23, r.f31);
  return r;
}

FlowField predict_flow(const Image& image, double force_n, double k_g, const ModelParams& p) {
  if (!p.population) throw ConfigError("model has no stiffness population; cannot normalize k_g");
  ad::NoGradGuard no_grad;
  return tensor_to_flow(forward(image, force_n, zscore(k_g, *p.population), p).f32.value());
}

Image correct(const Image& image, double force_n, double k_g, const ModelParams& p, FlowField* flow_out) {
  auto flow = predict_flow(image, force_n, k_g, p);
  Image out = warp(image, flow);
  if (flow_out) *flow_out = std::move(flow);
  return out;
}

}  // namespace defcor
