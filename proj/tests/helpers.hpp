#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <numbers>
#include <vector>

#include <unistd.h>

#include "defcor/autograd.hpp"
#include "defcor/field.hpp"
#include "defcor/image.hpp"

namespace testutil {

using defcor::FlowField;
using defcor::Image;
using defcor::Plane;

inline Image random_image(int w, int h, std::uint64_t seed, double blur = 0.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, 255);
  Plane p(w, h);
  for (auto& v : p.data) v = u(rng);
  if (blur > 0) {
    p = defcor::gaussian_blur(p, blur);
    double lo = 1e300, hi = -1e300;
    for (double v : p.data) lo = std::min(lo, v), hi = std::max(hi, v);
    for (auto& v : p.data) v = (v - lo) / (hi - lo) * 255.0;
  }
  return Image(p);
}

// Sum of a few low-frequency sinusoids with peak amplitude about `amp` px.
inline FlowField smooth_field(int w, int h, double amp, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, 1);
  FlowField f(w, h);
  for (Plane* c : {&f.dx, &f.dy}) {
    for (int k = 0; k < 3; ++k) {
      const double ax = (u(rng) * 2 - 1) * amp / 3, fx = u(rng) * 2 * std::numbers::pi / w, fy = u(rng) * 2 * std::numbers::pi / h,
                   ph = u(rng) * 2 * std::numbers::pi;
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) c->at(x, y) += ax * std::sin(fx * x + fy * y + ph);
    }
  }
  return f;
}

inline defcor::ad::Tensor random_tensor(std::vector<int> shape, std::uint64_t seed, double lo = -1, double hi = 1) {
  defcor::ad::Tensor t(std::move(shape));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& v : t.data) v = u(rng);
  return t;
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("defcor_test_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline double mean_abs_diff(const Plane& a, const Plane& b) {
  double acc = 0;
  for (size_t i = 0; i < a.size(); ++i) acc += std::abs(a.data[i] - b.data[i]);
  return acc / static_cast<double>(a.size());
}

struct GradCheck {
  double max_rel_error = 0;
  int checked = 0;
  int refined = 0;  // partials whose step had to shrink because the window straddled a kink
};

/// Compares the analytic gradient of `loss` with respect to every leaf in
/// `leaves` against float64 central differences. Relative error uses the
/// denominator max(|analytic|, |numeric|, 1e-6). When the forward and backward
/// one-sided slopes disagree, the window [x-h, x+h] contains a kink of a
/// piecewise-linear op and the step shrinks tenfold, down to 1e-7.
inline GradCheck check_gradients(const std::function<defcor::ad::Var()>& loss, std::vector<defcor::ad::Var> leaves,
                                 double h = 1e-5, size_t max_per_leaf = 64) {
  using namespace defcor::ad;
  for (auto& l : leaves) l.zero_grad();
  backward(loss());
  GradCheck res;
  for (auto& l : leaves) {
    const Tensor analytic = l.grad();
    auto& val = l.mutable_value();
    const size_t n = val.numel();
    const size_t stride = std::max<size_t>(1, n / max_per_leaf);
    for (size_t i = 0; i < n; i += stride) {
      const double orig = val.data[i];
      auto eval_at = [&](double x) {
        NoGradGuard ng;
        val.data[i] = x;
        const double v = loss().item();
        val.data[i] = orig;
        return v;
      };
      const double center = eval_at(orig);
      double numeric = 0;
      for (double step = h;; step /= 10) {
        const double plus = eval_at(orig + step), minus = eval_at(orig - step);
        numeric = (plus - minus) / (2 * step);
        const double fwd = (plus - center) / step, bwd = (center - minus) / step;
        // One-sided slopes carry roundoff of about 1e-15 * |loss| / step.
        const double noise = 1e-13 * std::max(std::abs(center), 1.0) / step;
        const bool kink = std::abs(fwd - bwd) > std::max(1e-3 * std::max(std::abs(fwd), std::abs(bwd)), noise);
        if (!kink || step <= 1e-7) break;
        if (step == h) ++res.refined;
      }
      const double denom = std::max({std::abs(analytic.data[i]), std::abs(numeric), 1e-6});
      res.max_rel_error = std::max(res.max_rel_error, std::abs(analytic.data[i] - numeric) / denom);
      ++res.checked;
    }
  }
  return res;
}

}  // namespace testutil
