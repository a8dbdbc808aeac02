#include "defcor/layers.hpp"

#include <Eigen/Core>
#include <array>
#include <cmath>

#include "defcor/error.hpp"
#include "defcor/field.hpp"

namespace defcor::ad {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

void require_chw(const Var& x, const char* op) {
  if (x.shape().size() != 3) throw ShapeError(std::string(op) + ": expected {C,H,W}, got " + x.value().shape_str());
}

void require_same(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + a.value().shape_str() + " vs " + b.value().shape_str());
}

// Tensor of a node's gradient to accumulate into, or nullptr if the node needs none.
Tensor* grad_target(const std::shared_ptr<Node>& n) { return n->requires_grad ? &n->grad_buffer() : nullptr; }

// col: (cin*k*k) x (h*w)
void im2col(const double* x, int cin, int h, int w, int k, double* col) {
  const int pad = k / 2;
  const int hw = h * w;
  for (int c = 0; c < cin; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        double* row = col + static_cast<size_t>((c * k + ky) * k + kx) * hw;
        const double* plane = x + static_cast<size_t>(c) * hw;
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - pad;
          double* out = row + y * w;
          if (sy < 0 || sy >= h) {
            std::fill(out, out + w, 0.0);
            continue;
          }
          const double* src = plane + sy * w;
          for (int xx = 0; xx < w; ++xx) {
            const int sx = xx + kx - pad;
            out[xx] = (sx >= 0 && sx < w) ? src[sx] : 0.0;
          }
        }
      }
    }
  }
}

void col2im_add(const double* col, int cin, int h, int w, int k, double* x) {
  const int pad = k / 2;
  const int hw = h * w;
  for (int c = 0; c < cin; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const double* row = col + static_cast<size_t>((c * k + ky) * k + kx) * hw;
        double* plane = x + static_cast<size_t>(c) * hw;
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - pad;
          if (sy < 0 || sy >= h) continue;
          double* dst = plane + sy * w;
          const double* in = row + y * w;
          for (int xx = 0; xx < w; ++xx) {
            const int sx = xx + kx - pad;
            if (sx >= 0 && sx < w) dst[sx] += in[xx];
          }
        }
      }
    }
  }
}

}  // namespace

Var conv2d(const Var& x, const Var& weight, const Var& bias) {
  require_chw(x, "conv2d");
  const auto& ws = weight.shape();
  if (ws.size() != 4 || ws[2] != ws[3] || ws[2] % 2 == 0) throw ShapeError("conv2d: weight must be {Cout,Cin,k,k}, odd k");
  const int cout = ws[0], cin = ws[1], k = ws[2];
  const int h = x.shape()[1], w = x.shape()[2];
  if (x.shape()[0] != cin) throw ShapeError("conv2d: input has " + std::to_string(x.shape()[0]) + " channels, weight expects " + std::to_string(cin));
  if (bias.shape() != std::vector<int>{cout}) throw ShapeError("conv2d: bias must be {Cout}");

  const int rows = cin * k * k;
  const int hw = h * w;
  auto col = std::make_shared<std::vector<double>>(static_cast<size_t>(rows) * hw);
  im2col(x.value().data.data(), cin, h, w, k, col->data());

  Tensor out({cout, h, w});
  MatMap o(out.data.data(), cout, hw);
  ConstMatMap wm(weight.value().data.data(), cout, rows);
  ConstMatMap cm(col->data(), rows, hw);
  o.noalias() = wm * cm;
  for (int c = 0; c < cout; ++c) o.row(c).array() += bias.value().data[c];

  const Var in[] = {x, weight, bias};
  return make_result(std::move(out), in, [=](Node& self) -> BackwardFn {
    auto xn = self.inputs[0], wn = self.inputs[1], bn = self.inputs[2];
    return [=](const Tensor& g) {
      ConstMatMap gm(g.data.data(), cout, hw);
      if (auto* gw = grad_target(wn)) {
        MatMap(gw->data.data(), cout, rows).noalias() += gm * ConstMatMap(col->data(), rows, hw).transpose();
      }
      if (auto* gb = grad_target(bn)) {
        for (int c = 0; c < cout; ++c) gb->data[c] += gm.row(c).sum();
      }
      if (auto* gx = grad_target(xn)) {
        RowMatrix dcol = ConstMatMap(wn->value.data.data(), cout, rows).transpose() * gm;
        col2im_add(dcol.data(), cin, h, w, k, gx->data.data());
      }
    };
  });
}

Var leaky_relu(const Var& x, double slope) {
  Tensor out = x.value();
  for (auto& v : out.data) v = v >= 0 ? v : slope * v;
  const Var in[] = {x};
  return make_result(std::move(out), in, [slope](Node& self) -> BackwardFn {
    auto xn = self.inputs[0];
    return [xn, slope](const Tensor& g) {
      auto& gx = xn->grad_buffer();
      const auto& xv = xn->value.data;
      for (size_t i = 0; i < g.data.size(); ++i) gx.data[i] += xv[i] >= 0 ? g.data[i] : slope * g.data[i];
    };
  });
}

Var downsample2x(const Var& x) {
  require_chw(x, "downsample2x");
  const int c = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
  if (h % 2 || w % 2) throw ShapeError("downsample2x: dimensions must be even, got " + x.value().shape_str());
  const int oh = h / 2, ow = w / 2;
  Tensor out({c, oh, ow});
  auto argmax = std::make_shared<std::vector<size_t>>(out.numel());
  const auto& xv = x.value().data;
  for (int ch = 0; ch < c; ++ch) {
    for (int y = 0; y < oh; ++y) {
      for (int xx = 0; xx < ow; ++xx) {
        size_t best = (static_cast<size_t>(ch) * h + 2 * y) * w + 2 * xx;
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            const size_t i = (static_cast<size_t>(ch) * h + 2 * y + dy) * w + 2 * xx + dx;
            if (xv[i] > xv[best]) best = i;
          }
        const size_t o = (static_cast<size_t>(ch) * oh + y) * ow + xx;
        out.data[o] = xv[best];
        (*argmax)[o] = best;
      }
    }
  }
  const Var in[] = {x};
  return make_result(std::move(out), in, [argmax](Node& self) -> BackwardFn {
    auto xn = self.inputs[0];
    return [xn, argmax](const Tensor& g) {
      auto& gx = xn->grad_buffer();
      for (size_t i = 0; i < g.data.size(); ++i) gx.data[(*argmax)[i]] += g.data[i];
    };
  });
}

Var upsample2x(const Var& x) {
  require_chw(x, "upsample2x");
  const int c = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
  Tensor out({c, 2 * h, 2 * w});
  const auto& xv = x.value().data;
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < 2 * h; ++y)
      for (int xx = 0; xx < 2 * w; ++xx)
        out.data[(static_cast<size_t>(ch) * 2 * h + y) * 2 * w + xx] = xv[(static_cast<size_t>(ch) * h + y / 2) * w + xx / 2];
  const Var in[] = {x};
  return make_result(std::move(out), in, [c, h, w](Node& self) -> BackwardFn {
    auto xn = self.inputs[0];
    return [xn, c, h, w](const Tensor& g) {
      auto& gx = xn->grad_buffer();
      for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < 2 * h; ++y)
          for (int xx = 0; xx < 2 * w; ++xx)
            gx.data[(static_cast<size_t>(ch) * h + y / 2) * w + xx / 2] += g.data[(static_cast<size_t>(ch) * 2 * h + y) * 2 * w + xx];
    };
  });
}

Var concat(const Var& a, const Var& b) {
  require_chw(a, "concat");
  require_chw(b, "concat");
  if (a.shape()[1] != b.shape()[1] || a.shape()[2] != b.shape()[2])
    throw ShapeError("concat: spatial mismatch " + a.value().shape_str() + " vs " + b.value().shape_str());
  Tensor out({a.shape()[0] + b.shape()[0], a.shape()[1], a.shape()[2]});
  std::copy(a.value().data.begin(), a.value().data.end(), out.data.begin());
  std::copy(b.value().data.begin(), b.value().data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(a.numel()));
  const size_t na = a.numel();
  const Var in[] = {a, b};
  return make_result(std::move(out), in, [na](Node& self) -> BackwardFn {
    auto an = self.inputs[0], bn = self.inputs[1];
    return [an, bn, na](const Tensor& g) {
      if (auto* ga = grad_target(an))
        for (size_t i = 0; i < na; ++i) ga->data[i] += g.data[i];
      if (auto* gb = grad_target(bn))
        for (size_t i = 0; i < gb->data.size(); ++i) gb->data[i] += g.data[na + i];
    };
  });
}

Var add(const Var& a, const Var& b) {
  require_same(a, b, "add");
  Tensor out = a.value();
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.value().data[i];
  const Var in[] = {a, b};
  return make_result(std::move(out), in, [](Node& self) -> BackwardFn {
    auto an = self.inputs[0], bn = self.inputs[1];
    return [an, bn](const Tensor& g) {
      for (auto* t : {grad_target(an), grad_target(bn)})
        if (t)
          for (size_t i = 0; i < g.data.size(); ++i) t->data[i] += g.data[i];
    };
  });
}

Var scale(const Var& x, double s) {
  Tensor out = x.value();
  for (auto& v : out.data) v *= s;
  const Var in[] = {x};
  return make_result(std::move(out), in, [s](Node& self) -> BackwardFn {
    auto xn = self.inputs[0];
    return [xn, s](const Tensor& g) {
      auto& gx = xn->grad_buffer();
      for (size_t i = 0; i < g.data.size(); ++i) gx.data[i] += s * g.data[i];
    };
  });
}

Var affine(const Var& x, const Var& s, const Var& b) {
  if (s.numel() != 1 || b.numel() != 1) throw ShapeError("affine: gain and bias must be single-element");
  const double sv = s.value().data[0], bv = b.value().data[0];
  Tensor out = x.value();
  for (auto& v : out.data) v = sv * v + bv;
  const Var in[] = {x, s, b};
  return make_result(std::move(out), in, [](Node& self) -> BackwardFn {
    auto xn = self.inputs[0], sn = self.inputs[1], bn = self.inputs[2];
    return [xn, sn, bn](const Tensor& g) {
      const double sv = sn->value.data[0];
      double gs = 0, gb = 0;
      for (size_t i = 0; i < g.data.size(); ++i) {
        gs += g.data[i] * xn->value.data[i];
        gb += g.data[i];
      }
      if (auto* gx = grad_target(xn))
        for (size_t i = 0; i < g.data.size(); ++i) gx->data[i] += sv * g.data[i];
      if (auto* t = grad_target(sn)) t->data[0] += gs;
      if (auto* t = grad_target(bn)) t->data[0] += gb;
    };
  });
}

Var sum(const Var& x) {
  double s = 0;
  for (double v : x.value().data) s += v;
  const Var in[] = {x};
  return make_result(Tensor::scalar(s), in, [](Node& self) -> BackwardFn {
    auto xn = self.inputs[0];
    return [xn](const Tensor& g) {
      auto& gx = xn->grad_buffer();
      for (auto& v : gx.data) v += g.data[0];
    };
  });
}

Var mean(const Var& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Var resize_bilinear(const Var& x, int height, int width) {
  require_chw(x, "resize_bilinear");
  if (height < 1 || width < 1) throw ShapeError("resize_bilinear: target must be positive");
  const int c = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
  const double sx = width > 1 ? static_cast<double>(w - 1) / (width - 1) : 0.0;
  const double sy = height > 1 ? static_cast<double>(h - 1) / (height - 1) : 0.0;
  auto taps = std::make_shared<std::vector<BilinearTap>>(static_cast<size_t>(height) * width);
  for (int y = 0; y < height; ++y)
    for (int xx = 0; xx < width; ++xx) (*taps)[static_cast<size_t>(y) * width + xx] = bilinear_tap(w, h, xx * sx, y * sy);

  Tensor out({c, height, width});
  const auto& xv = x.value().data;
  for (int ch = 0; ch < c; ++ch) {
    const double* p = xv.data() + static_cast<size_t>(ch) * h * w;
    double* o = out.data.data() + static_cast<size_t>(ch) * height * width;
    for (size_t i = 0; i < taps->size(); ++i) {
      const auto& t = (*taps)[i];
      o[i] = t.w00() * p[t.y0 * w + t.x0] + t.w10() * p[t.y0 * w + t.x1] + t.w01() * p[t.y1 * w + t.x0] +
             t.w11() * p[t.y1 * w + t.x1];
    }
  }
  const Var in[] = {x};
  return make_result(std::move(out), in, [=](Node& self) -> BackwardFn {
    auto xn = self.inputs[0];
    return [=](const Tensor& g) {
      auto& gx = xn->grad_buffer();
      for (int ch = 0; ch < c; ++ch) {
        double* p = gx.data.data() + static_cast<size_t>(ch) * h * w;
        const double* go = g.data.data() + static_cast<size_t>(ch) * height * width;
        for (size_t i = 0; i < taps->size(); ++i) {
          const auto& t = (*taps)[i];
          p[t.y0 * w + t.x0] += t.w00() * go[i];
          p[t.y0 * w + t.x1] += t.w10() * go[i];
          p[t.y1 * w + t.x0] += t.w01() * go[i];
          p[t.y1 * w + t.x1] += t.w11() * go[i];
        }
      }
    };
  });
}

Var warp(const Var& x, const Var& flow) {
  require_chw(x, "warp");
  require_chw(flow, "warp");
  const int c = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
  if (flow.shape() != std::vector<int>{2, h, w})
    throw ShapeError("warp: flow " + flow.value().shape_str() + " does not match input " + x.value().shape_str());
  const size_t hw = static_cast<size_t>(h) * w;
  auto taps = std::make_shared<std::vector<BilinearTap>>(hw);
  const auto& fv = flow.value().data;
  for (int y = 0; y < h; ++y)
    for (int xx = 0; xx < w; ++xx) {
      const size_t i = static_cast<size_t>(y) * w + xx;
      (*taps)[i] = bilinear_tap(w, h, xx + fv[i], y + fv[hw + i]);
    }

  Tensor out({c, h, w});
  const auto& xv = x.value().data;
  for (int ch = 0; ch < c; ++ch) {
    const double* p = xv.data() + ch * hw;
    double* o = out.data.data() + ch * hw;
    for (size_t i = 0; i < hw; ++i) {
      const auto& t = (*taps)[i];
      o[i] = (t.fx == 0.0 && t.fy == 0.0)
                 ? p[t.y0 * w + t.x0]
                 : t.w00() * p[t.y0 * w + t.x0] + t.w10() * p[t.y0 * w + t.x1] + t.w01() * p[t.y1 * w + t.x0] +
                       t.w11() * p[t.y1 * w + t.x1];
    }
  }
  const Var in[] = {x, flow};
  return make_result(std::move(out), in, [=](Node& self) -> BackwardFn {
    auto xn = self.inputs[0], fn = self.inputs[1];
    return [=](const Tensor& g) {
      Tensor* gx = grad_target(xn);
      Tensor* gf = grad_target(fn);
      for (int ch = 0; ch < c; ++ch) {
        const double* p = xn->value.data.data() + ch * hw;
        const double* go = g.data.data() + ch * hw;
        for (size_t i = 0; i < hw; ++i) {
          const auto& t = (*taps)[i];
          if (gx) {
            double* q = gx->data.data() + ch * hw;
            q[t.y0 * w + t.x0] += t.w00() * go[i];
            q[t.y0 * w + t.x1] += t.w10() * go[i];
            q[t.y1 * w + t.x0] += t.w01() * go[i];
            q[t.y1 * w + t.x1] += t.w11() * go[i];
          }
          if (gf) {
            const double v00 = p[t.y0 * w + t.x0], v10 = p[t.y0 * w + t.x1];
            const double v01 = p[t.y1 * w + t.x0], v11 = p[t.y1 * w + t.x1];
            if (t.inside_x) gf->data[i] += go[i] * ((1 - t.fy) * (v10 - v00) + t.fy * (v11 - v01));
            if (t.inside_y) gf->data[hw + i] += go[i] * ((1 - t.fx) * (v01 - v00) + t.fx * (v11 - v10));
          }
        }
      }
    };
  });
}

Var polynomial_field(const Var& h, const Var& coeffs, double force) {
  require_chw(h, "polynomial_field");
  if (h.shape()[0] != 1) throw ShapeError("polynomial_field: stiffness map must have one channel");
  if (coeffs.shape().size() != 2 || coeffs.shape()[0] != 2 || coeffs.shape()[1] < 1)
    throw ShapeError("polynomial_field: coefficients must be {2, n}, got " + coeffs.value().shape_str());
  const int n = coeffs.shape()[1];
  const int hh = h.shape()[1], ww = h.shape()[2];
  const size_t hw = static_cast<size_t>(hh) * ww;
  const auto& kv = coeffs.value().data;
  Tensor out({2, hh, ww});
  for (size_t i = 0; i < hw; ++i) {
    const double v = h.value().data[i];
    for (int ch = 0; ch < 2; ++ch) {
      double acc = 0;  // Horner, highest power first
      for (int j = 0; j < n; ++j) acc = acc * v + kv[ch * n + j];
      out.data[ch * hw + i] = force * acc;
    }
  }
  const Var in[] = {h, coeffs};
  return make_result(std::move(out), in, [=](Node& self) -> BackwardFn {
    auto hn = self.inputs[0], kn = self.inputs[1];
    return [=](const Tensor& g) {
      Tensor* gh = grad_target(hn);
      Tensor* gk = grad_target(kn);
      const auto& k = kn->value.data;
      for (size_t i = 0; i < hw; ++i) {
        const double v = hn->value.data[i];
        for (int ch = 0; ch < 2; ++ch) {
          const double go = force * g.data[ch * hw + i];
          if (go == 0) continue;
          if (gk) {
            double pw = 1;
            for (int j = n - 1; j >= 0; --j) {
              gk->data[ch * n + j] += go * pw;
              pw *= v;
            }
          }
          if (gh) {
            double d = 0;  // derivative of the polynomial at v
            for (int j = 0; j < n - 1; ++j) d = d * v + (n - 1 - j) * k[ch * n + j];
            gh->data[i] += go * d;
          }
        }
      }
    };
  });
}

Var l1_flow_mean(const Var& pred, const Tensor& target) {
  if (pred.shape() != target.shape || pred.shape().size() != 3 || pred.shape()[0] != 2)
    throw ShapeError("l1_flow_mean: prediction " + pred.value().shape_str() + " vs target " + target.shape_str());
  const double inv_pixels = 1.0 / static_cast<double>(pred.shape()[1] * pred.shape()[2]);
  double s = 0;
  for (size_t i = 0; i < target.data.size(); ++i) s += std::abs(pred.value().data[i] - target.data[i]);
  const Var in[] = {pred};
  auto tgt = std::make_shared<Tensor>(target);
  return make_result(Tensor::scalar(s * inv_pixels), in, [=](Node& self) -> BackwardFn {
    auto pn = self.inputs[0];
    return [=](const Tensor& g) {
      auto& gp = pn->grad_buffer();
      for (size_t i = 0; i < gp.data.size(); ++i) {
        const double d = pn->value.data[i] - tgt->data[i];
        gp.data[i] += g.data[0] * inv_pixels * (d > 0 ? 1.0 : d < 0 ? -1.0 : 0.0);
      }
    };
  });
}

namespace {

struct SmoothTerm {
  bool along_x;
  int order;
  double norm;  // 1 / (channels * valid positions)
};

// Visits every valid stencil site of a term: fn(flat index, stride, edge weight).
template <typename Fn>
void for_each_site(const SmoothTerm& t, int h, int w, const std::vector<double>& img, const SmoothnessWeights& sw,
                   Fn&& fn) {
  const size_t hw = static_cast<size_t>(h) * w;
  const int step = t.along_x ? 1 : w;
  const int len = t.along_x ? w : h;
  const double lambda = t.along_x ? sw.edge_lambda_x : sw.edge_lambda_y;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int pos = t.along_x ? x : y;
      if (t.order == 1 ? pos + 1 >= len : (pos < 1 || pos + 1 >= len)) continue;
      const size_t i = static_cast<size_t>(y) * w + x;
      // Image derivative taken where the flow derivative lives: half-pixel for
      // first order, central at second-order stencil centres.
      const double gi = t.order == 1 ? img[i + step] - img[i] : 0.5 * (img[i + step] - img[i - step]);
      const double weight = std::exp(-lambda * gi * gi);
      for (int ch = 0; ch < 2; ++ch) fn(ch * hw + i, step, weight);
    }
  }
}

double stencil(const std::vector<double>& f, const SmoothTerm& t, size_t i, int step) {
  return t.order == 1 ? f[i + step] - f[i] : f[i + step] - 2 * f[i] + f[i - step];
}

}  // namespace

Var smoothness(const Var& flow, const Tensor& image, const SmoothnessWeights& sw) {
  require_chw(flow, "smoothness");
  const int h = flow.shape()[1], w = flow.shape()[2];
  if (flow.shape()[0] != 2 || image.shape != std::vector<int>{1, h, w})
    throw ShapeError("smoothness: flow " + flow.value().shape_str() + " vs image " + image.shape_str());
  const double eps2 = sw.epsilon * sw.epsilon;

  std::vector<SmoothTerm> terms;
  for (int order = 1; order <= 2; ++order) {
    const int nx = order == 1 ? (w - 1) : (w - 2);
    const int ny = order == 1 ? (h - 1) : (h - 2);
    if (nx > 0) terms.push_back({true, order, 1.0 / (2.0 * nx * h)});
    if (ny > 0) terms.push_back({false, order, 1.0 / (2.0 * ny * w)});
  }

  const auto& f = flow.value().data;
  double total = 0;
  for (const auto& t : terms) {
    double acc = 0;
    for_each_site(t, h, w, image.data, sw, [&](size_t i, int step, double weight) {
      const double d = stencil(f, t, i, step);
      acc += weight * std::sqrt(d * d + eps2);
    });
    total += acc * t.norm;
  }

  auto img = std::make_shared<std::vector<double>>(image.data);
  const Var in[] = {flow};
  return make_result(Tensor::scalar(total), in, [=](Node& self) -> BackwardFn {
    auto fnode = self.inputs[0];
    return [=](const Tensor& g) {
      auto& gf = fnode->grad_buffer();
      const auto& fv = fnode->value.data;
      for (const auto& t : terms) {
        for_each_site(t, h, w, *img, sw, [&](size_t i, int step, double weight) {
          const double d = stencil(fv, t, i, step);
          const double c = g.data[0] * t.norm * weight * d / std::sqrt(d * d + eps2);
          gf.data[i + step] += c;
          if (t.order == 1) {
            gf.data[i] -= c;
          } else {
            gf.data[i] -= 2 * c;
            gf.data[i - step] += c;
          }
        });
      }
    };
  });
}

}  // namespace defcor::ad
