#include <doctest.h>

#include <array>
#include <cmath>
#include <fstream>
#include <numbers>

#include "defcor/error.hpp"
#include "defcor/field.hpp"
#include "helpers.hpp"

using namespace defcor;

namespace {

FlowField constant_field(int w, int h, double dx, double dy) {
  FlowField f(w, h);
  for (auto& v : f.dx.data) v = dx;
  for (auto& v : f.dy.data) v = dy;
  return f;
}

bool planes_equal(const Plane& a, const Plane& b) { return a.same_shape(b) && a.data == b.data; }

// Independent rebuild of the Middlebury wheel for the full-saturation colour of one direction.
std::array<int, 3> wheel_oracle(double dx, double dy) {
  std::vector<std::array<double, 3>> w;
  const int seg[6] = {15, 6, 4, 11, 13, 6};
  for (int i = 0; i < seg[0]; ++i) w.push_back({255, std::floor(255.0 * i / seg[0]), 0});
  for (int i = 0; i < seg[1]; ++i) w.push_back({255 - std::floor(255.0 * i / seg[1]), 255, 0});
  for (int i = 0; i < seg[2]; ++i) w.push_back({0, 255, std::floor(255.0 * i / seg[2])});
  for (int i = 0; i < seg[3]; ++i) w.push_back({0, 255 - std::floor(255.0 * i / seg[3]), 255});
  for (int i = 0; i < seg[4]; ++i) w.push_back({std::floor(255.0 * i / seg[4]), 0, 255});
  for (int i = 0; i < seg[5]; ++i) w.push_back({255, 0, 255 - std::floor(255.0 * i / seg[5])});
  const int n = static_cast<int>(w.size());
  const double fk = (std::atan2(-dy, -dx) / std::numbers::pi + 1) / 2 * (n - 1);
  const int k0 = static_cast<int>(fk), k1 = (k0 + 1) % n;
  const double t = fk - k0;
  std::array<int, 3> out{};
  for (int c = 0; c < 3; ++c) out[c] = static_cast<int>(std::lround((1 - t) * w[k0][c] + t * w[k1][c]));
  return out;
}

}  // namespace

TEST_CASE("warp with zero flow is the exact identity") {
  const auto img = testutil::random_image(17, 13, 1);
  const auto out = warp(img, FlowField(17, 13));
  CHECK(planes_equal(out.pixels, img.pixels));
}

TEST_CASE("warp interpolates bilinearly between neighbours") {
  Image img(2, 1);
  img.at(0, 0) = 0;
  img.at(1, 0) = 10;
  FlowField f(2, 1);
  f.dx.at(0, 0) = 0.5;
  CHECK(warp(img, f).at(0, 0) == doctest::Approx(5.0).epsilon(1e-15));
}

TEST_CASE("warp rejects mismatched shapes") {
  CHECK_THROWS_AS(warp(Image(4, 4), FlowField(4, 5)), ShapeError);
  CHECK_THROWS_AS(compose_flows(FlowField(4, 4), FlowField(5, 4)), ShapeError);
  CHECK_THROWS_AS(epe(FlowField(4, 4), FlowField(5, 4)), ShapeError);
}

TEST_CASE("constant integer flow shifts the interior exactly") {
  const auto img = testutil::random_image(20, 16, 2);
  const auto out = warp(img, constant_field(20, 16, 3, -2));
  for (int y = 2; y < 16; ++y)
    for (int x = 0; x < 17; ++x) CHECK(out.at(x, y) == img.at(x + 3, y - 2));
}

TEST_CASE("out-of-range samples clamp to the border") {
  const auto img = testutil::random_image(8, 8, 3);
  const auto out = warp(img, constant_field(8, 8, 100, -100));
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) CHECK(out.at(x, y) == img.at(7, 0));
}

TEST_CASE("compose_flows identities") {
  const auto f = testutil::smooth_field(16, 16, 2.0, 4);
  const FlowField zero(16, 16);
  CHECK(planes_equal(compose_flows(zero, zero).dx, zero.dx));
  const auto a = compose_flows(zero, f);
  CHECK(planes_equal(a.dx, f.dx));
  CHECK(planes_equal(a.dy, f.dy));
  const auto b = compose_flows(f, zero);
  CHECK(planes_equal(b.dx, f.dx));
  CHECK(planes_equal(b.dy, f.dy));
  const auto c = compose_flows(constant_field(16, 16, 0, 1.5), constant_field(16, 16, 0, -4));
  for (double v : c.dy.data) CHECK(v == doctest::Approx(-2.5));
  for (double v : c.dx.data) CHECK(v == 0.0);
}

TEST_CASE("compose-then-warp matches sequential warps") {
  for (int trial = 0; trial < 10; ++trial) {
    const auto img = testutil::random_image(16, 16, 100 + trial, 3.0);
    const auto f1 = testutil::smooth_field(16, 16, 1.5, 200 + trial);
    const auto f2 = testutil::smooth_field(16, 16, 1.5, 300 + trial);
    const auto seq = warp(warp(img, f2), f1);
    const auto once = warp(img, compose_flows(f1, f2));
    CHECK(testutil::mean_abs_diff(seq.pixels, once.pixels) / 255.0 <= 2.0 / 255.0);
  }
}

TEST_CASE("flow rescaling") {
  const auto up = scale_flow_up(constant_field(5, 4, 1, -2), 2);
  CHECK(up.width() == 10);
  CHECK(up.height() == 8);
  for (size_t i = 0; i < up.dx.size(); ++i) {
    CHECK(up.dx.data[i] == doctest::Approx(2));
    CHECK(up.dy.data[i] == doctest::Approx(-4));
  }
  const auto z = scale_flow_up(FlowField(3, 3), 2);
  for (double v : z.dx.data) CHECK(v == 0.0);
  const auto down = scale_flow_down(constant_field(8, 6, 4, 8), 2);
  CHECK(down.width() == 4);
  for (size_t i = 0; i < down.dx.size(); ++i) {
    CHECK(down.dx.data[i] == doctest::Approx(2));
    CHECK(down.dy.data[i] == doctest::Approx(4));
  }
  CHECK_THROWS_AS(scale_flow_down(FlowField(9, 8), 2), ShapeError);
}

TEST_CASE("linear ramps survive an up/down round trip") {
  FlowField f(12, 9);
  for (int y = 0; y < 9; ++y)
    for (int x = 0; x < 12; ++x) {
      f.dx.at(x, y) = 0.3 * x - 0.7 * y + 1.1;
      f.dy.at(x, y) = -0.2 * x + 0.45 * y;
    }
  const auto back = scale_flow_down(scale_flow_up(f, 2), 2);
  for (int y = 1; y < 8; ++y)
    for (int x = 1; x < 11; ++x) {
      CHECK(std::abs(back.dx.at(x, y) - f.dx.at(x, y)) <= 1e-6);
      CHECK(std::abs(back.dy.at(x, y) - f.dy.at(x, y)) <= 1e-6);
    }
}

TEST_CASE("resize keeps corner pixels") {
  const auto img = testutil::random_image(9, 7, 5);
  const auto r = resize(img.pixels, 17, 13);
  CHECK(r.at(0, 0) == doctest::Approx(img.at(0, 0)));
  CHECK(r.at(16, 12) == doctest::Approx(img.at(8, 6)));
  CHECK(r.at(16, 0) == doctest::Approx(img.at(8, 0)));
}

TEST_CASE("endpoint error") {
  const auto gt = testutil::smooth_field(10, 10, 3.0, 6);
  const auto same = epe(gt, gt);
  CHECK(same.stats.mean == 0.0);
  CHECK(same.stats.max == 0.0);
  const auto shifted = add(gt, constant_field(10, 10, 3, 4));
  const auto r = epe(shifted, gt);
  for (double v : r.map.data) CHECK(v == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(r.stats.mean == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(r.stats.per10 == 0.0);

  const auto a = testutil::smooth_field(10, 10, 30.0, 7);
  const auto ab = epe(a, gt), ba = epe(gt, a);
  CHECK(ab.map.data == ba.map.data);
  CHECK(ab.stats.per10 >= ab.stats.per15);
  CHECK(ab.stats.per15 >= ab.stats.per20);
  CHECK(ab.stats.mean <= ab.stats.max);
}

TEST_CASE("flow colour coding") {
  const auto white = flow_to_color(FlowField(6, 5));
  for (const auto& c : white.data) CHECK(c == Rgb{255, 255, 255});

  const auto right = flow_to_color(constant_field(6, 5, 2, 0));
  for (const auto& c : right.data) CHECK(c == right.data.front());

  // Full-saturation colours match an independently built wheel.
  for (double ang = 0; ang < 2 * std::numbers::pi; ang += 0.37) {
    const double dx = std::cos(ang), dy = std::sin(ang);
    const auto c = flow_to_color(constant_field(1, 1, dx, dy), 1.0).data[0];
    const auto o = wheel_oracle(dx, dy);
    CHECK(std::abs(c.r - o[0]) <= 1);
    CHECK(std::abs(c.g - o[1]) <= 1);
    CHECK(std::abs(c.b - o[2]) <= 1);
  }

  // Opposite vectors sit half a turn apart on the wheel.
  const auto f = testutil::smooth_field(8, 8, 3.0, 8);
  const double half = (color_wheel_size() - 1) / 2.0;
  for (size_t i = 0; i < f.dx.size(); ++i) {
    const double p = color_wheel_position(f.dx.data[i], f.dy.data[i]);
    const double q = color_wheel_position(-f.dx.data[i], -f.dy.data[i]);
    CHECK(std::abs(std::abs(p - q) - half) <= 1e-9);
  }
}

TEST_CASE("normalized cross-correlation") {
  const auto a = testutil::random_image(12, 10, 9);
  CHECK(ncc(a, a) == doctest::Approx(1.0).epsilon(1e-12));
  Image inv(12, 10);
  for (size_t i = 0; i < inv.pixels.size(); ++i) inv.pixels.data[i] = 255 - a.pixels.data[i];
  CHECK(ncc(a, inv) == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK_THROWS_AS(ncc(a, Image(12, 10, 7.0)), DegenerateError);
}

TEST_CASE("fixed-point inverse and point transport") {
  const auto f = testutil::smooth_field(32, 32, 3.0, 10);
  const auto inv = invert_flow(f);
  for (int y = 4; y < 28; ++y)
    for (int x = 4; x < 28; ++x) {
      const double qx = x + inv.dx.at(x, y), qy = y + inv.dy.at(x, y);
      CHECK(std::hypot(qx + sample_bilinear(f.dx, qx, qy) - x, qy + sample_bilinear(f.dy, qx, qy) - y) <= 0.05);
    }
  const auto [px, py] = pull_point(f, 15.3, 12.7);
  CHECK(px + sample_bilinear(f.dx, px, py) == doctest::Approx(15.3).epsilon(1e-6));
  CHECK(py + sample_bilinear(f.dy, px, py) == doctest::Approx(12.7).epsilon(1e-6));
  const auto [zx, zy] = pull_point(FlowField(8, 8), 3.25, 4.5);
  CHECK(zx == 3.25);
  CHECK(zy == 4.5);
}

TEST_CASE("gaussian blur preserves constants") {
  const auto b = gaussian_blur(Plane(9, 9, 42.0), 2.0);
  for (double v : b.data) CHECK(v == doctest::Approx(42.0));
}

TEST_CASE("binary formats round-trip bit-exactly") {
  const auto dir = testutil::temp_dir("io");
  auto img = quantize(testutil::random_image(31, 17, 11));
  write_pgm(dir / "a.pgm", img);
  const auto back = read_pgm(dir / "a.pgm");
  CHECK(back.pixels.data == img.pixels.data);

  FlowField f = testutil::smooth_field(13, 7, 5.0, 12);
  for (auto* c : {&f.dx, &f.dy})
    for (auto& v : c->data) v = static_cast<float>(v);
  write_dff(dir / "f.dff", f);
  const auto fb = read_dff(dir / "f.dff");
  CHECK(fb.dx.data == f.dx.data);
  CHECK(fb.dy.data == f.dy.data);

  const auto rgb = flow_to_color(f);
  write_ppm(dir / "c.ppm", rgb);
  CHECK(read_ppm(dir / "c.ppm").data == rgb.data);

  std::ofstream(dir / "bad.dff") << "DFF2xxxxxxxx";
  CHECK_THROWS_AS(read_dff(dir / "bad.dff"), FormatError);
  std::filesystem::remove_all(dir);
}
