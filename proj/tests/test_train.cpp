#include <doctest.h>

#include <cmath>
#include <fstream>
#include <set>

#include "defcor/error.hpp"
#include "defcor/layers.hpp"
#include "defcor/loss.hpp"
#include "defcor/optim.hpp"
#include "defcor/train.hpp"
#include "helpers.hpp"

using namespace defcor;

namespace {

ModelConfig small_model() {
  ModelConfig m;
  m.widths = {4, 6, 8};
  return m;
}

std::vector<TrainSample> tiny_samples(int n, int w = 32, int h = 48) {
  std::vector<TrainSample> out;
  for (int i = 0; i < n; ++i) {
    auto spec = random_phantom_spec(w, h, 1.2 + 0.2 * i, 50 + i);
    const auto ph = render_phantom(spec);
    const double force = 2.0 + i;
    auto sim = simulate_compression(spec, ph.image, force);
    out.push_back({"s" + std::to_string(i), quantize(sim.deformed), sim.gt, force, spec.global_stiffness});
  }
  return out;
}

Checkpoint fresh(const TrainConfig& t) {
  Checkpoint c;
  c.params = ModelParams::initialize(t.model, 5);
  c.params.population = StiffnessPopulation{1.4, 0.3, 4};
  c.adam = AdamState{};
  return c;
}

}  // namespace

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
  std::vector<double> x = {1.0, -2.0}, g = {0, 0}, m = {0, 0}, v = {0, 0};
  adam_update(x, g, m, v, 1, {});
  CHECK(x == std::vector<double>{1.0, -2.0});

  auto p = ModelParams::initialize(small_model(), 1);
  const auto before = p.at("ushape.enc1.conv1.weight").value().data;
  p.zero_grad();
  AdamState st;
  adam_step(p, st, {});
  CHECK(st.t == 1);
  CHECK(p.at("ushape.enc1.conv1.weight").value().data == before);
}

TEST_CASE("adam: first step moves by the learning rate") {
  std::vector<double> x = {0.5}, g = {1.0}, m = {0}, v = {0};
  AdamConfig cfg;
  cfg.lr = 1e-3;
  adam_update(x, g, m, v, 1, cfg);
  CHECK(std::abs((0.5 - x[0]) - 1e-3) <= 1e-3 * 1e-7);
  std::vector<double> y = {0.5}, gn = {-4.0}, m2 = {0}, v2 = {0};
  adam_update(y, gn, m2, v2, 1, cfg);
  CHECK(y[0] - 0.5 == doctest::Approx(1e-3).epsilon(1e-6));
  CHECK_THROWS_AS(adam_update(x, std::vector<double>{1, 2}, m, v, 2, cfg), ShapeError);
}

TEST_CASE("adam converges on a 1-D quadratic") {
  std::vector<double> x = {1.0}, m = {0}, v = {0};
  AdamConfig cfg;
  cfg.lr = 1e-2;
  int steps = 0;
  for (; steps < 2000 && std::abs(x[0]) >= 1e-3; ++steps) {
    const std::vector<double> g = {x[0]};
    adam_update(x, g, m, v, steps + 1, cfg);
  }
  CHECK(std::abs(x[0]) < 1e-3);
  CHECK(steps <= 2000);
}

TEST_CASE("multiscale L1") {
  const auto gt = testutil::smooth_field(32, 48, 2.0, 1);
  const auto t = multiscale_targets(gt);
  std::array<ad::Var, 3> preds = {ad::Var::constant(t[0]), ad::Var::constant(t[1]), ad::Var::constant(t[2])};
  CHECK(l1_multiscale(preds, gt).item() == doctest::Approx(0.0).epsilon(1e-15));
  auto shifted = t[1];
  for (size_t i = 0; i < shifted.numel() / 2; ++i) shifted.data[i] += 1.0;
  preds[1] = ad::Var::constant(shifted);
  CHECK(l1_multiscale(preds, gt).item() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(t[0].shape == std::vector<int>{2, 12, 8});
}

TEST_CASE("total loss bounds and weights") {
  const int w = 32, h = 32;
  const Image img(w, h, 90.0);
  FlowField gt(w, h);
  for (auto& v : gt.dy.data) v = -1.25;
  const auto t = multiscale_targets(gt);
  ForwardResult f;
  f.f11 = ad::Var::constant(t[0]);
  f.f22 = ad::Var::constant(t[1]);
  f.f32 = ad::Var::constant(t[2]);
  LossConfig cfg;
  const auto terms = total_loss(f, gt, img, cfg);
  CHECK(terms.total.item() == doctest::Approx(cfg.lambda2 * 4 * cfg.epsilon).epsilon(1e-12));

  const auto img2 = testutil::random_image(w, h, 2);
  const auto gt2 = testutil::smooth_field(w, h, 2.0, 3);
  f.f32 = ad::Var::constant(flow_tensor(testutil::smooth_field(w, h, 2.0, 4)));
  const auto full = total_loss(f, gt2, img2, cfg);
  CHECK(full.total.item() >= cfg.lambda2 * 4 * cfg.epsilon * 0.999);
  LossConfig no_smooth = cfg;
  no_smooth.lambda2 = 0;
  CHECK(total_loss(f, gt2, img2, no_smooth).total.item() == doctest::Approx(full.l1.item()).epsilon(1e-12));
  CHECK_THROWS_AS(total_loss(f, gt2, Image(16, 16), cfg), ShapeError);
}

TEST_CASE("loss is invariant under a joint horizontal flip") {
  const auto img = testutil::random_image(32, 48, 5);
  const auto gt = testutil::smooth_field(32, 48, 2.0, 6);
  ForwardResult f;
  const auto p1 = testutil::smooth_field(8, 12, 1.0, 7);
  const auto p2 = testutil::smooth_field(16, 24, 1.0, 8);
  const auto p3 = testutil::smooth_field(32, 48, 1.0, 9);
  f.f11 = ad::Var::constant(flow_tensor(p1));
  f.f22 = ad::Var::constant(flow_tensor(p2));
  f.f32 = ad::Var::constant(flow_tensor(p3));
  ForwardResult g;
  g.f11 = ad::Var::constant(flow_tensor(flip_horizontal(p1)));
  g.f22 = ad::Var::constant(flow_tensor(flip_horizontal(p2)));
  g.f32 = ad::Var::constant(flow_tensor(flip_horizontal(p3)));
  const double a = total_loss(f, gt, img, {}).total.item();
  const double b = total_loss(g, flip_horizontal(gt), flip_horizontal(img), {}).total.item();
  CHECK(a == doctest::Approx(b).epsilon(1e-12));
}

TEST_CASE("batch schedule") {
  const auto a = batch_indices(3, 10, 4, 7);
  CHECK(a == batch_indices(3, 10, 4, 7));
  std::multiset<size_t> pass;
  for (int s = 0; s < 7; ++s)
    for (auto i : batch_indices(9, s, 1, 7)) pass.insert(i);
  for (size_t i = 0; i < 7; ++i) CHECK(pass.count(i) == 1);
}

TEST_CASE("one step reduces the loss on its sample") {
  const auto samples = tiny_samples(1);
  TrainConfig t;
  t.model = small_model();
  t.batch_size = 1;
  t.crop_width = 32;
  t.flip = false;
  t.learning_rate = 1e-3;
  auto c = fresh(t);
  const auto& s = samples[0];
  auto loss_now = [&] {
    const auto f = forward(s.image, s.force_n, zscore(s.global_stiffness, *c.params.population), c.params);
    return total_loss(f, s.gt, s.image, {}).total.item();
  };
  const double before = loss_now();
  const auto m = train_step(c, samples, t, {});
  CHECK(m.loss == doctest::Approx(before).epsilon(1e-12));
  CHECK(loss_now() < before);
  CHECK(c.step == 1);
}

TEST_CASE("resuming from a checkpoint continues bit-exactly") {
  const auto samples = tiny_samples(3);
  TrainConfig t;
  t.model = small_model();
  t.batch_size = 2;
  t.crop_width = 16;
  t.learning_rate = 1e-3;
  t.seed = 21;

  auto straight = fresh(t);
  for (int i = 0; i < 3; ++i) train_step(straight, samples, t, {});

  const auto dir = testutil::temp_dir("resume");
  auto first = fresh(t);
  for (int i = 0; i < 2; ++i) train_step(first, samples, t, {});
  save_checkpoint(dir / "c.ckpt", first);
  auto resumed = load_checkpoint(dir / "c.ckpt");
  train_step(resumed, samples, t, {});

  CHECK(resumed.step == straight.step);
  for (const auto& np : straight.params.params()) {
    CHECK(resumed.params.at(np.name).value().data == np.var.value().data);
    CHECK(resumed.adam->m.at(np.name) == straight.adam->m.at(np.name));
    CHECK(resumed.adam->v.at(np.name) == straight.adam->v.at(np.name));
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("training loop writes checkpoints and a metrics log") {
  const auto dir = testutil::temp_dir("loop");
  SynthConfig sc;
  sc.image_sets = 4;
  sc.train_sets = 2;
  sc.val_sets = 1;
  sc.width = 32;
  sc.height = 48;
  sc.force_bins = {2, 5};
  sc.seed = 3;
  const auto m = synthesize_dataset(sc, dir / "data");

  TrainConfig t;
  t.model = small_model();
  t.steps = 6;
  t.batch_size = 2;
  t.learning_rate = 3e-3;
  t.validation_interval = 3;
  t.checkpoint_interval = 3;
  t.crop_width = 32;
  const auto res = train_loop(m, dir / "data", t, {}, dir / "run" / "model.ckpt");
  const auto files = train_outputs(dir / "run" / "model.ckpt");
  CHECK(std::filesystem::exists(files.final_checkpoint));
  CHECK(std::filesystem::exists(files.best_checkpoint));
  CHECK(std::filesystem::exists(dir / "run" / "model.ckpt.step3"));
  CHECK(res.best_val_epe <= res.initial_val_epe);
  CHECK(res.final_state.step == 6);

  std::ifstream csv(files.metrics_csv);
  std::string header;
  std::getline(csv, header);
  CHECK(header == "step,train_loss,l1,smooth,val_epe");
  int rows = 0;
  for (std::string line; std::getline(csv, line);) ++rows;
  CHECK(rows == 7);

  const auto best = load_checkpoint(files.best_checkpoint);
  CHECK(best.best_val_epe == doctest::Approx(res.best_val_epe));
  REQUIRE(best.params.population);
  CHECK(best.params.population->n == 2);

  // Continuing the run appends to the log.
  t.steps = 8;
  const auto more = train_loop(m, dir / "data", t, {}, dir / "run" / "model.ckpt", load_checkpoint(files.final_checkpoint));
  CHECK(more.final_state.step == 8);

  DatasetManifest empty = m;
  for (auto& r : empty.records) r.split = "test";
  CHECK_THROWS_AS(train_loop(empty, dir / "data", t, {}, dir / "x.ckpt"), ConfigError);
  std::filesystem::remove_all(dir);
}
