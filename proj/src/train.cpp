#include "defcor/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <random>
#include <set>
#include <sstream>

#include "defcor/error.hpp"
#include "defcor/field.hpp"
#include "defcor/layers.hpp"
#include "defcor/optim.hpp"

namespace defcor {

namespace {

constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kShuffleStream = 2;
constexpr std::uint64_t kAugmentStream = 3;

int effective_crop(int crop_width, int width) {
  int c = std::min(crop_width, width);
  c -= c % 16;
  if (c < 16) throw ConfigError("crop width must be at least 16 px");
  return c;
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(9) << v;
  return os.str();
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0)) throw ConfigError("learning_rate must be positive");
  if (steps < 0) throw ConfigError("steps must be non-negative");
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  if (crop_width < 16) throw ConfigError("crop_width must be at least 16");
  if (checkpoint_interval < 0 || validation_interval < 1) throw ConfigError("invalid checkpoint/validation interval");
  if (model.first_layer_order != 1 && model.first_layer_order != 2) throw ConfigError("first_layer_order must be 1 or 2");
  for (int w : model.widths)
    if (w < 1) throw ConfigError("channel widths must be positive");
}

std::vector<TrainSample> load_samples(const DatasetManifest& m, const std::filesystem::path& data_dir,
                                      const std::string& split) {
  std::vector<TrainSample> out;
  for (const auto* r : m.split(split)) {
    TrainSample s;
    s.id = r->id;
    s.force_n = r->force_n;
    s.global_stiffness = r->global_stiffness_n_per_mm;
    const auto img_path = data_dir / r->image_path;
    const auto flow_path = data_dir / r->flow_gt_path;
    try {
      s.image = read_pgm(img_path);
      s.gt = read_dff(flow_path);
    } catch (const std::exception& e) {
      throw FormatError("sample " + r->id + ": " + e.what());
    }
    if (s.gt.width() != s.image.width() || s.gt.height() != s.image.height())
      throw ShapeError("sample " + r->id + ": flow " + flow_path.string() + " does not match image " + img_path.string());
    out.push_back(std::move(s));
  }
  if (out.empty()) throw ConfigError("split '" + split + "' is empty");
  return out;
}

StiffnessPopulation training_population(const DatasetManifest& m) {
  std::set<int> seen;
  std::vector<double> k;
  for (const auto* r : m.split("train"))
    if (seen.insert(r->set_index).second) k.push_back(r->global_stiffness_n_per_mm);
  return make_population(k);
}

std::vector<size_t> batch_indices(std::uint64_t seed, std::int64_t step, int batch_size, size_t n) {
  std::vector<size_t> out;
  std::int64_t cached_pass = -1;
  std::vector<size_t> perm(n);
  for (int i = 0; i < batch_size; ++i) {
    const std::int64_t c = step * batch_size + i;
    const std::int64_t pass = c / static_cast<std::int64_t>(n);
    if (pass != cached_pass) {
      std::iota(perm.begin(), perm.end(), size_t{0});
      std::mt19937_64 rng(mix_seed(mix_seed(seed, kShuffleStream), static_cast<std::uint64_t>(pass)));
      std::shuffle(perm.begin(), perm.end(), rng);
      cached_pass = pass;
    }
    out.push_back(perm[static_cast<size_t>(c % static_cast<std::int64_t>(n))]);
  }
  return out;
}

StepMetrics train_step(Checkpoint& ckpt, const std::vector<TrainSample>& train, const TrainConfig& tcfg,
                       const LossConfig& lcfg) {
  if (train.empty()) throw ConfigError("training split is empty");
  if (!ckpt.params.population) throw ConfigError("model has no stiffness population");
  if (!ckpt.adam) ckpt.adam = AdamState{};
  auto& p = ckpt.params;
  const auto pop = *p.population;
  const auto idx = batch_indices(tcfg.seed, ckpt.step, tcfg.batch_size, train.size());
  const double inv_b = 1.0 / static_cast<double>(idx.size());

  p.zero_grad();
  StepMetrics sm;
  for (size_t i = 0; i < idx.size(); ++i) {
    const auto& s = train[idx[i]];
    const std::uint64_t c = static_cast<std::uint64_t>(ckpt.step) * tcfg.batch_size + i;
    const std::uint64_t aug_seed = mix_seed(mix_seed(tcfg.seed, kAugmentStream), c);
    const bool flip = tcfg.flip && (mix_seed(aug_seed, 0) & 1u);
    const auto aug = augment(s.image, s.gt, effective_crop(tcfg.crop_width, s.image.width()), flip, aug_seed);

    const auto fwd = forward(aug.image, s.force_n, zscore(s.global_stiffness, pop), p);
    const auto terms = total_loss(fwd, aug.flow, aug.image, lcfg);
    ad::backward(ad::scale(terms.total, inv_b));
    sm.loss += terms.total.item() * inv_b;
    sm.l1 += terms.l1.item() * inv_b;
    sm.smooth += terms.smooth.item() * inv_b;
  }
  AdamConfig acfg;
  acfg.lr = tcfg.learning_rate;
  adam_step(p, *ckpt.adam, acfg);
  ++ckpt.step;
  sm.step = ckpt.step;
  return sm;
}

double validation_epe(const ModelParams& p, const std::vector<TrainSample>& samples) {
  if (samples.empty()) throw ConfigError("validation split is empty");
  double acc = 0;
  for (const auto& s : samples) acc += epe(predict_flow(s.image, s.force_n, s.global_stiffness, p), s.gt).stats.mean;
  return acc / static_cast<double>(samples.size());
}

TrainOutputs train_outputs(const std::filesystem::path& out) {
  return {out, std::filesystem::path(out.string() + ".best"), std::filesystem::path(out.string() + ".metrics.csv")};
}

TrainResult train_loop(const DatasetManifest& m, const std::filesystem::path& data_dir, const TrainConfig& tcfg,
                       const LossConfig& lcfg, const std::filesystem::path& out,
                       const std::optional<Checkpoint>& resume, std::ostream* log) {
  tcfg.validate();
  lcfg.validate();
  const auto train = load_samples(m, data_dir, "train");
  const auto val = load_samples(m, data_dir, "val");
  const auto files = train_outputs(out);
  if (out.has_parent_path()) std::filesystem::create_directories(out.parent_path());

  TrainResult res;
  Checkpoint ckpt;
  if (resume) {
    ckpt = *resume;
    ckpt.params = resume->params.clone();  // never mutate the caller's parameter nodes
    if (!(ckpt.params.config == tcfg.model)) throw ConfigError("resume checkpoint architecture differs from the config");
    if (!ckpt.params.population) throw ConfigError("resume checkpoint has no stiffness population");
  } else {
    ckpt.params = ModelParams::initialize(tcfg.model, mix_seed(tcfg.seed, kInitStream));
    ckpt.params.population = training_population(m);
    ckpt.adam = AdamState{};
  }

  std::ofstream csv;
  if (resume && std::filesystem::exists(files.metrics_csv)) {
    csv.open(files.metrics_csv, std::ios::app);
  } else {
    csv.open(files.metrics_csv);
    csv << "step,train_loss,l1,smooth,val_epe\n";
  }
  if (!csv) throw FormatError("cannot write metrics log: " + files.metrics_csv.string());

  auto record_validation = [&](double v) {
    if (ckpt.best_val_epe < 0 || v < ckpt.best_val_epe) {
      ckpt.best_val_epe = v;
      res.best_step = ckpt.step;
      save_checkpoint(files.best_checkpoint, ckpt);
    }
  };

  if (!resume) {
    res.initial_val_epe = validation_epe(ckpt.params, val);
    csv << "0,,,," << fmt(res.initial_val_epe) << '\n';
    record_validation(res.initial_val_epe);
    if (log) *log << "step 0 val_epe " << res.initial_val_epe << '\n';
  }

  while (ckpt.step < tcfg.steps) {
    const auto sm = train_step(ckpt, train, tcfg, lcfg);
    if (!std::isfinite(sm.loss)) throw Error("training diverged at step " + std::to_string(sm.step));
    std::string val_col;
    if (sm.step % tcfg.validation_interval == 0 || sm.step == tcfg.steps) {
      const double v = validation_epe(ckpt.params, val);
      val_col = fmt(v);
      record_validation(v);
      if (log) *log << "step " << sm.step << " loss " << sm.loss << " val_epe " << v << std::endl;
    }
    csv << sm.step << ',' << fmt(sm.loss) << ',' << fmt(sm.l1) << ',' << fmt(sm.smooth) << ',' << val_col << '\n';
    if (!val_col.empty()) csv.flush();
    if (tcfg.checkpoint_interval > 0 && sm.step % tcfg.checkpoint_interval == 0)
      save_checkpoint(out.string() + ".step" + std::to_string(sm.step), ckpt);
  }
  csv.flush();
  save_checkpoint(files.final_checkpoint, ckpt);
  res.best_val_epe = ckpt.best_val_epe;
  res.final_state = std::move(ckpt);
  return res;
}

}  // namespace defcor
