#include "defcor/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "defcor/error.hpp"

namespace defcor {

namespace {

using nlohmann::json;

// Reads known keys from one object and rejects the rest.
class Section {
 public:
  Section(const json& parent, std::string name) : name_(std::move(name)) {
    if (!parent.contains(name_)) return;
    obj_ = &parent.at(name_);
    if (!obj_->is_object()) throw ConfigError("config section '" + name_ + "' must be an object");
  }
  Section(const json& obj, std::string name, bool) : name_(std::move(name)), obj_(&obj) {}

  template <class T>
  void get(const std::string& key, T& dst) {
    known_.insert(key);
    if (!obj_ || !obj_->contains(key)) return;
    try {
      dst = obj_->at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError("config key '" + path(key) + "' has the wrong type");
    }
  }

  Section child(const std::string& key) {
    known_.insert(key);
    if (!obj_ || !obj_->contains(key)) return Section(name_ + "." + key);
    const auto& c = obj_->at(key);
    if (!c.is_object()) throw ConfigError("config section '" + path(key) + "' must be an object");
    return Section(c, path(key), true);
  }

  void finish() const {
    if (!obj_) return;
    for (const auto& [k, _] : obj_->items())
      if (!known_.count(k)) throw ConfigError("unknown config key '" + path(k) + "'");
  }

 private:
  explicit Section(std::string name) : name_(std::move(name)) {}
  std::string path(const std::string& key) const { return name_.empty() ? key : name_ + "." + key; }

  std::string name_;
  const json* obj_ = nullptr;
  std::set<std::string> known_;
};

}  // namespace

void RunConfig::propagate() {
  synth.seed = seed;
  train.seed = seed;
  synth.jobs = io.jobs;
}

RunConfig parse_run_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");

  RunConfig c;
  Section top(j, "", true);
  top.get("config_version", c.config_version);
  if (c.config_version != kConfigVersion)
    throw ConfigError("unsupported config_version " + std::to_string(c.config_version));
  top.get("seed", c.seed);

  auto s = top.child("synth");
  s.get("image_sets", c.synth.image_sets);
  s.get("train_sets", c.synth.train_sets);
  s.get("val_sets", c.synth.val_sets);
  s.get("width", c.synth.width);
  s.get("height", c.synth.height);
  s.get("force_bins", c.synth.force_bins);
  s.get("forearm_fraction", c.synth.forearm_fraction);
  s.get("lateral_coupling", c.synth.lateral_coupling);
  auto pal = s.child("palpation");
  pal.get("peak_force_n", c.synth.palpation.peak_force_n);
  pal.get("duration_s", c.synth.palpation.duration_s);
  pal.get("samples", c.synth.palpation.samples);
  pal.get("force_noise_n", c.synth.palpation.force_noise_n);
  pal.get("displacement_noise_mm", c.synth.palpation.displacement_noise_mm);
  pal.get("hysteresis_n", c.synth.palpation.hysteresis_n);
  pal.finish();
  s.finish();

  auto t = top.child("train");
  t.get("learning_rate", c.train.learning_rate);
  t.get("steps", c.train.steps);
  t.get("batch_size", c.train.batch_size);
  t.get("crop_width", c.train.crop_width);
  t.get("flip", c.train.flip);
  t.get("checkpoint_interval", c.train.checkpoint_interval);
  t.get("validation_interval", c.train.validation_interval);
  t.get("widths", c.train.model.widths);
  t.get("first_layer_order", c.train.model.first_layer_order);
  t.get("leaky_slope", c.train.model.leaky_slope);
  t.finish();

  auto l = top.child("loss");
  l.get("lambda1", c.loss.lambda1);
  l.get("lambda2", c.loss.lambda2);
  l.get("edge_lambda_x", c.loss.edge_lambda_x);
  l.get("edge_lambda_y", c.loss.edge_lambda_y);
  l.get("epsilon", c.loss.epsilon);
  l.finish();

  auto e = top.child("eval");
  e.get("force_bins", c.eval.force_bins);
  e.get("split", c.eval.split);
  e.get("write_error_maps", c.eval.write_error_maps);
  e.get("error_map_scale_px", c.eval.error_map_scale_px);
  e.finish();

  auto io = top.child("io");
  io.get("jobs", c.io.jobs);
  io.finish();
  top.finish();

  c.train.validate();
  c.loss.validate();
  if (c.io.jobs < 1) throw ConfigError("io.jobs must be >= 1");
  c.propagate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

std::string dump_run_config(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["config_version"] = c.config_version;
  j["seed"] = c.seed;
  const auto& p = c.synth.palpation;
  j["synth"] = {{"image_sets", c.synth.image_sets},
                {"train_sets", c.synth.train_sets},
                {"val_sets", c.synth.val_sets},
                {"width", c.synth.width},
                {"height", c.synth.height},
                {"force_bins", c.synth.force_bins},
                {"forearm_fraction", c.synth.forearm_fraction},
                {"lateral_coupling", c.synth.lateral_coupling},
                {"palpation",
                 {{"peak_force_n", p.peak_force_n},
                  {"duration_s", p.duration_s},
                  {"samples", p.samples},
                  {"force_noise_n", p.force_noise_n},
                  {"displacement_noise_mm", p.displacement_noise_mm},
                  {"hysteresis_n", p.hysteresis_n}}}};
  j["train"] = {{"learning_rate", c.train.learning_rate},
                {"steps", c.train.steps},
                {"batch_size", c.train.batch_size},
                {"crop_width", c.train.crop_width},
                {"flip", c.train.flip},
                {"checkpoint_interval", c.train.checkpoint_interval},
                {"validation_interval", c.train.validation_interval},
                {"widths", c.train.model.widths},
                {"first_layer_order", c.train.model.first_layer_order},
                {"leaky_slope", c.train.model.leaky_slope}};
  j["loss"] = {{"lambda1", c.loss.lambda1},
               {"lambda2", c.loss.lambda2},
               {"edge_lambda_x", c.loss.edge_lambda_x},
               {"edge_lambda_y", c.loss.edge_lambda_y},
               {"epsilon", c.loss.epsilon}};
  j["eval"] = {{"force_bins", c.eval.force_bins},
               {"split", c.eval.split},
               {"write_error_maps", c.eval.write_error_maps},
               {"error_map_scale_px", c.eval.error_map_scale_px}};
  j["io"] = {{"jobs", c.io.jobs}};
  return j.dump(2) + "\n";
}

}  // namespace defcor
