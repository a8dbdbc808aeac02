#include "defcor/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <numbers>
#include <random>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "defcor/error.hpp"

namespace defcor {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace {

using Rng = std::mt19937_64;

double uniform(Rng& rng, double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); }

double interface_depth(const PhantomSpec& spec, size_t layer, double x) {
  const auto& l = spec.layers[layer];
  return l.depth_fraction * spec.height +
         l.wave_amplitude * std::sin(2 * std::numbers::pi * x / l.wave_period + l.wave_phase);
}

size_t layer_at(const PhantomSpec& spec, int x, int y) {
  for (size_t i = 0; i + 1 < spec.layers.size(); ++i) {
    if (y < interface_depth(spec, i, x)) return i;
  }
  return spec.layers.size() - 1;
}

bool in_disk(const RigidInclusion& inc, double x, double y) {
  const double dx = x - inc.cx, dy = y - inc.cy;
  return dx * dx + dy * dy <= inc.radius * inc.radius;
}

// Uniform noise smoothed with a 1 px Gaussian and rescaled to the std of U(-1,1).
Plane speckle_noise(int w, int h, Rng& rng) {
  Plane n(w, h);
  for (auto& v : n.data) v = uniform(rng, -1, 1);
  n = gaussian_blur(n, 1.0);
  double ss = 0;
  for (double v : n.data) ss += v * v;
  const double scale = (1.0 / std::sqrt(3.0)) / std::sqrt(ss / n.size());
  for (auto& v : n.data) v *= scale;
  return n;
}

}  // namespace

void PhantomSpec::validate() const {
  if (width < 2 || height < 2) throw ConfigError("phantom must be at least 2x2");
  if (layers.empty()) throw ConfigError("phantom needs at least one layer");
  double prev = 0;
  for (const auto& l : layers) {
    if (!(l.depth_fraction > prev) || l.depth_fraction > 1.0)
      throw ConfigError("layer depth fractions must be strictly increasing in (0,1]");
    if (l.compliance < 0) throw ConfigError("layer compliance must be non-negative");
    prev = l.depth_fraction;
  }
  if (layers.back().depth_fraction != 1.0) throw ConfigError("last layer must extend to the bottom (depth 1)");
  if (!(global_stiffness > 0)) throw ConfigError("global stiffness must be positive");
  if (inclusion) {
    const auto& c = *inclusion;
    if (c.radius <= 0 || c.cx - c.radius < 0 || c.cx + c.radius > width - 1 || c.cy - c.radius < 0 ||
        c.cy + c.radius > height - 1)
      throw ConfigError("rigid inclusion lies outside the image");
  }
}

PhantomSpec default_phantom_spec(int width, int height, std::uint64_t seed) {
  PhantomSpec s;
  s.width = width;
  s.height = height;
  s.rng_seed = seed;
  s.layers = {
      {0.22, 3.0, 70, 0.35, 2.0, width * 0.9, 0.3},
      {0.65, 1.0, 130, 0.30, 3.0, width * 1.3, 1.1},
      {1.00, 0.3, 85, 0.30, 0, 64, 0},
  };
  return s;
}

PhantomSpec random_phantom_spec(int width, int height, double stiffness, std::uint64_t seed) {
  Rng rng(seed);
  PhantomSpec s;
  s.width = width;
  s.height = height;
  s.rng_seed = mix_seed(seed, 99);
  s.global_stiffness = stiffness;
  const double fat = uniform(rng, 0.14, 0.28);
  const double muscle = uniform(rng, 0.58, 0.78);
  s.layers = {
      {fat, 3.0 * uniform(rng, 0.8, 1.2), uniform(rng, 55, 85), 0.35, uniform(rng, 1, 3.5),
       width * uniform(rng, 0.6, 1.5), uniform(rng, 0, 6.28)},
      {muscle, 1.0 * uniform(rng, 0.8, 1.2), uniform(rng, 115, 150), 0.3, uniform(rng, 1, 4),
       width * uniform(rng, 0.8, 1.8), uniform(rng, 0, 6.28)},
      {1.0, 0.3 * uniform(rng, 0.8, 1.2), uniform(rng, 65, 95), 0.3, 0, 64, 0},
  };
  RigidInclusion inc;
  inc.radius = width * uniform(rng, 0.075, 0.10);
  inc.cx = uniform(rng, 0.18 * width, 0.82 * width);
  const double top = (fat + 0.06) * height + inc.radius;
  const double bottom = std::min((muscle + 0.05) * height, height - 2.0 - inc.radius);
  inc.cy = uniform(rng, top, std::max(top, bottom));
  inc.intensity = uniform(rng, 170, 215);
  s.inclusion = inc;
  return s;
}

RenderedPhantom render_phantom(const PhantomSpec& spec) {
  spec.validate();
  Rng rng(spec.rng_seed);
  const int w = spec.width, h = spec.height;
  const Plane noise = speckle_noise(w, h, rng);

  RenderedPhantom out{Image(w, h), Plane(w, h), {}};
  out.image.spacing_mm_per_px = spec.spacing_mm_per_px();
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const auto& l = spec.layers[layer_at(spec, x, y)];
      double v = l.mean_intensity * (1 + l.speckle_amplitude * noise.at(x, y));
      for (size_t i = 0; i + 1 < spec.layers.size(); ++i) {
        const double d = y - interface_depth(spec, i, x);
        v += spec.interface_brightness * std::exp(-0.5 * d * d);
      }
      out.image.at(x, y) = v;
    }
  }

  if (spec.inclusion) {
    const auto& inc = *spec.inclusion;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double dx = x - inc.cx, dy = y - inc.cy;
        const double r = std::sqrt(dx * dx + dy * dy);
        if (r <= inc.radius) {
          out.mask.at(x, y) = 1.0;
          out.image.at(x, y) = inc.intensity * (1 + 0.1 * noise.at(x, y));
        } else if (std::abs(dx) < inc.radius && dy > 0) {
          out.image.at(x, y) *= inc.shadow_factor;
        }
        if (dy <= 0) {
          const double d = r - inc.radius;
          out.image.at(x, y) += 50 * std::exp(-0.5 * d * d / 2.25);
        }
      }
    }
  }
  for (auto& v : out.image.pixels.data) v = std::clamp(v, 0.0, 255.0);

  const int margin = std::min(4, w / 4);
  for (size_t i = 0; i + 1 < spec.layers.size(); ++i) {
    Polyline line;
    for (int x = margin; x <= w - 1 - margin; ++x) line.push_back({double(x), interface_depth(spec, i, x)});
    out.interfaces.push_back(std::move(line));
  }
  return out;
}

Plane compliance_map(const PhantomSpec& spec) {
  spec.validate();
  const int w = spec.width, h = spec.height;
  Plane c(w, h);
  double column_total = 0;
  for (int x = 0; x < w; ++x) {
    for (int y = 0; y < h; ++y) {
      const double rel = spec.layers[layer_at(spec, x, y)].compliance;
      column_total += rel;
      c.at(x, y) = (spec.inclusion && in_disk(*spec.inclusion, x, y)) ? 0.0 : rel;
    }
  }
  column_total /= w;
  if (!(column_total > 0)) return c;
  // An inclusion-free column compresses by force / K_g mm, expressed in pixels.
  const double scale = 1.0 / (spec.global_stiffness * spec.spacing_mm_per_px()) / column_total;
  for (auto& v : c.data) v *= scale;
  return c;
}

CompressionResult simulate_compression(const PhantomSpec& spec, const Image& image, double force_n) {
  if (force_n < 0) throw ConfigError("force must be non-negative");
  if (image.width() != spec.width || image.height() != spec.height)
    throw ShapeError("simulate_compression: image does not match phantom dimensions");
  const int w = spec.width, h = spec.height;
  CompressionResult r{image, FlowField(w, h)};
  if (force_n == 0) return r;

  const Plane c = compliance_map(spec);
  for (int x = 0; x < w; ++x) {
    double acc = 0;
    for (int y = 0; y < h; ++y) {
      acc += c.at(x, y);
      r.gt.dy.at(x, y) = -force_n * acc;
    }
  }
  if (spec.lateral_coupling != 0 && w > 2) {
    Plane grad(w, h);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const int xl = std::max(x - 1, 0), xr = std::min(x + 1, w - 1);
        grad.at(x, y) = (r.gt.dy.at(xr, y) - r.gt.dy.at(xl, y)) / (xr - xl);
      }
    }
    grad = gaussian_blur(grad, 2.0);
    for (size_t i = 0; i < grad.size(); ++i) r.gt.dx.data[i] = spec.lateral_coupling * grad.data[i];
  }
  r.deformed = warp(image, invert_flow(r.gt));
  return r;
}

Plane deform_mask(const Plane& mask, const FlowField& gt) {
  Plane m = warp(mask, invert_flow(gt));
  for (auto& v : m.data) v = v >= 0.5 ? 1.0 : 0.0;
  return m;
}

std::vector<Polyline> deform_polylines(const std::vector<Polyline>& lines, const FlowField& gt) {
  std::vector<Polyline> out;
  for (const auto& line : lines) {
    Polyline d;
    for (const auto& p : line) {
      d.push_back({p.x + sample_bilinear(gt.dx, p.x, p.y), p.y + sample_bilinear(gt.dy, p.x, p.y)});
    }
    out.push_back(std::move(d));
  }
  return out;
}

FlowField make_axial_ramp_field(int width, int height, double max_disp_px) {
  if (max_disp_px < 0) throw ConfigError("ramp displacement must be non-negative");
  FlowField f(width, height);
  for (int y = 0; y < height; ++y) {
    const double v = max_disp_px * y / (height - 1);
    for (int x = 0; x < width; ++x) f.dy.at(x, y) = v;
  }
  return f;
}

FlowField make_elastic_field(int width, int height, double alpha, double sigma, std::uint64_t seed) {
  if (alpha < 0 || !(sigma > 0)) throw ConfigError("elastic field needs alpha >= 0 and sigma > 0");
  FlowField f(width, height);
  if (alpha == 0) return f;
  Rng rng(seed);
  for (auto& v : f.dx.data) v = uniform(rng, -1, 1);
  for (auto& v : f.dy.data) v = uniform(rng, -1, 1);
  f.dx = gaussian_blur(f.dx, sigma);
  f.dy = gaussian_blur(f.dy, sigma);
  double peak = 0;
  for (size_t i = 0; i < f.dx.size(); ++i) peak = std::max(peak, std::hypot(f.dx.data[i], f.dy.data[i]));
  return scaled(f, peak > 0 ? alpha / peak : 0.0);
}

Plane flip_horizontal(const Plane& p) {
  Plane out(p.width, p.height);
  for (int y = 0; y < p.height; ++y)
    for (int x = 0; x < p.width; ++x) out.at(x, y) = p.at(p.width - 1 - x, y);
  return out;
}

Image flip_horizontal(const Image& img) { return Image(flip_horizontal(img.pixels), img.spacing_mm_per_px); }

FlowField flip_horizontal(const FlowField& f) {
  FlowField out(flip_horizontal(f.dx), flip_horizontal(f.dy));
  for (auto& v : out.dx.data) v = -v;
  return out;
}

Plane crop_columns(const Plane& p, int x0, int width) {
  if (width < 1 || x0 < 0 || x0 + width > p.width) throw ShapeError("crop window outside the image");
  Plane out(width, p.height);
  for (int y = 0; y < p.height; ++y)
    for (int x = 0; x < width; ++x) out.at(x, y) = p.at(x0 + x, y);
  return out;
}

Image crop_columns(const Image& img, int x0, int width) {
  return Image(crop_columns(img.pixels, x0, width), img.spacing_mm_per_px);
}

FlowField crop_columns(const FlowField& f, int x0, int width) {
  return FlowField(crop_columns(f.dx, x0, width), crop_columns(f.dy, x0, width));
}

Augmented augment(const Image& image, const FlowField& flow, int crop_width, bool flip, std::uint64_t seed) {
  require_same_shape(image.pixels, flow.dx, "augment");
  if (crop_width > image.width() || crop_width < 1)
    throw ConfigError("crop width " + std::to_string(crop_width) + " exceeds image width " +
                      std::to_string(image.width()));
  Rng rng(seed);
  const int x0 = std::uniform_int_distribution<int>(0, image.width() - crop_width)(rng);
  Augmented a{flip ? flip_horizontal(image) : image, flip ? flip_horizontal(flow) : flow, x0};
  if (crop_width < image.width()) {
    a.image = crop_columns(a.image, x0, crop_width);
    a.flow = crop_columns(a.flow, x0, crop_width);
  }
  return a;
}

FlowField build_gt_flow(const std::vector<FlowField>& chain) {
  if (chain.empty()) throw ConfigError("build_gt_flow: empty chain");
  FlowField acc = chain.front();
  for (size_t i = 1; i < chain.size(); ++i) acc = compose_flows(acc, chain[i]);
  return acc;
}

FlowField build_gt_flow(const std::vector<std::filesystem::path>& chain) {
  std::vector<FlowField> fields;
  for (const auto& p : chain) fields.push_back(read_dff(p));
  return build_gt_flow(fields);
}

PalpationTrace simulate_palpation(double stiffness, const PalpationConfig& cfg, std::uint64_t seed) {
  if (!(stiffness > 0) || cfg.samples < 3) throw ConfigError("palpation needs positive stiffness and >= 3 samples");
  Rng rng(seed);
  std::normal_distribution<double> fnoise(0, cfg.force_noise_n), dnoise(0, cfg.displacement_noise_mm);
  PalpationTrace t;
  for (int i = 0; i < cfg.samples; ++i) {
    const double phase = static_cast<double>(i) / (cfg.samples - 1);  // 0 .. 1
    const double tri = phase <= 0.5 ? 2 * phase : 2 * (1 - phase);
    const double force_true = cfg.peak_force_n * tri;
    // Tissue relaxes slightly on release: less force for the same depth.
    const double hyst = (phase <= 0.5 ? 1.0 : -1.0) * cfg.hysteresis_n * std::sin(std::numbers::pi * tri);
    PalpationSample s;
    s.time_s = phase * cfg.duration_s;
    s.lambda_z_mm = force_true / stiffness + dnoise(rng);
    s.force_n = std::max(0.0, force_true + hyst + fnoise(rng));
    t.samples.push_back(s);
  }
  return t;
}

// ---------------------------------------------------------------------------

std::vector<const SampleRecord*> DatasetManifest::split(const std::string& name) const {
  std::vector<const SampleRecord*> out;
  for (const auto& r : records)
    if (r.split == name) out.push_back(&r);
  return out;
}

void write_mask(const std::filesystem::path& path, const Plane& mask) {
  Image img(mask.width, mask.height);
  for (size_t i = 0; i < mask.size(); ++i) img.pixels.data[i] = mask.data[i] >= 0.5 ? 255.0 : 0.0;
  write_pgm(path, img);
}

Plane read_mask(const std::filesystem::path& path) {
  Plane p = read_pgm(path).pixels;
  for (auto& v : p.data) v = v >= 128 ? 1.0 : 0.0;
  return p;
}

void write_polylines_csv(const std::filesystem::path& path, const std::vector<Polyline>& lines) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out << "interface_id,x,y\n" << std::setprecision(9);
  for (size_t i = 0; i < lines.size(); ++i)
    for (const auto& p : lines[i]) out << i << ',' << p.x << ',' << p.y << '\n';
}

std::vector<Polyline> read_polylines_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  if (line.rfind("interface_id,x,y", 0) != 0) throw FormatError("unexpected polyline header in " + path.string());
  std::map<int, Polyline> by_id;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    std::istringstream ss(line);
    int id = 0;
    Point2 p;
    char c1 = 0, c2 = 0;
    if (!(ss >> id >> c1 >> p.x >> c2 >> p.y) || c1 != ',' || c2 != ',')
      throw FormatError("malformed polyline row in " + path.string());
    by_id[id].push_back(p);
  }
  std::vector<Polyline> out;
  for (auto& [id, pl] : by_id) out.push_back(std::move(pl));
  return out;
}

namespace {

std::string set_name(int s) {
  std::ostringstream ss;
  ss << "s" << std::setw(3) << std::setfill('0') << s;
  return ss.str();
}

// Renders one image set: phantom, palpation trace and one compressed frame per force bin.
std::vector<SampleRecord> synthesize_set(const SynthConfig& cfg, int s, const std::string& split,
                                         const std::filesystem::path& out_dir) {
  const std::uint64_t set_seed = mix_seed(cfg.seed, static_cast<std::uint64_t>(s));
  Rng rng(set_seed);
  const bool forearm = uniform(rng, 0, 1) < cfg.forearm_fraction;
  const double mean = forearm ? kForearmStiffness : kUpperArmStiffness;
  const double sd = forearm ? kForearmStiffnessSd : kUpperArmStiffnessSd;
  const double k_true = std::clamp(std::normal_distribution<double>(mean, sd)(rng), 0.6 * mean, 1.6 * mean);

  const auto trace = simulate_palpation(k_true, cfg.palpation, mix_seed(set_seed, 1));
  const auto fit = fit_global_stiffness(trace);

  PhantomSpec spec = random_phantom_spec(cfg.width, cfg.height, k_true, mix_seed(set_seed, 2));
  spec.lateral_coupling = cfg.lateral_coupling;
  const auto ph = render_phantom(spec);
  const Image original = quantize(ph.image);

  const std::string name = set_name(s);
  const auto dir = out_dir / name;
  std::filesystem::create_directories(dir);
  write_pgm(dir / "original.pgm", original);
  write_mask(dir / "mask.pgm", ph.mask);
  write_polylines_csv(dir / "interfaces.csv", ph.interfaces);
  write_palpation_csv(dir / "palpation.csv", trace);

  std::vector<SampleRecord> recs;
  for (double bin : cfg.force_bins) {
    const double force = bin - uniform(rng, 0, 1);  // (bin-1, bin]
    const auto sim = simulate_compression(spec, original, force);
    const int b = static_cast<int>(std::lround(bin));
    const std::string stem = "f" + std::to_string(b);
    write_pgm(dir / (stem + "_image.pgm"), sim.deformed);
    write_dff(dir / (stem + "_flow.dff"), sim.gt);
    write_mask(dir / (stem + "_mask.pgm"), deform_mask(ph.mask, sim.gt));
    write_polylines_csv(dir / (stem + "_interfaces.csv"), deform_polylines(ph.interfaces, sim.gt));

    SampleRecord r;
    r.id = name + "_" + stem;
    r.set_index = s;
    r.split = split;
    r.image_path = name + "/" + stem + "_image.pgm";
    r.original_path = name + "/original.pgm";
    r.flow_gt_path = name + "/" + stem + "_flow.dff";
    r.mask_path = name + "/mask.pgm";
    r.deformed_mask_path = name + "/" + stem + "_mask.pgm";
    r.interfaces_path = name + "/interfaces.csv";
    r.deformed_interfaces_path = name + "/" + stem + "_interfaces.csv";
    r.palpation_path = name + "/palpation.csv";
    r.force_n = force;
    r.global_stiffness_n_per_mm = fit.c2_slope;
    r.true_stiffness_n_per_mm = k_true;
    recs.push_back(std::move(r));
  }
  return recs;
}

}  // namespace

DatasetManifest synthesize_dataset(const SynthConfig& cfg, const std::filesystem::path& out_dir) {
  if (cfg.image_sets < 1 || cfg.train_sets < 1 || cfg.val_sets < 0 || cfg.train_sets + cfg.val_sets > cfg.image_sets)
    throw ConfigError("invalid split sizes");
  if (cfg.width % 4 != 0 || cfg.height % 4 != 0) throw ConfigError("image dimensions must be divisible by 4");
  if (cfg.force_bins.empty()) throw ConfigError("at least one force bin is required");

  std::vector<int> order(cfg.image_sets);
  for (int i = 0; i < cfg.image_sets; ++i) order[i] = i;
  Rng split_rng(mix_seed(cfg.seed, 0xabcdefULL));
  std::shuffle(order.begin(), order.end(), split_rng);
  std::vector<std::string> split_of(cfg.image_sets);
  for (int i = 0; i < cfg.image_sets; ++i) {
    split_of[order[i]] = i < cfg.train_sets ? "train" : i < cfg.train_sets + cfg.val_sets ? "val" : "test";
  }

  std::filesystem::create_directories(out_dir);
  DatasetManifest m;
  m.width = cfg.width;
  m.height = cfg.height;
  m.seed = cfg.seed;

  std::mutex mu;
  std::vector<std::exception_ptr> errors;
  auto worker = [&](int job) {
    for (int s = job; s < cfg.image_sets; s += std::max(cfg.jobs, 1)) {
      try {
        auto recs = synthesize_set(cfg, s, split_of[s], out_dir);
        std::lock_guard lock(mu);
        for (auto& r : recs) m.records.push_back(std::move(r));
      } catch (...) {
        std::lock_guard lock(mu);
        errors.push_back(std::current_exception());
      }
    }
  };
  if (cfg.jobs <= 1) {
    worker(0);
  } else {
    std::vector<std::thread> threads;
    for (int j = 0; j < cfg.jobs; ++j) threads.emplace_back(worker, j);
    for (auto& t : threads) t.join();
  }
  if (!errors.empty()) std::rethrow_exception(errors.front());

  std::sort(m.records.begin(), m.records.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  write_manifest(out_dir / "manifest.json", m);
  return m;
}

void write_manifest(const std::filesystem::path& path, const DatasetManifest& m) {
  nlohmann::ordered_json j;
  j["format"] = "defcor-manifest";
  j["version"] = 1;
  j["width"] = m.width;
  j["height"] = m.height;
  j["seed"] = m.seed;
  j["records"] = nlohmann::ordered_json::array();
  for (const auto& r : m.records) {
    j["records"].push_back({{"id", r.id},
                            {"set", r.set_index},
                            {"split", r.split},
                            {"image", r.image_path},
                            {"original", r.original_path},
                            {"flow_gt", r.flow_gt_path},
                            {"mask", r.mask_path},
                            {"deformed_mask", r.deformed_mask_path},
                            {"interfaces", r.interfaces_path},
                            {"deformed_interfaces", r.deformed_interfaces_path},
                            {"palpation", r.palpation_path},
                            {"force_n", r.force_n},
                            {"global_stiffness", r.global_stiffness_n_per_mm},
                            {"true_stiffness", r.true_stiffness_n_per_mm}});
  }
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write manifest: " + path.string());
  out << j.dump(1) << '\n';
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open manifest: " + path.string());
  DatasetManifest m;
  try {
    const auto j = nlohmann::json::parse(in);
    m.width = j.at("width");
    m.height = j.at("height");
    m.seed = j.value("seed", std::uint64_t{0});
    for (const auto& e : j.at("records")) {
      SampleRecord r;
      r.id = e.at("id");
      r.set_index = e.value("set", 0);
      r.split = e.at("split");
      r.image_path = e.at("image");
      r.original_path = e.value("original", "");
      r.flow_gt_path = e.at("flow_gt");
      r.mask_path = e.value("mask", "");
      r.deformed_mask_path = e.value("deformed_mask", "");
      r.interfaces_path = e.value("interfaces", "");
      r.deformed_interfaces_path = e.value("deformed_interfaces", "");
      r.palpation_path = e.value("palpation", "");
      r.force_n = e.at("force_n");
      r.global_stiffness_n_per_mm = e.at("global_stiffness");
      r.true_stiffness_n_per_mm = e.value("true_stiffness", 0.0);
      if (r.split != "train" && r.split != "val" && r.split != "test")
        throw FormatError("record " + r.id + " has unknown split '" + r.split + "'");
      m.records.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed manifest " + path.string() + ": " + e.what());
  }
  return m;
}

}  // namespace defcor
