#include "defcor/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <numbers>
#include <thread>

#include "defcor/error.hpp"

namespace defcor {

namespace {

double normal_cdf(double x, double m, double s) { return 0.5 * std::erfc(-(x - m) / (s * std::numbers::sqrt2)); }

double normal_pdf(double x, double m, double s) {
  const double z = (x - m) / s;
  return std::exp(-0.5 * z * z) / (s * std::sqrt(2 * std::numbers::pi));
}

double mean_of(const std::vector<double>& v) {
  double acc = 0;
  for (double x : v) acc += x;
  return v.empty() ? 0.0 : acc / static_cast<double>(v.size());
}

// Sample SD (n - 1); zero for fewer than two values.
double sd_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double acc = 0;
  for (double x : v) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

double count_ones(const Plane& p) {
  double n = 0;
  for (double v : p.data) n += v >= 0.5 ? 1 : 0;
  return n;
}

double point_accuracy(double l, double l_gt) { return std::max(0.0, 1.0 - std::abs(l - l_gt) / std::abs(l_gt)); }

Point2 lerp(const Point2& a, const Point2& b, double t) { return {a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)}; }

struct SampleOutcome {
  int bin = 0;
  std::vector<std::pair<std::string, double>> metrics;
  std::vector<std::string> warnings;
};

SampleOutcome evaluate_sample(const SampleRecord& r, const std::filesystem::path& data_dir, const Predictor& predict,
                              const EvalOptions& opts) {
  SampleOutcome out;
  out.bin = force_bin(r.force_n);
  const auto s = load_eval_sample(r, data_dir);
  const auto pred = predict(s);
  if (pred.width() != s.gt.width() || pred.height() != s.gt.height())
    throw ShapeError("sample " + r.id + ": predicted field has the wrong size");
  auto put = [&](const char* name, double v) { out.metrics.emplace_back(name, v); };

  const auto e = epe(pred, s.gt);
  const double spacing = kImagingDepthMm / s.gt.height();
  put("epe_mean", e.stats.mean);
  put("epe_sd", e.stats.sd);
  put("epe_max", e.stats.max);
  put("epe_mean_mm", e.stats.mean * spacing);
  const double px_per_ref_px = kDefaultSpacingMmPerPx / spacing;
  const std::pair<const char*, double> thresholds[] = {{"per10", 10}, {"per15", 15}, {"per20", 20}};
  for (const auto& [name, ref_px] : thresholds) {
    const double thr = ref_px * px_per_ref_px;
    double n = 0;
    for (double v : e.map.data) n += v > thr ? 1 : 0;
    put(name, n / static_cast<double>(e.map.size()));
  }

  const Image corrected = warp(s.deformed, pred);
  try {
    put("ncc_deformed", ncc(s.deformed, s.original));
    put("ncc_corrected", ncc(corrected, s.original));
  } catch (const DegenerateError& ex) {
    out.warnings.push_back("sample " + r.id + ": NCC skipped (" + ex.what() + ")");
  }

  if (s.mask && s.deformed_mask && count_ones(*s.mask) > 0) {
    const Plane corrected_mask = threshold(warp(*s.deformed_mask, pred));
    auto dice_or_zero = [&](const Plane& other) { return count_ones(other) > 0 ? dice(*s.mask, other) : 0.0; };
    put("dice_deformed", dice_or_zero(*s.deformed_mask));
    put("dice_corrected", dice_or_zero(corrected_mask));
  } else {
    out.warnings.push_back("sample " + r.id + ": no inclusion mask, Dice skipped");
  }

  if (s.interfaces && s.deformed_interfaces && !s.interfaces->empty()) {
    const auto d = tla(*s.interfaces, *s.deformed_interfaces);
    const auto c = tla(*s.interfaces, correct_polylines(*s.deformed_interfaces, pred));
    put("ha_deformed", d.ha_mean);
    put("va_deformed", d.va_mean);
    put("ha_corrected", c.ha_mean);
    put("va_corrected", c.va_mean);
  } else {
    out.warnings.push_back("sample " + r.id + ": no interfaces, TLA skipped");
  }

  if (opts.error_map_dir) {
    FlowField diff(add(pred, scaled(s.gt, -1.0)));
    write_ppm(*opts.error_map_dir / (r.id + "_error.ppm"), flow_to_color(diff, opts.error_map_scale_px));
  }
  return out;
}

}  // namespace

Plane threshold(const Plane& p, double level) {
  Plane out(p.width, p.height);
  for (size_t i = 0; i < p.size(); ++i) out.data[i] = p.data[i] >= level ? 1.0 : 0.0;
  return out;
}

double dice(const Plane& gt, const Plane& other) {
  require_same_shape(gt, other, "dice");
  double g = 0, s = 0, both = 0;
  for (size_t i = 0; i < gt.size(); ++i) {
    const bool a = gt.data[i] >= 0.5, b = other.data[i] >= 0.5;
    g += a;
    s += b;
    both += a && b;
  }
  if (g == 0 || s == 0) throw DegenerateError("dice: empty mask");
  return 100.0 * 2.0 * both / (g + s);
}

TlaResult tla(const std::vector<Polyline>& gt, const std::vector<Polyline>& other, double step_px) {
  if (gt.size() != other.size())
    throw ShapeError("tla: " + std::to_string(gt.size()) + " GT interfaces vs " + std::to_string(other.size()));
  if (!(step_px > 0)) throw ConfigError("tla: sampling step must be positive");
  TlaResult res;
  for (size_t k = 0; k < gt.size(); ++k) {
    const auto& g = gt[k];
    const auto& o = other[k];
    if (g.size() < 2 || g.size() != o.size()) throw ShapeError("tla: interface " + std::to_string(k) + " vertex mismatch");
    for (size_t i = 1; i < g.size(); ++i)
      if (!(g[i].x > g[i - 1].x)) throw ShapeError("tla: GT interface x must be strictly increasing");
    std::vector<double> ha, va;
    size_t seg = 0;
    for (double x = g.front().x; x <= g.back().x + 1e-9; x += step_px) {
      while (seg + 2 < g.size() && x > g[seg + 1].x) ++seg;
      const double t = std::clamp((x - g[seg].x) / (g[seg + 1].x - g[seg].x), 0.0, 1.0);
      const Point2 pg = lerp(g[seg], g[seg + 1], t);
      const Point2 po = lerp(o[seg], o[seg + 1], t);
      if (pg.x != 0) ha.push_back(point_accuracy(po.x, pg.x));
      if (pg.y != 0) va.push_back(point_accuracy(po.y, pg.y));
    }
    res.ha_per_interface.push_back(mean_of(ha));
    res.va_per_interface.push_back(mean_of(va));
    res.ha.insert(res.ha.end(), ha.begin(), ha.end());
    res.va.insert(res.va.end(), va.begin(), va.end());
  }
  res.ha_mean = mean_of(res.ha);
  res.ha_sd = sd_of(res.ha);
  res.va_mean = mean_of(res.va);
  res.va_sd = sd_of(res.va);
  return res;
}

std::vector<Polyline> correct_polylines(const std::vector<Polyline>& deformed, const FlowField& flow) {
  std::vector<Polyline> out;
  for (const auto& line : deformed) {
    Polyline c;
    for (const auto& p : line) {
      const auto [x, y] = pull_point(flow, p.x, p.y);
      c.push_back({x, y});
    }
    out.push_back(std::move(c));
  }
  return out;
}

GaussianFit fit_gaussian(std::span<const double> values, int bins) {
  if (values.size() < 2) throw DegenerateError("fit_gaussian: need at least two values");
  if (bins < 1) throw ConfigError("fit_gaussian: bins must be positive");
  GaussianFit f;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  f.lo = *lo;
  f.hi = *hi;
  if (!(f.hi > f.lo)) throw DegenerateError("fit_gaussian: zero-variance map");
  double acc = 0;
  for (double v : values) acc += v;
  f.mean = acc / static_cast<double>(values.size());
  double var = 0;
  for (double v : values) var += (v - f.mean) * (v - f.mean);
  f.sd = std::sqrt(var / static_cast<double>(values.size()));
  f.histogram.assign(bins, 0.0);
  const double width = (f.hi - f.lo) / bins;
  for (double v : values) {
    const int b = std::min(bins - 1, static_cast<int>((v - f.lo) / width));
    f.histogram[b] += 1;
  }
  return f;
}

double gaussian_overlap(double m1, double s1, double m2, double s2) {
  if (!(s1 > 0) || !(s2 > 0)) throw DegenerateError("gaussian_overlap: standard deviations must be positive");
  if (std::abs(s1 - s2) <= 1e-12 * std::max(s1, s2)) {
    if (m1 == m2) return 1.0;
    const double s = 0.5 * (s1 + s2);
    return 2.0 * normal_cdf(-std::abs(m1 - m2) / (2.0 * s), 0.0, 1.0);
  }
  // log p1 = log p2  <=>  a x^2 + b x + c = 0
  const double a = 1.0 / (2 * s2 * s2) - 1.0 / (2 * s1 * s1);
  const double b = m1 / (s1 * s1) - m2 / (s2 * s2);
  const double c = m2 * m2 / (2 * s2 * s2) - m1 * m1 / (2 * s1 * s1) + std::log(s2 / s1);
  const double disc = std::max(0.0, b * b - 4 * a * c);
  const double q = -0.5 * (b + std::copysign(std::sqrt(disc), b));
  double r1 = q / a, r2 = q != 0 ? c / q : r1;
  if (r1 > r2) std::swap(r1, r2);

  const double edges[] = {-INFINITY, r1, r2, INFINITY};
  const double probes[] = {r1 - 1.0, 0.5 * (r1 + r2), r2 + 1.0};
  double total = 0;
  for (int i = 0; i < 3; ++i) {
    if (!(edges[i + 1] > edges[i])) continue;
    const bool first_lower = normal_pdf(probes[i], m1, s1) <= normal_pdf(probes[i], m2, s2);
    const double m = first_lower ? m1 : m2, s = first_lower ? s1 : s2;
    total += normal_cdf(edges[i + 1], m, s) - normal_cdf(edges[i], m, s);
  }
  return std::clamp(total, 0.0, 1.0);
}

double consistency_score(const GaussianFit& a, const GaussianFit& b) {
  return 1.0 - gaussian_overlap(a.mean, a.sd, b.mean, b.sd);
}

std::vector<double> histogram_consistency(const std::vector<Plane>& maps) {
  if (maps.size() < 2) throw ConfigError("histogram_consistency: need at least two maps");
  std::vector<GaussianFit> fits;
  for (const auto& m : maps) {
    require_same_shape(maps.front(), m, "histogram_consistency");
    fits.push_back(fit_gaussian(m.data));
  }
  std::vector<double> scores;
  for (size_t i = 0; i + 1 < fits.size(); ++i) scores.push_back(consistency_score(fits[i], fits[i + 1]));
  return scores;
}

Plane layer1_stiffness(const Image& image, double force_n, double k_g, const ModelParams& p) {
  if (!p.population) throw ConfigError("model has no stiffness population");
  ad::NoGradGuard no_grad;
  const auto r = forward(image, force_n, zscore(k_g, *p.population), p);
  const auto& t = r.stiffness_updated[0].value();
  Plane out(t.dim(2), t.dim(1));
  out.data = t.data;
  return out;
}

FlowField linear_scaling_field(int width, int height, double surface_disp_px) {
  return scaled(make_axial_ramp_field(width, height, std::abs(surface_disp_px)), -1.0);
}

Image linear_scaling_baseline(const Image& image, double surface_disp_px) {
  return warp(image, linear_scaling_field(image.width(), image.height(), surface_disp_px));
}

double surface_displacement_estimate(const FlowField& gt) {
  const int y = gt.height() - 1;
  double acc = 0;
  for (int x = 0; x < gt.width(); ++x) acc += std::abs(gt.dy.at(x, y));
  return acc / gt.width();
}

EvalSample load_eval_sample(const SampleRecord& r, const std::filesystem::path& data_dir) {
  EvalSample s;
  s.record = &r;
  try {
    s.deformed = read_pgm(data_dir / r.image_path);
    s.original = read_pgm(data_dir / r.original_path);
    s.gt = read_dff(data_dir / r.flow_gt_path);
    if (!r.mask_path.empty() && !r.deformed_mask_path.empty()) {
      s.mask = read_mask(data_dir / r.mask_path);
      s.deformed_mask = read_mask(data_dir / r.deformed_mask_path);
    }
    if (!r.interfaces_path.empty() && !r.deformed_interfaces_path.empty()) {
      s.interfaces = read_polylines_csv(data_dir / r.interfaces_path);
      s.deformed_interfaces = read_polylines_csv(data_dir / r.deformed_interfaces_path);
    }
  } catch (const std::exception& e) {
    throw FormatError("sample " + r.id + ": " + e.what());
  }
  if (s.gt.width() != s.deformed.width() || s.gt.height() != s.deformed.height() ||
      !s.original.pixels.same_shape(s.deformed.pixels))
    throw ShapeError("sample " + r.id + ": files disagree in dimensions");
  return s;
}

Predictor model_predictor(const ModelParams& p) {
  return [&p](const EvalSample& s) {
    return predict_flow(s.deformed, s.record->force_n, s.record->global_stiffness_n_per_mm, p);
  };
}

Predictor gt_predictor() {
  return [](const EvalSample& s) { return s.gt; };
}

Predictor identity_predictor() {
  return [](const EvalSample& s) { return FlowField(s.gt.width(), s.gt.height()); };
}

Predictor linear_scaling_predictor() {
  return [](const EvalSample& s) {
    return linear_scaling_field(s.gt.width(), s.gt.height(), surface_displacement_estimate(s.gt));
  };
}

int force_bin(double force_n) { return force_n <= 0 ? 0 : static_cast<int>(std::ceil(force_n - 1e-9)); }

std::vector<int> EvalReport::bins() const {
  std::vector<int> out;
  for (const auto& [b, _] : values) out.push_back(b);
  return out;
}

std::optional<MetricSummary> EvalReport::summary(int bin, const std::string& metric) const {
  const auto b = values.find(bin);
  if (b == values.end()) return std::nullopt;
  const auto m = b->second.find(metric);
  if (m == b->second.end() || m->second.empty()) return std::nullopt;
  return MetricSummary{mean_of(m->second), sd_of(m->second), static_cast<int>(m->second.size())};
}

std::optional<MetricSummary> EvalReport::overall(const std::string& metric) const {
  std::vector<double> all;
  for (const auto& [_, metrics] : values) {
    const auto m = metrics.find(metric);
    if (m != metrics.end()) all.insert(all.end(), m->second.begin(), m->second.end());
  }
  if (all.empty()) return std::nullopt;
  return MetricSummary{mean_of(all), sd_of(all), static_cast<int>(all.size())};
}

EvalReport evaluate_run(const DatasetManifest& m, const std::filesystem::path& data_dir, const std::string& split,
                        const Predictor& predict, const EvalOptions& opts) {
  std::vector<const SampleRecord*> recs;
  for (const auto* r : m.split(split)) {
    if (opts.force_bins.empty() ||
        std::find(opts.force_bins.begin(), opts.force_bins.end(), force_bin(r->force_n)) != opts.force_bins.end())
      recs.push_back(r);
  }
  if (recs.empty()) throw ConfigError("no records to evaluate in split '" + split + "'");
  std::sort(recs.begin(), recs.end(), [](const auto* a, const auto* b) { return a->id < b->id; });
  if (opts.error_map_dir) std::filesystem::create_directories(*opts.error_map_dir);

  std::vector<SampleOutcome> outcomes(recs.size());
  std::vector<std::exception_ptr> errors(recs.size());
  auto worker = [&](size_t job, size_t jobs) {
    for (size_t i = job; i < recs.size(); i += jobs) {
      try {
        outcomes[i] = evaluate_sample(*recs[i], data_dir, predict, opts);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const size_t jobs = static_cast<size_t>(std::max(opts.jobs, 1));
  if (jobs == 1) {
    worker(0, 1);
  } else {
    std::vector<std::thread> threads;
    for (size_t j = 0; j < jobs; ++j) threads.emplace_back(worker, j, jobs);
    for (auto& t : threads) t.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  EvalReport rep;
  for (const auto& o : outcomes) {
    for (const auto& [name, v] : o.metrics) rep.values[o.bin][name].push_back(v);
    rep.warnings.insert(rep.warnings.end(), o.warnings.begin(), o.warnings.end());
  }
  return rep;
}

void write_report_csv(const std::filesystem::path& path, const EvalReport& report) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write report: " + path.string());
  out << std::setprecision(9) << "force_bin,metric,mean,sd,n\n";
  std::vector<std::string> names;
  for (const auto& [bin, metrics] : report.values) {
    for (const auto& [name, _] : metrics) {
      if (std::find(names.begin(), names.end(), name) == names.end()) names.push_back(name);
      const auto s = *report.summary(bin, name);
      out << bin << ',' << name << ',' << s.mean << ',' << s.sd << ',' << s.n << '\n';
    }
  }
  for (const auto& name : names) {
    const auto s = *report.overall(name);
    out << "all," << name << ',' << s.mean << ',' << s.sd << ',' << s.n << '\n';
  }
}

}  // namespace defcor
