#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "defcor/field.hpp"
#include "defcor/model.hpp"
#include "defcor/phantom.hpp"

namespace defcor {

/// 100 * 2|G n S| / (|G| + |S|) over masks thresholded at 0.5.
/// Throws DegenerateError if either mask is empty.
double dice(const Plane& gt, const Plane& other);

Plane threshold(const Plane& p, double level = 0.5);

struct TlaResult {
  std::vector<double> ha;  // per sampled point, pooled over interfaces
  std::vector<double> va;
  std::vector<double> ha_per_interface;  // mean per interface
  std::vector<double> va_per_interface;
  double ha_mean = 0, ha_sd = 0;
  double va_mean = 0, va_sd = 0;
};

/// Target localization accuracy.
///
/// Each GT polyline is sampled every `step_px` in x; the other polyline is read
/// at the same segment and segment fraction (vertices correspond one to one).
/// Per-point accuracy is max(0, 1 - |L - L_gt| / L_gt) for the x (HA) and y (VA)
/// coordinates; coordinates with L_gt = 0 are skipped.
TlaResult tla(const std::vector<Polyline>& gt, const std::vector<Polyline>& other, double step_px = 5.0);

// Moves every vertex from the deformed frame into the frame corrected by `flow`.
std::vector<Polyline> correct_polylines(const std::vector<Polyline>& deformed, const FlowField& flow);

struct GaussianFit {
  double mean = 0;
  double sd = 0;
  double lo = 0, hi = 0;  // histogram range
  std::vector<double> histogram;  // counts per bin
};

// Sample-moment normal fit plus a `bins`-bin histogram over [min, max]. Zero variance is degenerate.
GaussianFit fit_gaussian(std::span<const double> values, int bins = 1000);

/// Area under min(N(m1,s1), N(m2,s2)), from the density crossing points and the normal CDF.
double gaussian_overlap(double m1, double s1, double m2, double s2);

// 1 - overlap of the two fits.
double consistency_score(const GaussianFit& a, const GaussianFit& b);

// Scores of each consecutive pair of maps.
std::vector<double> histogram_consistency(const std::vector<Plane>& maps);

// Layer-1 stiffness map after the patient update, at quarter resolution.
Plane layer1_stiffness(const Image& image, double force_n, double k_g, const ModelParams& p);

// Correction for a compression growing linearly with depth: dy = -d * y / (H - 1).
FlowField linear_scaling_field(int width, int height, double surface_disp_px);
Image linear_scaling_baseline(const Image& image, double surface_disp_px);

// Depth-compression estimate used by the baseline: mean |dy| of the field's deepest row.
double surface_displacement_estimate(const FlowField& gt);

struct EvalSample {
  const SampleRecord* record = nullptr;
  Image deformed;
  Image original;
  FlowField gt;
  std::optional<Plane> mask;
  std::optional<Plane> deformed_mask;
  std::optional<std::vector<Polyline>> interfaces;
  std::optional<std::vector<Polyline>> deformed_interfaces;
};

EvalSample load_eval_sample(const SampleRecord& r, const std::filesystem::path& data_dir);

using Predictor = std::function<FlowField(const EvalSample&)>;

Predictor model_predictor(const ModelParams& p);  // keeps a reference to p
Predictor gt_predictor();
Predictor identity_predictor();
Predictor linear_scaling_predictor();

// Force bin of a frame: ceil(force), 0 for no load.
int force_bin(double force_n);

struct MetricSummary {
  double mean = 0;
  double sd = 0;
  int n = 0;
};

struct EvalReport {
  // bin -> metric -> per-sample values in sample-id order
  std::map<int, std::map<std::string, std::vector<double>>> values;
  std::vector<std::string> warnings;

  std::vector<int> bins() const;
  std::optional<MetricSummary> summary(int bin, const std::string& metric) const;
  // Pools every bin.
  std::optional<MetricSummary> overall(const std::string& metric) const;
};

struct EvalOptions {
  std::vector<int> force_bins;  // empty: every bin present
  int jobs = 1;
  std::optional<std::filesystem::path> error_map_dir;  // per-sample PPM of pred - gt
  double error_map_scale_px = 5.0;
};

/// Per-sample EPE (with Per thresholds of 10/15/20 px at the reference
/// 45 mm / 384 px spacing, converted to this frame's spacing), NCC, Dice of
/// the transported inclusion mask and TLA of the transported interfaces,
/// for both the deformed frame and the frame corrected by `predict`.
EvalReport evaluate_run(const DatasetManifest& m, const std::filesystem::path& data_dir, const std::string& split,
                        const Predictor& predict, const EvalOptions& opts = {});

// CSV `force_bin,metric,mean,sd,n`; the pooled rows use force_bin "all".
void write_report_csv(const std::filesystem::path& path, const EvalReport& report);

}  // namespace defcor
