#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "defcor/calib.hpp"
#include "defcor/field.hpp"
#include "defcor/image.hpp"

namespace defcor {

// SplitMix64 finalizer: derives independent child seeds from (seed, index).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index);

struct TissueLayer {
  double depth_fraction = 1.0;  // lower boundary, as a fraction of the image height
  double compliance = 1.0;      // relative compliance weight per row
  double mean_intensity = 100;
  double speckle_amplitude = 0.3;
  // Lateral waviness of the lower interface, in pixels and pixels-per-cycle.
  double wave_amplitude = 0;
  double wave_period = 64;
  double wave_phase = 0;
};

/// Rigid disk (bone). Compliance is zero inside; an acoustic shadow darkens the
/// columns below it.
struct RigidInclusion {
  double cx = 0, cy = 0, radius = 8;
  double intensity = 200;
  double shadow_factor = 0.35;
};

struct PhantomSpec {
  int width = 96;
  int height = 128;
  std::vector<TissueLayer> layers;
  std::optional<RigidInclusion> inclusion;
  double interface_brightness = 60;
  double depth_mm = 45.0;
  // N/mm; a column without inclusion compresses by force / stiffness mm in total.
  double global_stiffness = 1.80;
  double lateral_coupling = 0.1;
  std::uint64_t rng_seed = 0;

  double spacing_mm_per_px() const { return depth_mm / height; }
  void validate() const;
};

struct Point2 {
  double x = 0, y = 0;
};

using Polyline = std::vector<Point2>;

struct RenderedPhantom {
  Image image;
  Plane mask;  // rigid-inclusion mask, values 0/1
  std::vector<Polyline> interfaces;
};

// Forearm-like and upper-arm-like global stiffness (N/mm): mean and SD.
inline constexpr double kForearmStiffness = 1.80, kForearmStiffnessSd = 0.48;
inline constexpr double kUpperArmStiffness = 0.78, kUpperArmStiffnessSd = 0.03;

/// Three-layer (fat / muscle / deep) phantom with no inclusion.
PhantomSpec default_phantom_spec(int width, int height, std::uint64_t seed);

RenderedPhantom render_phantom(const PhantomSpec& spec);

struct CompressionResult {
  Image deformed;
  FlowField gt;  // correction field: warp(deformed, gt) ~ original
};

/// Per-pixel compliance in px/N (zero inside the inclusion).
Plane compliance_map(const PhantomSpec& spec);

/// Axial compression accumulated from the probe face downwards plus a small
/// lateral component. At force 0 the result is the exact identity.
CompressionResult simulate_compression(const PhantomSpec& spec, const Image& image, double force_n);

// Transports an annotation into the deformed frame of a correction field.
Plane deform_mask(const Plane& mask, const FlowField& gt);
std::vector<Polyline> deform_polylines(const std::vector<Polyline>& lines, const FlowField& gt);

// dx = 0, dy = max_disp_px * y / (H - 1).
FlowField make_axial_ramp_field(int width, int height, double max_disp_px);

/// Random elastic field: uniform [-1,1] per channel, Gaussian-smoothed with
/// std `sigma`, normalized to unit peak magnitude and scaled to `alpha` px.
FlowField make_elastic_field(int width, int height, double alpha, double sigma, std::uint64_t seed);

// Horizontal flip negates dx; crop keeps the full height.
Image flip_horizontal(const Image& img);
Plane flip_horizontal(const Plane& p);
FlowField flip_horizontal(const FlowField& f);
Plane crop_columns(const Plane& p, int x0, int width);
Image crop_columns(const Image& img, int x0, int width);
FlowField crop_columns(const FlowField& f, int x0, int width);

struct Augmented {
  Image image;
  FlowField flow;
  int crop_x0 = 0;
};

Augmented augment(const Image& image, const FlowField& flow, int crop_width, bool flip, std::uint64_t seed);

// Left fold of compose_flows over pairwise fields.
FlowField build_gt_flow(const std::vector<FlowField>& chain);
FlowField build_gt_flow(const std::vector<std::filesystem::path>& chain);

/// Press-release palpation: force ramps 0 -> peak -> 0 while the probe
/// displacement follows force / stiffness, with measurement noise and a small
/// loading/unloading hysteresis.
struct PalpationConfig {
  double peak_force_n = 15.0;
  double duration_s = 30.0;
  int samples = 300;
  double force_noise_n = 0.25;
  double displacement_noise_mm = 0.05;
  double hysteresis_n = 0.4;
};

PalpationTrace simulate_palpation(double stiffness_n_per_mm, const PalpationConfig& cfg, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Dataset synthesis

struct SynthConfig {
  int image_sets = 72;
  int train_sets = 51;
  int val_sets = 8;
  int width = 96;
  int height = 128;
  std::vector<double> force_bins = {1, 2, 3, 4, 5, 6};  // one frame per bin, force in (bin-1, bin]
  double forearm_fraction = 0.5;
  double lateral_coupling = 0.1;
  PalpationConfig palpation;
  std::uint64_t seed = 1234;
  int jobs = 1;
};

struct SampleRecord {
  std::string id;
  int set_index = 0;
  std::string split;  // train / val / test
  std::string image_path;
  std::string original_path;
  std::string flow_gt_path;
  std::string mask_path;           // inclusion mask in the uncompressed frame
  std::string deformed_mask_path;  // same annotation in the deformed frame
  std::string interfaces_path;     // uncompressed frame
  std::string deformed_interfaces_path;
  std::string palpation_path;
  double force_n = 0;
  double global_stiffness_n_per_mm = 0;  // fitted from the palpation trace
  double true_stiffness_n_per_mm = 0;
};

struct DatasetManifest {
  int width = 0;
  int height = 0;
  std::uint64_t seed = 0;
  std::vector<SampleRecord> records;

  std::vector<const SampleRecord*> split(const std::string& name) const;
};

PhantomSpec random_phantom_spec(int width, int height, double stiffness, std::uint64_t seed);

/// Writes images, flows, masks, interfaces, palpation traces and manifest.json into `out_dir`.
DatasetManifest synthesize_dataset(const SynthConfig& cfg, const std::filesystem::path& out_dir);

void write_manifest(const std::filesystem::path& path, const DatasetManifest& m);
DatasetManifest read_manifest(const std::filesystem::path& path);

void write_polylines_csv(const std::filesystem::path& path, const std::vector<Polyline>& lines);
std::vector<Polyline> read_polylines_csv(const std::filesystem::path& path);

// Masks are PGM 0/255.
void write_mask(const std::filesystem::path& path, const Plane& mask);
Plane read_mask(const std::filesystem::path& path);

}  // namespace defcor
