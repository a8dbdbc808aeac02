#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "defcor/loss.hpp"
#include "defcor/phantom.hpp"
#include "defcor/train.hpp"

namespace defcor {

inline constexpr int kConfigVersion = 1;

struct EvalConfig {
  std::vector<int> force_bins = {1, 2, 3, 4, 5, 6};
  std::string split = "test";
  bool write_error_maps = true;
  double error_map_scale_px = 5.0;
};

struct IoConfig {
  int jobs = 1;
};

/// JSON document with sections synth / train / loss / eval / io. Unknown keys
/// are rejected. The top-level `seed` drives every random stream.
struct RunConfig {
  int config_version = kConfigVersion;
  std::uint64_t seed = 1234;
  SynthConfig synth;
  TrainConfig train;
  LossConfig loss;
  EvalConfig eval;
  IoConfig io;

  // Copies seed and jobs into the sections that consume them.
  void propagate();
};

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::filesystem::path& path);
std::string dump_run_config(const RunConfig& cfg);

}  // namespace defcor
