#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "defcor/checkpoint.hpp"
#include "defcor/loss.hpp"
#include "defcor/model.hpp"
#include "defcor/phantom.hpp"

namespace defcor {

struct TrainConfig {
  double learning_rate = 1e-4;
  std::int64_t steps = 50000;  // optimizer steps
  int batch_size = 4;
  std::uint64_t seed = 0;
  int crop_width = 256;  // clamped to the image width (rounded down to a multiple of 16)
  bool flip = true;
  std::int64_t checkpoint_interval = 1000;  // 0 disables periodic checkpoints
  std::int64_t validation_interval = 500;
  ModelConfig model;

  void validate() const;
};

struct TrainSample {
  std::string id;
  Image image;  // deformed frame
  FlowField gt;
  double force_n = 0;
  double global_stiffness = 0;
};

/// Loads every record of `split`. Unreadable files abort with the record id and path.
std::vector<TrainSample> load_samples(const DatasetManifest& m, const std::filesystem::path& data_dir,
                                      const std::string& split);

// Population of the per-set fitted stiffness over the training split (one value per image set).
StiffnessPopulation training_population(const DatasetManifest& m);

struct StepMetrics {
  std::int64_t step = 0;  // 1-based index of the completed step
  double loss = 0;        // batch means before the update
  double l1 = 0;
  double smooth = 0;
};

// Sample indices drawn at 0-based step `step`; a fresh permutation of the split per pass.
std::vector<size_t> batch_indices(std::uint64_t seed, std::int64_t step, int batch_size, size_t n);

/// One optimizer step. The batch and its augmentation depend only on
/// (seed, ckpt.step), so a resumed run continues exactly where it stopped.
StepMetrics train_step(Checkpoint& ckpt, const std::vector<TrainSample>& train, const TrainConfig& tcfg,
                       const LossConfig& lcfg);

// Mean full-frame EPE of the model over `samples`.
double validation_epe(const ModelParams& p, const std::vector<TrainSample>& samples);

struct TrainOutputs {
  std::filesystem::path final_checkpoint;
  std::filesystem::path best_checkpoint;  // <out>.best
  std::filesystem::path metrics_csv;      // <out>.metrics.csv
};

TrainOutputs train_outputs(const std::filesystem::path& out);

struct TrainResult {
  Checkpoint final_state;
  double initial_val_epe = -1;
  double best_val_epe = -1;
  std::int64_t best_step = 0;
};

/// Full training run. Writes the final checkpoint to `out`, the best-validation
/// checkpoint next to it, periodic `<out>.step<N>` snapshots and the metrics CSV
/// `step,train_loss,l1,smooth,val_epe`. With `resume`, continues from its step.
TrainResult train_loop(const DatasetManifest& m, const std::filesystem::path& data_dir, const TrainConfig& tcfg,
                       const LossConfig& lcfg, const std::filesystem::path& out,
                       const std::optional<Checkpoint>& resume = std::nullopt, std::ostream* log = nullptr);

}  // namespace defcor
