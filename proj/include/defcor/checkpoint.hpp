#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>

#include "defcor/model.hpp"
#include "defcor/optim.hpp"

namespace defcor {

struct Checkpoint {
  ModelParams params;
  std::optional<AdamState> adam;
  std::int64_t step = 0;
  double best_val_epe = -1;  // negative when unknown
};

inline constexpr int kCheckpointVersion = 1;

/// Layout: 8-byte magic "DEFCORCK", u64 LE header length, JSON header
/// (format version, architecture, stiffness population, blob table, training
/// state), then every blob in table order as f32 LE values.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace defcor
