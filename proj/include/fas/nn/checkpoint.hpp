// Checkpoint container: <stem>.json manifest (architecture, seed, epoch,
// parameter layout) plus <stem>.bin raw float32 parameters in registration
// order.
#pragma once

#include <filesystem>

#include "fas/io.hpp"
#include "fas/nn/unet.hpp"

namespace fas::nn {

struct CheckpointMeta {
  std::uint64_t seed = 0;
  int epoch = 0;
  Json extra;  // caller-owned annotations (model kind, geometry, ...)
};

void save_checkpoint(const std::filesystem::path& stem, const UNet& net,
                     const CheckpointMeta& meta);

// Reconstructs the network from the manifest; returns the meta alongside.
UNet load_checkpoint(const std::filesystem::path& stem, CheckpointMeta* meta = nullptr);

}  // namespace fas::nn
