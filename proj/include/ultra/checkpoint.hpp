#pragma once

// ULTC checkpoint: run configuration, model parameters, optimizer state and
// trainer bookkeeping. All integers and reals are little-endian.
//
//   magic "ULTC" | u16 version = 1
//   u32 config length | UTF-8 config text (serialize_run_config)
//   u64 parameter count | f64 x count      (UltraModel::parameters order)
//   u64 adam step | u32 tensor count | per tensor: u64 length, f64 m[length], f64 v[length]
//   u32 completed epochs
//   f64 norm mean | f64 norm std | f64 best val mse | u32 best epoch

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "ultra/config.hpp"
#include "ultra/trainer.hpp"

namespace ultra {

inline constexpr char kCheckpointMagic[4] = {'U', 'L', 'T', 'C'};
inline constexpr std::uint16_t kCheckpointVersion = 1;

struct Checkpoint {
  RunConfig config;
  TrainState state;
};

std::vector<std::uint8_t> encode_checkpoint(const RunConfig& config, const TrainState& state);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, const RunConfig& config,
                     const TrainState& state);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace ultra
