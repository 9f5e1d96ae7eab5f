#pragma once

#include <cstdint>

#include "ultra/data.hpp"

namespace ultra {

/// Independent per-branch input perturbations. Each transform fires with its
/// own probability; rotation picks a quarter turn uniformly from {90, 180, 270}
/// (only 180 for non-square patches).
struct AugmentationSpec {
  double hflip_prob = 0.5;
  double vflip_prob = 0.5;
  double rot90_prob = 0.5;
  double noise_prob = 0.5;
  double noise_std = 0.02;

  void validate() const;
  bool is_identity() const noexcept {
    return hflip_prob == 0.0 && vflip_prob == 0.0 && rot90_prob == 0.0 &&
           (noise_prob == 0.0 || noise_std == 0.0);
  }
};

data::Patch augment(const data::Patch& patch, const AugmentationSpec& spec, std::uint64_t seed);

data::Patch flip_horizontal(const data::Patch& patch);
data::Patch flip_vertical(const data::Patch& patch);
/// Counter-clockwise rotation by quarter_turns * 90 degrees.
data::Patch rotate90(const data::Patch& patch, unsigned quarter_turns);

}  // namespace ultra
