#include "ultra/augment.hpp"

#include <algorithm>
#include <stdexcept>

#include "ultra/rng.hpp"

namespace ultra {
namespace {

bool is_prob(double p) { return p >= 0.0 && p <= 1.0; }

}  // namespace

void AugmentationSpec::validate() const {
  if (!is_prob(hflip_prob) || !is_prob(vflip_prob) || !is_prob(rot90_prob) ||
      !is_prob(noise_prob)) {
    throw std::invalid_argument("AugmentationSpec: probabilities must be in [0, 1]");
  }
  if (!(noise_std >= 0.0)) throw std::invalid_argument("AugmentationSpec: noise_std < 0");
}

data::Patch flip_horizontal(const data::Patch& patch) {
  data::Patch out(patch.height, patch.width);
  for (std::size_t r = 0; r < patch.height; ++r) {
    for (std::size_t c = 0; c < patch.width; ++c) out.at(r, c) = patch.at(r, patch.width - 1 - c);
  }
  return out;
}

data::Patch flip_vertical(const data::Patch& patch) {
  data::Patch out(patch.height, patch.width);
  for (std::size_t r = 0; r < patch.height; ++r) {
    for (std::size_t c = 0; c < patch.width; ++c) out.at(r, c) = patch.at(patch.height - 1 - r, c);
  }
  return out;
}

data::Patch rotate90(const data::Patch& patch, unsigned quarter_turns) {
  quarter_turns %= 4;
  if (quarter_turns == 0) return patch;
  if (quarter_turns == 2) return flip_vertical(flip_horizontal(patch));
  const std::size_t h = patch.height;
  const std::size_t w = patch.width;
  data::Patch out(w, h);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      if (quarter_turns == 1) {
        out.at(w - 1 - c, r) = patch.at(r, c);
      } else {
        out.at(c, h - 1 - r) = patch.at(r, c);
      }
    }
  }
  return out;
}

data::Patch augment(const data::Patch& patch, const AugmentationSpec& spec, std::uint64_t seed) {
  Rng rng(seed);
  // draw every decision up front so the stream layout does not depend on which fire
  const bool hflip = rng.bernoulli(spec.hflip_prob);
  const bool vflip = rng.bernoulli(spec.vflip_prob);
  const bool rotate = rng.bernoulli(spec.rot90_prob);
  const auto turn_pick = static_cast<unsigned>(rng.below(3));
  const bool noise = rng.bernoulli(spec.noise_prob) && spec.noise_std > 0.0;

  data::Patch out = patch;
  if (hflip) out = flip_horizontal(out);
  if (vflip) out = flip_vertical(out);
  if (rotate) out = rotate90(out, out.height == out.width ? turn_pick + 1 : 2);
  if (noise) {
    for (float& p : out.pixels) {
      p = static_cast<float>(std::clamp(p + spec.noise_std * rng.normal(), 0.0, 1.0));
    }
  }
  return out;
}

}  // namespace ultra
