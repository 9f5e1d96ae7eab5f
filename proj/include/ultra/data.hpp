#pragma once

// Synthetic cellularity patches with exact ground truth, the ULDS dataset
// file format, normalization statistics and deterministic splits.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace ultra::data {

/// Single-channel raster, row-major, values in [0, 1].
struct Patch {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> pixels;

  Patch() = default;
  Patch(std::size_t h, std::size_t w, float fill = 0.0f) : height(h), width(w), pixels(h * w, fill) {}

  float& at(std::size_t r, std::size_t c) { return pixels[r * width + c]; }
  float at(std::size_t r, std::size_t c) const { return pixels[r * width + c]; }
  void validate() const;

  friend bool operator==(const Patch&, const Patch&) = default;
};

struct Sample {
  std::string id;
  Patch patch;
  double label = 0.0;

  friend bool operator==(const Sample&, const Sample&) = default;
};

using Dataset = std::vector<Sample>;

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

struct GeneratorConfig {
  std::size_t height = 16;
  std::size_t width = 16;
  std::size_t min_cells = 2;
  std::size_t max_cells = 6;
  Interval malignant_band{0.80, 0.95};
  Interval benign_band{0.35, 0.50};
  Interval radius{2.5, 2.5};
  // centers on pixel centers, so every disk of a given radius covers the same pixel count
  bool snap_centers = false;
  double background = 0.08;
  double noise_std = 0.03;
  // probability mass forced onto label 0 / label 1
  double p_all_benign = 0.05;
  double p_all_malignant = 0.05;
  // otherwise each cell is malignant with probability q ~ U(q_lo, q_hi)
  Interval malignant_prob{0.0, 1.0};
  std::uint64_t seed = 1;

  void validate() const;
};

Dataset generate(const GeneratorConfig& config, std::size_t count);

/// One sample drawn from the stream seeded with `seed`.
Sample generate_sample(const GeneratorConfig& config, std::uint64_t seed, std::string id);

struct NormStats {
  double mean = 0.0;
  double std = 1.0;
};

NormStats compute_norm_stats(const Dataset& train);
std::vector<double> apply_norm(const Patch& patch, const NormStats& stats);
void apply_norm_into(const Patch& patch, const NormStats& stats, std::span<double> out);

struct SplitFractions {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

struct Splits {
  Dataset train;
  Dataset val;
  Dataset test;
};

/// Shuffled partition; val and test sizes are floor(fraction * n), train takes the rest.
Splits split(const Dataset& dataset, const SplitFractions& fractions, std::uint64_t seed);

inline constexpr char kDatasetMagic[4] = {'U', 'L', 'D', 'S'};
inline constexpr std::uint16_t kDatasetVersion = 1;

std::vector<std::uint8_t> encode_dataset(const Dataset& dataset);
Dataset decode_dataset(std::span<const std::uint8_t> bytes);

void save_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

std::string labels_csv(const Dataset& dataset);
void save_labels_csv(const Dataset& dataset, const std::filesystem::path& path);

struct LabelRow {
  std::string id;
  double tc = 0.0;
};

/// Parses "id,tc" rows; a header row whose second field is "tc" is skipped.
std::vector<LabelRow> parse_labels_csv(const std::string& text);

}  // namespace ultra::data
