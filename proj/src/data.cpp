#include "ultra/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "binary_io.hpp"
#include "ultra/error.hpp"
#include "ultra/rng.hpp"

namespace ultra::io {

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path + " for reading");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("error reading " + path);
  return bytes;
}

void write_file(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("error writing " + path);
}

void write_text(const std::string& path, std::string_view text) {
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace ultra::io

namespace ultra::data {
namespace {

bool in_unit(double x) { return x >= 0.0 && x <= 1.0; }

void check_interval(const Interval& iv, const char* name, bool unit) {
  if (!(iv.lo <= iv.hi) || (unit && !(in_unit(iv.lo) && in_unit(iv.hi)))) {
    throw std::invalid_argument(std::string("GeneratorConfig: bad interval ") + name);
  }
}

struct Cell {
  double cy, cx, radius, intensity;
};

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, end);
}

}  // namespace

void Patch::validate() const {
  if (height == 0 || width == 0 || pixels.size() != height * width) {
    throw std::invalid_argument("Patch: pixel count does not match dimensions");
  }
  for (float p : pixels) {
    if (!(p >= 0.0f && p <= 1.0f)) throw std::invalid_argument("Patch: pixel outside [0, 1]");
  }
}

void GeneratorConfig::validate() const {
  if (height == 0 || width == 0 || height > 0xffff || width > 0xffff) {
    throw std::invalid_argument("GeneratorConfig: bad patch size");
  }
  if (min_cells == 0 || min_cells > max_cells) {
    throw std::invalid_argument("GeneratorConfig: need 1 <= min_cells <= max_cells");
  }
  check_interval(malignant_band, "malignant_band", true);
  check_interval(benign_band, "benign_band", true);
  check_interval(malignant_prob, "malignant_prob", true);
  check_interval(radius, "radius", false);
  if (!(malignant_band.hi < benign_band.lo || benign_band.hi < malignant_band.lo)) {
    throw std::invalid_argument("GeneratorConfig: intensity bands must be disjoint");
  }
  if (!(radius.lo >= 0.5) || 2.0 * radius.hi >= static_cast<double>(std::min(height, width))) {
    throw std::invalid_argument("GeneratorConfig: radius must be >= 0.5 and fit in the patch");
  }
  if (!in_unit(background)) throw std::invalid_argument("GeneratorConfig: background outside [0,1]");
  if (!(noise_std >= 0.0)) throw std::invalid_argument("GeneratorConfig: noise_std < 0");
  if (!(p_all_benign >= 0.0 && p_all_malignant >= 0.0 && p_all_benign + p_all_malignant <= 1.0)) {
    throw std::invalid_argument("GeneratorConfig: endpoint masses must be >= 0 and sum <= 1");
  }
}

Sample generate_sample(const GeneratorConfig& config, std::uint64_t seed, std::string id) {
  Rng rng(seed);
  const std::size_t total = config.min_cells + rng.below(config.max_cells - config.min_cells + 1);
  std::size_t malignant = 0;
  const double mode = rng.uniform();
  if (mode < config.p_all_benign) {
    malignant = 0;
  } else if (mode < config.p_all_benign + config.p_all_malignant) {
    malignant = total;
  } else {
    const double q = rng.uniform(config.malignant_prob.lo, config.malignant_prob.hi);
    for (std::size_t i = 0; i < total; ++i) malignant += rng.bernoulli(q) ? 1 : 0;
  }

  const auto h = static_cast<double>(config.height);
  const auto w = static_cast<double>(config.width);
  std::vector<Cell> cells;
  cells.reserve(total);
  for (std::size_t i = 0; i < total; ++i) {
    Cell cell{};
    cell.radius = rng.uniform(config.radius.lo, config.radius.hi);
    const Interval& band = i < malignant ? config.malignant_band : config.benign_band;
    cell.intensity = rng.uniform(band.lo, band.hi);
    // rejection-sample a position that keeps disks apart; after the attempt
    // budget the last candidate is kept even if it overlaps
    for (int attempt = 0; attempt < 64; ++attempt) {
      if (config.snap_centers) {
        const auto reach = static_cast<std::size_t>(std::floor(cell.radius));
        cell.cy = static_cast<double>(reach + rng.below(config.height - 2 * reach)) + 0.5;
        cell.cx = static_cast<double>(reach + rng.below(config.width - 2 * reach)) + 0.5;
      } else {
        cell.cy = rng.uniform(cell.radius, h - cell.radius);
        cell.cx = rng.uniform(cell.radius, w - cell.radius);
      }
      const bool clear = std::all_of(cells.begin(), cells.end(), [&](const Cell& o) {
        const double d = std::hypot(o.cy - cell.cy, o.cx - cell.cx);
        return d >= o.radius + cell.radius + 0.5;
      });
      if (clear) break;
    }
    cells.push_back(cell);
  }

  Patch patch(config.height, config.width);
  for (std::size_t r = 0; r < config.height; ++r) {
    for (std::size_t c = 0; c < config.width; ++c) {
      const double py = static_cast<double>(r) + 0.5;
      const double px = static_cast<double>(c) + 0.5;
      double value = config.background;
      for (const Cell& cell : cells) {
        if (std::hypot(py - cell.cy, px - cell.cx) <= cell.radius) value = cell.intensity;
      }
      if (config.noise_std > 0.0) value += config.noise_std * rng.normal();
      patch.at(r, c) = static_cast<float>(std::clamp(value, 0.0, 1.0));
    }
  }
  return Sample{std::move(id), std::move(patch),
                static_cast<double>(malignant) / static_cast<double>(total)};
}

Dataset generate(const GeneratorConfig& config, std::size_t count) {
  config.validate();
  if (count == 0) throw std::invalid_argument("generate: count must be >= 1");
  const int digits = std::max(4, static_cast<int>(std::to_string(count - 1).size()));
  Dataset out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::string id = std::to_string(i);
    id.insert(0, static_cast<std::size_t>(std::max(0, digits - static_cast<int>(id.size()))), '0');
    out.push_back(generate_sample(config, config.seed ^ i, "p" + id));
  }
  return out;
}

NormStats compute_norm_stats(const Dataset& train) {
  if (train.empty()) throw std::invalid_argument("compute_norm_stats: empty training set");
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& s : train) {
    for (float p : s.patch.pixels) sum += p;
    n += s.patch.pixels.size();
  }
  const double mean = sum / static_cast<double>(n);
  double sq = 0.0;
  for (const auto& s : train) {
    for (float p : s.patch.pixels) sq += (p - mean) * (p - mean);
  }
  const double sd = std::sqrt(sq / static_cast<double>(n));
  if (!(sd > 1e-12)) {
    throw DegenerateInput("pixel std", "compute_norm_stats: training pixels are constant");
  }
  return {mean, sd};
}

void apply_norm_into(const Patch& patch, const NormStats& stats, std::span<double> out) {
  if (out.size() != patch.pixels.size()) throw std::invalid_argument("apply_norm: size mismatch");
  const double inv = 1.0 / stats.std;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (patch.pixels[i] - stats.mean) * inv;
}

std::vector<double> apply_norm(const Patch& patch, const NormStats& stats) {
  if (!(stats.std > 0.0)) throw std::invalid_argument("apply_norm: std must be positive");
  std::vector<double> out(patch.pixels.size());
  apply_norm_into(patch, stats, out);
  return out;
}

Splits split(const Dataset& dataset, const SplitFractions& f, std::uint64_t seed) {
  if (!(f.train >= 0.0 && f.val >= 0.0 && f.test >= 0.0) ||
      std::abs(f.train + f.val + f.test - 1.0) > 1e-9) {
    throw std::invalid_argument("split: fractions must be non-negative and sum to 1");
  }
  const std::size_t n = dataset.size();
  const auto take = [n](double frac) {
    return static_cast<std::size_t>(std::floor(frac * static_cast<double>(n) + 1e-9));
  };
  const std::size_t n_val = take(f.val);
  const std::size_t n_test = std::min(take(f.test), n - n_val);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

  Splits out;
  const std::size_t n_train = n - n_val - n_test;
  for (std::size_t i = 0; i < n; ++i) {
    const Sample& s = dataset[order[i]];
    if (i < n_train) {
      out.train.push_back(s);
    } else if (i < n_train + n_val) {
      out.val.push_back(s);
    } else {
      out.test.push_back(s);
    }
  }
  return out;
}

std::vector<std::uint8_t> encode_dataset(const Dataset& dataset) {
  if (dataset.size() > 0xffffffffULL) throw std::invalid_argument("encode_dataset: too many samples");
  io::ByteWriter w;
  w.put_bytes(std::string_view(kDatasetMagic, 4));
  w.put_u16(kDatasetVersion);
  w.put_u32(static_cast<std::uint32_t>(dataset.size()));
  for (const auto& s : dataset) {
    if (s.id.size() > 0xffff) throw std::invalid_argument("encode_dataset: id too long");
    if (s.patch.height > 0xffff || s.patch.width > 0xffff ||
        s.patch.pixels.size() != s.patch.height * s.patch.width) {
      throw std::invalid_argument("encode_dataset: bad patch shape for " + s.id);
    }
    w.put_u16(static_cast<std::uint16_t>(s.id.size()));
    w.put_bytes(s.id);
    w.put_u16(static_cast<std::uint16_t>(s.patch.height));
    w.put_u16(static_cast<std::uint16_t>(s.patch.width));
    w.put_f64(s.label);
    for (float p : s.patch.pixels) w.put_f32(p);
  }
  return std::move(w.bytes());
}

Dataset decode_dataset(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes, "ULDS");
  const std::string magic = r.get_string(4, "magic");
  if (magic != std::string_view(kDatasetMagic, 4)) r.fail("bad magic", 0);
  const std::size_t version_at = r.offset();
  const std::uint16_t version = r.get_u16("version");
  if (version != kDatasetVersion) {
    throw VersionError("ULDS: unsupported version " + std::to_string(version), version_at);
  }
  const std::uint32_t count = r.get_u32("sample count");
  Dataset out;
  out.reserve(std::min<std::size_t>(count, r.remaining() / 16 + 1));
  for (std::uint32_t i = 0; i < count; ++i) {
    Sample s;
    const std::uint16_t id_len = r.get_u16("id length");
    s.id = r.get_string(id_len, "id");
    const std::size_t shape_at = r.offset();
    const std::size_t h = r.get_u16("height");
    const std::size_t w = r.get_u16("width");
    if (h == 0 || w == 0) r.fail("zero patch dimension in sample " + std::to_string(i), shape_at);
    const std::size_t label_at = r.offset();
    s.label = r.get_f64("label");
    if (!in_unit(s.label)) r.fail("label outside [0, 1] in sample " + std::to_string(i), label_at);
    r.need(4 * h * w, "pixels");
    s.patch = Patch(h, w);
    for (auto& p : s.patch.pixels) {
      const std::size_t at = r.offset();
      p = r.get_f32("pixel");
      if (!(p >= 0.0f && p <= 1.0f)) r.fail("pixel outside [0, 1]", at);
    }
    out.push_back(std::move(s));
  }
  if (!r.at_end()) r.fail("trailing bytes after last sample", r.offset());
  return out;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  io::write_file(path.string(), encode_dataset(dataset));
}

Dataset load_dataset(const std::filesystem::path& path) {
  return decode_dataset(io::read_file(path.string()));
}

std::string labels_csv(const Dataset& dataset) {
  std::string out = "id,tc\n";
  for (const auto& s : dataset) {
    out += s.id;
    out += ',';
    out += format_double(s.label);
    out += '\n';
  }
  return out;
}

void save_labels_csv(const Dataset& dataset, const std::filesystem::path& path) {
  io::write_text(path.string(), labels_csv(dataset));
}

std::vector<LabelRow> parse_labels_csv(const std::string& text) {
  std::vector<LabelRow> rows;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos || line.find(',', comma + 1) != std::string::npos) {
      throw std::invalid_argument("labels CSV line " + std::to_string(line_no) +
                                  ": expected two fields");
    }
    const std::string id = line.substr(0, comma);
    const std::string value = line.substr(comma + 1);
    if (line_no == 1 && value == "tc") continue;
    double tc = 0.0;
    const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), tc);
    if (ec != std::errc() || ptr != value.data() + value.size() || !in_unit(tc)) {
      throw std::invalid_argument("labels CSV line " + std::to_string(line_no) + ": bad tc value");
    }
    rows.push_back({id, tc});
  }
  return rows;
}

}  // namespace ultra::data
