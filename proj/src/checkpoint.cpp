#include "ultra/checkpoint.hpp"

#include <stdexcept>
#include <string>

#include "binary_io.hpp"
#include "ultra/error.hpp"

namespace ultra {

std::vector<std::uint8_t> encode_checkpoint(const RunConfig& config, const TrainState& state) {
  io::ByteWriter w;
  w.put_bytes(std::string_view(kCheckpointMagic, 4));
  w.put_u16(kCheckpointVersion);
  const std::string cfg = serialize_run_config(config);
  w.put_u32(static_cast<std::uint32_t>(cfg.size()));
  w.put_bytes(cfg);

  const auto params = state.model.parameters();
  std::uint64_t count = 0;
  for (const auto& p : params) count += p.size();
  w.put_u64(count);
  for (const auto& p : params) {
    for (double x : p) w.put_f64(x);
  }

  w.put_u64(state.adam.t);
  w.put_u32(static_cast<std::uint32_t>(state.adam.m.size()));
  for (std::size_t i = 0; i < state.adam.m.size(); ++i) {
    w.put_u64(state.adam.m[i].size());
    for (double x : state.adam.m[i]) w.put_f64(x);
    for (double x : state.adam.v[i]) w.put_f64(x);
  }

  w.put_u32(static_cast<std::uint32_t>(state.epoch));
  w.put_f64(state.model.norm().mean);
  w.put_f64(state.model.norm().std);
  w.put_f64(state.best_val_mse);
  w.put_u32(static_cast<std::uint32_t>(state.best_epoch));
  return std::move(w.bytes());
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes, "ULTC");
  if (r.get_string(4, "magic") != std::string_view(kCheckpointMagic, 4)) r.fail("bad magic", 0);
  const std::size_t version_at = r.offset();
  const std::uint16_t version = r.get_u16("version");
  if (version != kCheckpointVersion) {
    throw VersionError("ULTC: unsupported version " + std::to_string(version), version_at);
  }
  const std::uint32_t cfg_len = r.get_u32("config length");
  const std::size_t cfg_at = r.offset();
  const std::string cfg_text = r.get_string(cfg_len, "config");
  RunConfig config;
  try {
    config = parse_run_config(cfg_text);
    config.validate();
  } catch (const ConfigError& e) {
    throw ParseError(std::string("ULTC: embedded config rejected: ") + e.what(), cfg_at);
  }

  UltraModel model(resolved_model_config(config));
  auto params = model.parameters();
  std::uint64_t expected = 0;
  for (const auto& p : params) expected += p.size();
  const std::size_t count_at = r.offset();
  const std::uint64_t count = r.get_u64("parameter count");
  if (count != expected) {
    throw VersionError("ULTC: " + std::to_string(count) + " parameters stored, config implies " +
                           std::to_string(expected),
                       count_at);
  }
  r.need(count * 8, "parameters");
  for (auto& p : params) {
    for (double& x : p) x = r.get_f64("parameter");
  }

  nn::AdamState adam(config.train.adam);
  adam.t = r.get_u64("adam step");
  const std::uint32_t tensors = r.get_u32("adam tensor count");
  for (std::uint32_t i = 0; i < tensors; ++i) {
    const std::uint64_t len = r.get_u64("adam tensor length");
    r.need(len * 16, "adam moments");
    std::vector<double> m(len), v(len);
    for (double& x : m) x = r.get_f64("adam m");
    for (double& x : v) x = r.get_f64("adam v");
    adam.m.push_back(std::move(m));
    adam.v.push_back(std::move(v));
  }

  const std::uint32_t epoch = r.get_u32("epoch");
  data::NormStats norm;
  const std::size_t norm_at = r.offset();
  norm.mean = r.get_f64("norm mean");
  norm.std = r.get_f64("norm std");
  if (!(norm.std > 0.0)) r.fail("normalization std must be positive", norm_at);
  model.set_norm(norm);
  const double best_mse = r.get_f64("best val mse");
  const std::uint32_t best_epoch = r.get_u32("best epoch");
  if (!r.at_end()) r.fail("trailing bytes", r.offset());

  TrainState state{std::move(model), std::move(adam), epoch, best_mse, best_epoch};
  return Checkpoint{std::move(config), std::move(state)};
}

void save_checkpoint(const std::filesystem::path& path, const RunConfig& config,
                     const TrainState& state) {
  io::write_file(path.string(), encode_checkpoint(config, state));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(io::read_file(path.string()));
}

}  // namespace ultra
