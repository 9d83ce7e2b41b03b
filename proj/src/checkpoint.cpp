#include "mind/checkpoint.hpp"

#include <algorithm>

#include "mind/io_util.hpp"

namespace mind {

namespace {

constexpr char kMagic[4] = {'M', 'N', 'D', 'P'};
constexpr std::uint32_t kVersion = 1;

}  // namespace

void save_checkpoint(const Model& model, const std::string& path) {
  const ModelConfig& cfg = model.config();
  io::ByteWriter w;
  w.bytes(kMagic, 4);
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(cfg.d_k));
  for (std::size_t d : cfg.input_dims) w.u32(static_cast<std::uint32_t>(d));
  w.u8(static_cast<std::uint8_t>(cfg.task));
  w.u32(static_cast<std::uint32_t>(cfg.class_count));
  w.u32(static_cast<std::uint32_t>(cfg.stats_depth));
  w.u32(static_cast<std::uint32_t>(cfg.stats_width));
  w.u32(static_cast<std::uint32_t>(cfg.head_depth));
  w.u32(static_cast<std::uint32_t>(cfg.head_width));
  w.f64(cfg.grl_scale);
  w.u64(cfg.seed);
  std::uint8_t mask = 0;
  for (std::size_t i = 0; i < 3; ++i)
    if (cfg.active[i]) mask |= static_cast<std::uint8_t>(1u << i);
  w.u8(mask);
  w.u8(cfg.non_disentangled ? 1 : 0);
  w.u8(cfg.mute_invariant ? 1 : 0);
  w.u8(cfg.mute_specific ? 1 : 0);
  w.u8(cfg.per_modality_recon_decoder ? 1 : 0);

  std::uint32_t groups = 0;
  model.params().for_each(
      [&](const std::string&, const Variable&) { ++groups; });
  w.u32(groups);
  model.params().for_each([&](const std::string& name, const Variable& v) {
    w.str(name);
    w.u32(static_cast<std::uint32_t>(v.shape.size()));
    for (std::size_t d : v.shape) w.u32(static_cast<std::uint32_t>(d));
    for (double x : v.value) w.f64(x);
  });
  io::write_file(path, w.buf);
}

Model load_checkpoint(const std::string& path) {
  std::string raw = io::read_file(path);
  io::ByteReader r(raw, "checkpoint " + path);
  r.need(4);
  if (!std::equal(kMagic, kMagic + 4, raw.data()))
    throw FormatError("bad magic in " + path + ": expected MNDP");
  r.pos = 4;
  std::uint32_t version = r.u32();
  if (version != kVersion)
    throw FormatError("unsupported checkpoint version " +
                      std::to_string(version) + " in " + path);
  ModelConfig cfg;
  cfg.d_k = r.u32();
  for (auto& d : cfg.input_dims) d = r.u32();
  cfg.task = static_cast<TaskKind>(r.u8());
  cfg.class_count = r.u32();
  cfg.stats_depth = r.u32();
  cfg.stats_width = r.u32();
  cfg.head_depth = r.u32();
  cfg.head_width = r.u32();
  cfg.grl_scale = r.f64();
  cfg.seed = r.u64();
  std::uint8_t mask = r.u8();
  for (std::size_t i = 0; i < 3; ++i) cfg.active[i] = (mask >> i) & 1;
  cfg.non_disentangled = r.u8() != 0;
  cfg.mute_invariant = r.u8() != 0;
  cfg.mute_specific = r.u8() != 0;
  cfg.per_modality_recon_decoder = r.u8() != 0;

  Model model(cfg);
  std::uint32_t groups = r.u32();
  std::uint32_t expect = 0;
  model.params().for_each(
      [&](const std::string&, const Variable&) { ++expect; });
  if (groups != expect)
    throw FormatError("checkpoint " + path + " holds " +
                      std::to_string(groups) + " parameter groups, model " +
                      "needs " + std::to_string(expect));
  for (std::uint32_t i = 0; i < groups; ++i) {
    std::string name = r.str();
    std::uint32_t rank = r.u32();
    Shape shape(rank);
    for (auto& d : shape) d = r.u32();
    std::size_t count = numel(shape);
    std::vector<double> data(count);
    for (double& x : data) x = r.f64();
    bool found = false;
    model.params().for_each([&](const std::string& n, Variable& v) {
      if (n != name) return;
      found = true;
      if (v.shape != shape)
        throw FormatError("checkpoint group " + name + " has shape " +
                          shape_str(shape) + ", model expects " +
                          shape_str(v.shape));
      v.value = data;
    });
    if (!found)
      throw FormatError("checkpoint group " + name +
                        " does not exist in the model");
  }
  if (!r.eof())
    throw FormatError("trailing bytes after checkpoint payload in " + path);
  return model;
}

}  // namespace mind
