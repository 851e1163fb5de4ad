#include "fas/nn/checkpoint.hpp"

namespace fas::nn {

void save_checkpoint(const std::filesystem::path& stem, const UNet& net,
                     const CheckpointMeta& meta) {
  const auto& cfg = net.config();
  Json m;
  m["arch"] = {{"in_ch", cfg.in_ch},   {"out_ch", cfg.out_ch}, {"grid_nx", cfg.grid_nx},
               {"grid_ny", cfg.grid_ny}, {"widths", cfg.widths}, {"emb_dim", cfg.emb_dim},
               {"t_scale", cfg.t_scale}};
  m["seed"] = meta.seed;
  m["epoch"] = meta.epoch;
  if (!meta.extra.is_null()) m["extra"] = meta.extra;
  m["dtype"] = "float32";
  m["byte_order"] = "little-endian";
  m["param_count"] = net.param_count();
  Json layout = Json::array();
  for (const auto& e : net.param_layout())
    layout.push_back({{"name", e.name}, {"offset", e.offset}, {"count", e.count}});
  m["layout"] = layout;

  auto json_path = stem;
  json_path += ".json";
  auto bin_path = stem;
  bin_path += ".bin";
  if (!stem.parent_path().empty()) std::filesystem::create_directories(stem.parent_path());
  write_json_file(json_path, m);
  write_raw_f32(bin_path, net.params(), net.param_count());
}

UNet load_checkpoint(const std::filesystem::path& stem, CheckpointMeta* meta) {
  auto json_path = stem;
  json_path += ".json";
  auto bin_path = stem;
  bin_path += ".bin";
  const Json m = read_json_file(json_path);

  UNetConfig cfg;
  cfg.in_ch = m["arch"]["in_ch"].get<int>();
  cfg.out_ch = m["arch"]["out_ch"].get<int>();
  cfg.grid_nx = m["arch"]["grid_nx"].get<int>();
  cfg.grid_ny = m["arch"]["grid_ny"].get<int>();
  cfg.widths = m["arch"]["widths"].get<std::array<int, 3>>();
  cfg.emb_dim = m["arch"]["emb_dim"].get<int>();
  cfg.t_scale = m["arch"]["t_scale"].get<double>();

  UNet net(cfg);
  const auto count = m["param_count"].get<std::size_t>();
  if (count != net.param_count())
    throw std::runtime_error("load_checkpoint: parameter count mismatch for " + stem.string());
  const auto blob = read_raw_f32(bin_path, count);
  std::copy(blob.begin(), blob.end(), net.params());

  if (meta != nullptr) {
    meta->seed = m.value("seed", std::uint64_t{0});
    meta->epoch = m.value("epoch", 0);
    meta->extra = m.contains("extra") ? m["extra"] : Json();
  }
  return net;
}

}  // namespace fas::nn
