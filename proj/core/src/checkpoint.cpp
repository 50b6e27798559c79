#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>

#include "json.hpp"
#include "seasonet/model.hpp"

namespace seasonet::model {

namespace fs = std::filesystem;
using nlohmann::json;

Checkpoint to_checkpoint(Model& model) {
  Checkpoint ck;
  ck.config = model.config();
  for (auto* p : model.params()) ck.tensors.push_back({p->name, p->shape, p->value});
  for (auto& b : model.buffers()) ck.tensors.push_back({b.name, {b.values->size()}, *b.values});
  return ck;
}

Model from_checkpoint(const Checkpoint& ckpt) {
  Model m(ckpt.config, 0);
  std::map<std::string, const TensorBlob*> by_name;
  for (const auto& t : ckpt.tensors) by_name[t.name] = &t;
  auto fetch = [&](const std::string& name, std::size_t count) -> const TensorBlob& {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw CorruptionError(name, "missing from checkpoint");
    if (it->second->values.size() != count) {
      throw CorruptionError(name, "holds " + std::to_string(it->second->values.size()) + " values, model expects " +
                                      std::to_string(count));
    }
    return *it->second;
  };
  for (auto* p : m.params()) {
    const auto& blob = fetch(p->name, p->size());
    if (blob.shape != p->shape) throw CorruptionError(p->name, "shape differs from the model definition");
    p->value = blob.values;
  }
  for (auto& b : m.buffers()) *b.values = fetch(b.name, b.values->size()).values;
  m.mark_running_stats_ready();
  m.set_training(false);
  return m;
}

// ---------------------------------------------------------------------------

namespace {

json config_to_json(const ModelConfig& c) {
  return json{{"arch", arch_name(c.arch)},
              {"in_channels", c.in_channels},
              {"base_width", c.base_width},
              {"elevation", c.elevation},
              {"case_id", c.case_id},
              {"padding_mode", padding_name(c.padding)},
              {"norm_stats",
               {{"mean", c.norm.mean},
                {"std", c.norm.std},
                {"computed_over", c.norm.computed_over},
                {"elevation_mean", c.norm.elevation_mean},
                {"elevation_std", c.norm.elevation_std}}}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.arch = parse_arch(j.at("arch").get<std::string>());
  c.in_channels = j.at("in_channels").get<int>();
  c.base_width = j.at("base_width").get<int>();
  c.elevation = j.at("elevation").get<bool>();
  c.case_id = j.at("case_id").get<std::string>();
  c.padding = parse_padding(j.at("padding_mode").get<std::string>());
  const auto& n = j.at("norm_stats");
  c.norm.mean = n.at("mean").get<double>();
  c.norm.std = n.at("std").get<double>();
  c.norm.computed_over = n.at("computed_over").get<std::string>();
  c.norm.elevation_mean = n.at("elevation_mean").get<double>();
  c.norm.elevation_std = n.at("elevation_std").get<double>();
  return c;
}

std::string blob_file(const std::string& name) { return "tensors/" + name + ".f32"; }

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const fs::path& dir) {
  fs::create_directories(dir / "tensors");
  json tensors = json::array();
  for (const auto& t : ckpt.tensors) {
    tensors.push_back({{"name", t.name}, {"shape", t.shape}, {"file", blob_file(t.name)}});
    std::vector<char> bytes;
    bytes.reserve(t.values.size() * 4);
    for (float v : t.values) {
      const auto u = std::bit_cast<std::uint32_t>(v);
      for (int b = 0; b < 4; ++b) bytes.push_back(static_cast<char>((u >> (8 * b)) & 0xFFu));
    }
    std::ofstream out(dir / blob_file(t.name), std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write tensor blob " + (dir / blob_file(t.name)).string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  const auto& p = ckpt.provenance;
  json manifest{
      {"format", "seasonet-checkpoint"},
      {"format_version", Checkpoint::kFormatVersion},
      {"model", config_to_json(ckpt.config)},
      {"hyperparameters", ckpt.hyperparameters},
      {"provenance",
       {{"stage", p.stage},
        {"dataset_ids", p.dataset_ids},
        {"epochs_run", p.epochs_run},
        {"best_epoch", p.best_epoch},
        {"best_validation_loss", p.best_validation_loss},
        {"parent", p.parent}}},
      {"design",
       {{"kernel", "3x3"},
        {"stride", 1},
        {"dilation", 1},
        {"activation", "relu after every conv+batchnorm; none after the head"},
        {"upsampling", "nearest-neighbour x2, parameter-free"},
        {"initialization", "he-uniform weights, zero bias, gamma=1, beta=0"},
        {"nested_upsample_count",
         "one parameter-free upsample per nested feed; the three resolution transitions are counted as the "
         "additional upsample layers"}}},
      {"tensors", tensors}};
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  if (!out) throw Error("cannot write " + (dir / "manifest.json").string());
  out << manifest.dump(2) << '\n';
}

Checkpoint load_checkpoint(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw CorruptionError("manifest.json", "cannot open " + (dir / "manifest.json").string());
  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    throw CorruptionError("manifest.json", e.what());
  }
  Checkpoint ck;
  try {
    if (manifest.at("format_version").get<int>() != Checkpoint::kFormatVersion) {
      throw CorruptionError("manifest.json", "unsupported format version");
    }
    ck.config = config_from_json(manifest.at("model"));
    ck.hyperparameters = manifest.at("hyperparameters").get<std::map<std::string, double>>();
    const auto& p = manifest.at("provenance");
    ck.provenance.stage = p.at("stage").get<std::string>();
    ck.provenance.dataset_ids = p.at("dataset_ids").get<std::vector<std::string>>();
    ck.provenance.epochs_run = p.at("epochs_run").get<int>();
    ck.provenance.best_epoch = p.at("best_epoch").get<int>();
    ck.provenance.best_validation_loss = p.at("best_validation_loss").get<double>();
    ck.provenance.parent = p.at("parent").get<std::string>();
  } catch (const json::exception& e) {
    throw CorruptionError("manifest.json", e.what());
  }

  for (const auto& t : manifest.at("tensors")) {
    TensorBlob blob;
    blob.name = t.at("name").get<std::string>();
    blob.shape = t.at("shape").get<std::vector<std::size_t>>();
    std::size_t count = 1;
    for (auto d : blob.shape) count *= d;
    std::ifstream bin(dir / t.at("file").get<std::string>(), std::ios::binary);
    if (!bin) throw CorruptionError(blob.name, "blob file missing");
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());
    if (bytes.size() != count * 4) {
      throw CorruptionError(blob.name, "blob has " + std::to_string(bytes.size()) + " bytes, manifest implies " +
                                           std::to_string(count * 4));
    }
    blob.values.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
      std::uint32_t u = 0;
      for (int b = 0; b < 4; ++b) u |= static_cast<std::uint32_t>(bytes[4 * i + static_cast<std::size_t>(b)]) << (8 * b);
      const float v = std::bit_cast<float>(u);
      if (!std::isfinite(v)) throw CorruptionError(blob.name, "non-finite value at element " + std::to_string(i));
      blob.values[i] = v;
    }
    ck.tensors.push_back(std::move(blob));
  }
  return ck;
}

}  // namespace seasonet::model
