#include "defcor/checkpoint.hpp"

#include <bit>
#include <fstream>

#include <json.hpp>

#include "defcor/error.hpp"

namespace defcor {
namespace {

constexpr char kMagic[8] = {'D', 'E', 'F', 'C', 'O', 'R', 'C', 'K'};

void put_f32(std::ostream& out, double v) {
  const auto u = std::bit_cast<std::uint32_t>(static_cast<float>(v));
  const char b[4] = {static_cast<char>(u & 0xff), static_cast<char>((u >> 8) & 0xff),
                     static_cast<char>((u >> 16) & 0xff), static_cast<char>((u >> 24) & 0xff)};
  out.write(b, 4);
}

double get_f32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw FormatError("checkpoint truncated");
  const std::uint32_t u = b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  return std::bit_cast<float>(u);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto& p = ckpt.params;
  nlohmann::ordered_json h;
  h["format_version"] = kCheckpointVersion;
  h["architecture"] = {{"name", "defcor-net"},
                       {"widths", p.config.widths},
                       {"first_layer_order", p.config.first_layer_order},
                       {"leaky_slope", p.config.leaky_slope}};
  if (p.population) {
    h["stiffness_population"] = {{"mu_g", p.population->mu_g}, {"delta_g", p.population->delta_g}, {"n", p.population->n}};
  } else {
    h["stiffness_population"] = nullptr;
  }
  h["train_state"] = {{"step", ckpt.step}, {"best_val_epe", ckpt.best_val_epe}};

  std::vector<std::pair<std::string, const std::vector<double>*>> blobs;
  auto blob_table = nlohmann::ordered_json::array();
  for (const auto& np : p.params()) {
    blobs.emplace_back(np.name, &np.var.value().data);
    blob_table.push_back({{"name", np.name}, {"shape", np.var.shape()}});
  }
  if (ckpt.adam) {
    h["train_state"]["adam_t"] = ckpt.adam->t;
    for (const auto& np : p.params()) {
      for (const auto* kind : {"m", "v"}) {
        const auto& table = std::string(kind) == "m" ? ckpt.adam->m : ckpt.adam->v;
        auto it = table.find(np.name);
        if (it == table.end()) continue;
        const auto name = std::string("adam.") + kind + "/" + np.name;
        blobs.emplace_back(name, &it->second);
        blob_table.push_back({{"name", name}, {"shape", np.var.shape()}});
      }
    }
  }
  h["blobs"] = blob_table;

  const std::string header = h.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write checkpoint: " + path.string());
  out.write(kMagic, 8);
  std::uint64_t len = header.size();
  for (int i = 0; i < 8; ++i) out.put(static_cast<char>((len >> (8 * i)) & 0xff));
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (const auto& [name, data] : blobs)
    for (double v : *data) put_f32(out, v);
  if (!out) throw FormatError("checkpoint write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint: " + path.string());
  char magic[8];
  if (!in.read(magic, 8) || !std::equal(magic, magic + 8, kMagic)) throw FormatError("not a checkpoint: " + path.string());
  std::uint64_t len = 0;
  for (int i = 0; i < 8; ++i) {
    const int c = in.get();
    if (c == EOF) throw FormatError("checkpoint truncated: " + path.string());
    len |= static_cast<std::uint64_t>(c) << (8 * i);
  }
  if (len > (1u << 26)) throw FormatError("checkpoint header too large: " + path.string());
  std::string header(len, '\0');
  if (!in.read(header.data(), static_cast<std::streamsize>(len))) throw FormatError("checkpoint truncated: " + path.string());

  nlohmann::json h;
  try {
    h = nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad checkpoint header: " + std::string(e.what()));
  }
  if (h.value("format_version", 0) != kCheckpointVersion) throw FormatError("unsupported checkpoint version");

  Checkpoint ck;
  ModelConfig cfg;
  try {
    const auto& a = h.at("architecture");
    cfg.widths = a.at("widths").get<std::array<int, 3>>();
    cfg.first_layer_order = a.at("first_layer_order");
    cfg.leaky_slope = a.at("leaky_slope");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad checkpoint architecture: " + std::string(e.what()));
  }
  // Fresh parameters define the expected blob shapes.
  ck.params = ModelParams::initialize(cfg, 0);
  if (!h.at("stiffness_population").is_null()) {
    const auto& sp = h["stiffness_population"];
    ck.params.population = StiffnessPopulation{sp.at("mu_g"), sp.at("delta_g"), sp.at("n")};
  }
  const auto& ts = h.value("train_state", nlohmann::json::object());
  ck.step = ts.value("step", std::int64_t{0});
  ck.best_val_epe = ts.value("best_val_epe", -1.0);
  if (ts.contains("adam_t")) {
    ck.adam = AdamState{};
    ck.adam->t = ts["adam_t"];
  }

  size_t loaded = 0;
  for (const auto& b : h.at("blobs")) {
    const std::string name = b.at("name");
    const auto shape = b.at("shape").get<std::vector<int>>();
    std::string pname = name;
    std::vector<double>* target = nullptr;
    if (name.rfind("adam.m/", 0) == 0 || name.rfind("adam.v/", 0) == 0) {
      if (!ck.adam) throw FormatError("optimizer blob without optimizer state: " + name);
      pname = name.substr(7);
      auto& table = name[5] == 'm' ? ck.adam->m : ck.adam->v;
      if (!ck.params.contains(pname)) throw FormatError("optimizer blob for unknown parameter: " + pname);
      table[pname].assign(ck.params.at(pname).numel(), 0.0);
      target = &table[pname];
    } else {
      if (!ck.params.contains(name)) throw FormatError("unknown parameter blob: " + name);
      target = &ck.params.at(name).mutable_value().data;
      ++loaded;
    }
    if (ck.params.at(pname).shape() != shape)
      throw FormatError("shape mismatch for blob " + name + " (header disagrees with architecture)");
    for (auto& v : *target) v = get_f32(in);
  }
  if (loaded != ck.params.params().size()) throw FormatError("checkpoint is missing parameter blobs");
  if (in.peek() != EOF) throw FormatError("trailing bytes after checkpoint blobs");
  return ck;
}

}  // namespace defcor
