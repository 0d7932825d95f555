#include "apcde/checkpoint.hpp"

#include <array>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace apcde {

using nlohmann::json;

std::uint32_t crc32(const std::string& bytes) {
  static const std::array<std::uint32_t, 256> table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  std::uint32_t c = 0xFFFFFFFFu;
  for (unsigned char ch : bytes) c = table[(c ^ ch) & 0xFFu] ^ (c >> 8);
  return c ^ 0xFFFFFFFFu;
}

namespace {
constexpr char kMagic[4] = {'A', 'P', 'C', 'D'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(const std::string& in, std::size_t& pos) {
  if (pos + 4 > in.size()) throw IntegrityError("checkpoint: truncated file");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i)
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  pos += 4;
  return v;
}

std::uint64_t get_u64(const std::string& in, std::size_t& pos) {
  if (pos + 8 > in.size()) throw IntegrityError("checkpoint: truncated file");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i)
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  pos += 8;
  return v;
}

json arch_to_json(const ArchConfig& a) {
  return json{{"p", a.p},
              {"levels", a.levels},
              {"depth", a.depth},
              {"hidden", a.hidden},
              {"variant", a.variant == CouplingVariant::additive ? "additive" : "affine"}};
}

ArchConfig arch_from_json(const json& j) {
  ArchConfig a;
  a.p = j.at("p").get<int>();
  a.levels = j.at("levels").get<int>();
  a.depth = j.at("depth").get<int>();
  a.hidden = j.at("hidden").get<std::vector<int>>();
  std::string v = j.at("variant").get<std::string>();
  if (v == "additive")
    a.variant = CouplingVariant::additive;
  else if (v == "affine")
    a.variant = CouplingVariant::affine;
  else
    throw VersionError("checkpoint: unknown coupling variant " + v);
  return a;
}

json head_to_json(const HeadSpec& h) {
  return json{{"kind", h.kind == HeadKind::categorical ? "categorical" : "linear_gaussian"},
              {"K", h.K},
              {"m", h.m},
              {"d", h.d},
              {"lambda", h.lambda},
              {"free_intercept", h.free_intercept},
              {"pin_noise", h.pin_noise},
              {"noise_value", h.noise_value},
              {"label_base", h.label_base}};
}

HeadSpec head_from_json(const json& j) {
  HeadSpec h;
  std::string kind = j.at("kind").get<std::string>();
  if (kind == "categorical")
    h.kind = HeadKind::categorical;
  else if (kind == "linear_gaussian")
    h.kind = HeadKind::linear_gaussian;
  else
    throw VersionError("checkpoint: unknown head kind " + kind);
  h.K = j.at("K").get<int>();
  h.m = j.at("m").get<int>();
  h.d = j.at("d").get<int>();
  h.lambda = j.at("lambda").get<double>();
  h.free_intercept = j.at("free_intercept").get<bool>();
  h.pin_noise = j.at("pin_noise").get<bool>();
  h.noise_value = j.at("noise_value").get<double>();
  h.label_base = j.at("label_base").get<int>();
  return h;
}

json layout_to_json(const LatentLayout& l) {
  json blocks = json::array();
  for (const LatentBlock& b : l.blocks)
    blocks.push_back(json{{"head", b.head},
                          {"level", b.level},
                          {"level_indices", b.level_indices},
                          {"flat_indices", b.flat_indices}});
  return json{{"p", l.p}, {"blocks", blocks}, {"zn", l.zn_indices}};
}

LatentLayout layout_from_json(const json& j) {
  LatentLayout l;
  l.p = j.at("p").get<int>();
  for (const json& b : j.at("blocks")) {
    LatentBlock blk;
    blk.head = b.at("head").get<int>();
    blk.level = b.at("level").get<int>();
    blk.level_indices = b.at("level_indices").get<std::vector<int>>();
    blk.flat_indices = b.at("flat_indices").get<std::vector<int>>();
    l.blocks.push_back(std::move(blk));
  }
  l.zn_indices = j.at("zn").get<std::vector<int>>();
  return l;
}

json train_to_json(const TrainConfig& c) {
  return json{{"epochs", c.epochs},
              {"batch_size", c.batch_size},
              {"lr_peak", c.lr_peak},
              {"warmup_epochs", c.warmup_epochs},
              {"lr_final", c.lr_final},
              {"adam_beta1", c.adam_beta1},
              {"adam_beta2", c.adam_beta2},
              {"adam_eps", c.adam_eps},
              {"mc_samples", c.mc_samples},
              {"seed", c.seed},
              {"clip_norm", c.clip_norm},
              {"loss_log", c.loss_log}};
}

TrainConfig train_from_json(const json& j) {
  TrainConfig c;
  c.epochs = j.at("epochs").get<int>();
  c.batch_size = j.at("batch_size").get<int>();
  c.lr_peak = j.at("lr_peak").get<double>();
  c.warmup_epochs = j.at("warmup_epochs").get<int>();
  c.lr_final = j.at("lr_final").get<double>();
  c.adam_beta1 = j.at("adam_beta1").get<double>();
  c.adam_beta2 = j.at("adam_beta2").get<double>();
  c.adam_eps = j.at("adam_eps").get<double>();
  c.mc_samples = j.at("mc_samples").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.clip_norm = j.at("clip_norm").get<double>();
  c.loss_log = j.at("loss_log").get<std::string>();
  return c;
}

json prep_to_json(const DataPrep& p) {
  return json{{"dequantize_bits", p.dequantize_bits},
              {"source_max", p.source_max},
              {"scale_divisor", p.scale_divisor}};
}

DataPrep prep_from_json(const json& j) {
  DataPrep p;
  p.dequantize_bits = j.at("dequantize_bits").get<int>();
  p.source_max = j.at("source_max").get<double>();
  p.scale_divisor = j.at("scale_divisor").get<double>();
  return p;
}
}  // namespace

Checkpoint checkpoint_from_model(const Model& model, const TrainConfig& cfg,
                                 const DataPrep& prep, std::vector<double> loss_trace,
                                 std::vector<double> lr_trace) {
  Checkpoint ckpt;
  ckpt.arch = model.arch;
  for (const PredictiveHead& h : model.base.heads) ckpt.head_specs.push_back(h.spec);
  ckpt.layout = model.flow.layout;
  ckpt.train_cfg = cfg;
  ckpt.prep = prep;
  for (ParamRef p = 0; p < model.store.size(); ++p)
    ckpt.params.emplace_back(model.store.name(p), model.store.value(p));
  ckpt.loss_trace = std::move(loss_trace);
  ckpt.lr_trace = std::move(lr_trace);
  return ckpt;
}

Model model_from_checkpoint(const Checkpoint& ckpt) {
  Model model = assemble_model(ckpt.arch, ckpt.head_specs, ckpt.layout);
  model.base.mc_samples = ckpt.train_cfg.mc_samples;
  if (static_cast<int>(ckpt.params.size()) != model.store.size())
    throw IntegrityError("checkpoint: parameter count does not match architecture");
  for (const auto& [name, value] : ckpt.params) {
    ParamRef ref = model.store.find(name);
    if (ref < 0) throw IntegrityError("checkpoint: unknown parameter " + name);
    if (!model.store.value(ref).same_shape(value))
      throw IntegrityError("checkpoint: shape mismatch for parameter " + name);
    model.store.value(ref) = value;
  }
  return model;
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  json params_index = json::array();
  std::string blob;
  for (const auto& [name, value] : ckpt.params) {
    params_index.push_back(json{{"name", name}, {"shape", value.shape()}});
    for (double v : value.data()) {
      std::uint64_t bits;
      std::memcpy(&bits, &v, sizeof bits);
      put_u64(blob, bits);
    }
  }
  json header{{"format_version", ckpt.format_version},
              {"arch", arch_to_json(ckpt.arch)},
              {"heads", json::array()},
              {"layout", layout_to_json(ckpt.layout)},
              {"train", train_to_json(ckpt.train_cfg)},
              {"prep", prep_to_json(ckpt.prep)},
              {"trace", json{{"loss", ckpt.loss_trace}, {"lr", ckpt.lr_trace}}},
              {"params", params_index}};
  for (const HeadSpec& h : ckpt.head_specs) header["heads"].push_back(head_to_json(h));
  std::string header_text = header.dump();

  std::string out(kMagic, 4);
  put_u32(out, static_cast<std::uint32_t>(ckpt.format_version));
  put_u64(out, header_text.size());
  out += header_text;
  put_u64(out, blob.size());
  out += blob;
  put_u32(out, crc32(out));
  return out;
}

Checkpoint parse_checkpoint(const std::string& bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw IntegrityError("checkpoint: bad magic");
  if (bytes.size() < 4 + 4 + 8 + 8 + 4) throw IntegrityError("checkpoint: truncated file");

  std::string body = bytes.substr(0, bytes.size() - 4);
  std::size_t crc_pos = bytes.size() - 4;
  std::uint32_t stored = get_u32(bytes, crc_pos);
  if (crc32(body) != stored) throw IntegrityError("checkpoint: checksum mismatch");

  std::size_t pos = 4;
  std::uint32_t version = get_u32(bytes, pos);
  if (version != 1)
    throw VersionError("checkpoint: unsupported format version " + std::to_string(version));

  std::uint64_t header_len = get_u64(bytes, pos);
  if (pos + header_len > body.size()) throw IntegrityError("checkpoint: truncated header");
  json header;
  try {
    header = json::parse(bytes.substr(pos, header_len));
  } catch (const json::exception& e) {
    throw IntegrityError(std::string("checkpoint: header parse failure: ") + e.what());
  }
  pos += header_len;
  std::uint64_t blob_len = get_u64(bytes, pos);
  if (pos + blob_len != body.size()) throw IntegrityError("checkpoint: blob length mismatch");

  Checkpoint ckpt;
  try {
    ckpt.format_version = header.at("format_version").get<int>();
    ckpt.arch = arch_from_json(header.at("arch"));
    for (const json& h : header.at("heads")) ckpt.head_specs.push_back(head_from_json(h));
    ckpt.layout = layout_from_json(header.at("layout"));
    ckpt.train_cfg = train_from_json(header.at("train"));
    ckpt.prep = prep_from_json(header.at("prep"));
    ckpt.loss_trace = header.at("trace").at("loss").get<std::vector<double>>();
    ckpt.lr_trace = header.at("trace").at("lr").get<std::vector<double>>();

    for (const json& entry : header.at("params")) {
      std::string name = entry.at("name").get<std::string>();
      std::vector<std::size_t> shape = entry.at("shape").get<std::vector<std::size_t>>();
      std::size_t count = 1;
      for (std::size_t d : shape) count *= d;
      std::vector<double> data(count);
      for (std::size_t i = 0; i < count; ++i) {
        std::uint64_t bits = get_u64(bytes, pos);
        double v;
        std::memcpy(&v, &bits, sizeof v);
        data[i] = v;
      }
      ckpt.params.emplace_back(std::move(name), Tensor(std::move(shape), std::move(data)));
    }
  } catch (const json::exception& e) {
    throw IntegrityError(std::string("checkpoint: malformed header: ") + e.what());
  }
  if (pos != body.size()) throw IntegrityError("checkpoint: trailing bytes in blob");
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("save_checkpoint: cannot open " + path);
  std::string bytes = serialize_checkpoint(ckpt);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("save_checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("load_checkpoint: cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_checkpoint(bytes);
}

std::string checkpoint_fingerprint(const Checkpoint& ckpt) {
  std::uint32_t c = crc32(serialize_checkpoint(ckpt));
  char buf[9];
  std::snprintf(buf, sizeof buf, "%08x", c);
  return buf;
}

}  // namespace apcde
