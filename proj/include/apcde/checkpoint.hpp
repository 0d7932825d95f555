#pragma once
#include <string>
#include <utility>
#include <vector>

#include "apcde/model.hpp"

namespace apcde {

/// How training data was preprocessed; evaluation commands replay it.
struct DataPrep {
  int dequantize_bits = 0;  // 0: data used as-is
  double source_max = 255.0;
  double scale_divisor = 256.0;
};

struct TrainConfig {
  int epochs = 200;
  int batch_size = 64;
  double lr_peak = 5e-4;
  int warmup_epochs = 10;
  double lr_final = 1e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int mc_samples = 1000;  // M of the Monte-Carlo marginal estimator
  std::uint64_t seed = 1;
  double clip_norm = 0.0;  // 0 disables gradient clipping
  std::string loss_log;    // optional per-epoch log path
};

/// Self-describing snapshot: architecture, layout, heads, training config
/// and every parameter tensor. Serialized as a JSON header plus a raw
/// little-endian float64 blob with an index table and a CRC32 trailer;
/// round trips are byte-exact.
struct Checkpoint {
  int format_version = 1;
  ArchConfig arch;
  std::vector<HeadSpec> head_specs;
  LatentLayout layout;
  TrainConfig train_cfg;
  DataPrep prep;
  std::vector<std::pair<std::string, Tensor>> params;
  std::vector<double> loss_trace;
  std::vector<double> lr_trace;
};

Checkpoint checkpoint_from_model(const Model& model, const TrainConfig& cfg,
                                 const DataPrep& prep, std::vector<double> loss_trace,
                                 std::vector<double> lr_trace);
Model model_from_checkpoint(const Checkpoint& ckpt);

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(const std::string& bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

/// CRC32 (reflected, poly 0xEDB88320) over a byte string.
std::uint32_t crc32(const std::string& bytes);

/// Short hex digest of the serialized checkpoint, stamped into reports.
std::string checkpoint_fingerprint(const Checkpoint& ckpt);

}  // namespace apcde
