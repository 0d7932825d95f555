#pragma once
#include <string>
#include <vector>

#include "apcde/data.hpp"
#include "apcde/model.hpp"

namespace apcde {

struct ProbeConfig {
  int hidden = 0;  // 0: multinomial logistic; >0: one tanh hidden layer
  int epochs = 100;
  int batch_size = 64;
  double lr = 0.01;
  double holdout_frac = 0.2;
  std::uint64_t seed = 1;
};

/// Classifier of x from y trained independently of the flow; never reads
/// latent variables. Audits the sufficient-dimension-reduction property.
struct ProbeClassifier {
  ParamStore store;
  int input_dim = 0;
  int classes = 0;
  int hidden = 0;
  double holdout_accuracy = 0.0;
  ProbeConfig cfg;
};

/// Gradient-trained softmax classifier on (y, label) pairs with a held-out
/// accuracy report; seeded-deterministic. A single-class dataset throws
/// DegenerateDataError.
ProbeClassifier train_probe(const Dataset& data, const ProbeConfig& cfg);

int probe_predict(const ProbeClassifier& probe, const Tensor& y);  // 1..K

struct SdrRow {
  int id = 0;
  int observed = 0;
  std::vector<int> predicted;
  int agree = 0;
};

struct SdrResult {
  double rate = 0.0;
  int draws = 0;
  std::vector<SdrRow> rows;
};

/// For each sample: embed, regenerate J responses with z_P fixed and z_N
/// resampled, probe-classify each, and count agreement with the observed
/// label. Returns total agreements / (n * J).
SdrResult sdr_agreement(const Model& model, const ProbeClassifier& probe, const Dataset& data,
                        int draws, std::uint64_t seed);

void write_sdr_csv(const SdrResult& result, int label_base, const std::string& path);

}  // namespace apcde
