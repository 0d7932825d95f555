#pragma once
#include "apcde/checkpoint.hpp"
#include "apcde/data.hpp"
#include "apcde/model.hpp"

namespace apcde {

/// Learning-rate schedule: linear warmup from peak/W to peak over the
/// first W steps, then cosine annealing from peak to final over the rest.
double lr_at(long step, long total_steps, long warmup_steps, const TrainConfig& cfg);

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  long t = 0;
};

AdamState adam_init(const ParamStore& store);

/// One Adam update with bias correction. Validates every gradient before
/// touching any parameter; non-finite gradients throw NumericalError.
void adam_step(ParamStore& store, const std::vector<Tensor>& grads, AdamState& state,
               double lr, const TrainConfig& cfg);

/// Mini-batch training of the empirical-KL loss: seeded shuffles, the
/// data-dependent actnorm init on the first batch, Adam with the warmup +
/// cosine schedule, and per-epoch loss logging. Bit-reproducible for a
/// fixed seed. Three consecutive non-finite steps raise DivergenceError.
Checkpoint train(Model& model, const Dataset& data, const TrainConfig& cfg,
                 const DataPrep& prep = {});

}  // namespace apcde
