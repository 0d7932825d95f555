#pragma once
// Shared fixtures for flow/posterior/training tests.
#include "apcde/data.hpp"
#include "apcde/model.hpp"
#include "apcde/train.hpp"
#include "apcde/rng.hpp"

namespace helpers {

using namespace apcde;

// Random model with every layer active: perturbed actnorms, near-identity
// invertible linears and fully random conditioners (couplings included).
inline Model make_random_model(int p, int levels, int depth, CouplingVariant variant,
                               std::uint64_t seed,
                               const std::vector<HeadSpec>& heads = {},
                               const std::vector<ZpSpec>& zp = {}) {
  ArchConfig arch;
  arch.p = p;
  arch.levels = levels;
  arch.depth = depth;
  arch.hidden = {8};
  arch.variant = variant;
  Model model = build_model(arch, heads, zp, seed);

  Rng rng(seed, 99);
  for (const FlowLevel& level : model.flow.levels) {
    for (const FlowStep& step : level.steps) {
      Tensor& scale = model.store.value(step.actnorm.scale);
      for (double& v : scale.data()) v = std::exp(0.3 * rng.normal());
      Tensor& bias = model.store.value(step.actnorm.bias);
      for (double& v : bias.data()) v = 0.3 * rng.normal();
      Tensor& w = model.store.value(step.linear.weight);
      for (std::size_t i = 0; i < w.rows(); ++i)
        for (std::size_t j = 0; j < w.cols(); ++j)
          w.at(i, j) = (i == j ? 1.0 : 0.0) + 0.25 * rng.normal();
      for (ParamRef ref : step.coupling.net.weights) {
        Tensor& t = model.store.value(ref);
        for (double& v : t.data()) v = 0.4 * rng.normal();
      }
      for (ParamRef ref : step.coupling.net.biases) {
        Tensor& t = model.store.value(ref);
        for (double& v : t.data()) v = 0.2 * rng.normal();
      }
    }
  }
  return model;
}

// randomize a head's parameters in place
inline void randomize_head(Model& model, int head, double sd, std::uint64_t seed) {
  Rng rng(seed, 105);
  const PredictiveHead& h = model.base.heads.at(head);
  for (ParamRef ref : {h.beta, h.beta0, h.log_var}) {
    if (ref < 0) continue;
    Tensor& t = model.store.value(ref);
    for (double& v : t.data()) v = sd * rng.normal();
  }
}

// Shared fixture: a 2-class 2-D mixture with the class signal in the second
// coordinate (so the default z_P block of an identity flow carries no label
// information), an AP-CDE model trained on it, and an untrained identity
// twin. Built once per test binary.
struct Trained2d {
  MixtureSpec spec;
  Dataset train_data;
  Dataset test_data;
  Model model;
  Model identity_model;
};

inline const Trained2d& trained_2d() {
  static const Trained2d fixture = [] {
    Trained2d fx;
    fx.spec.K = 2;
    fx.spec.means = {Tensor::vec({0.0, 2.0}), Tensor::vec({0.0, -2.0})};
    fx.spec.sigma = 0.45;
    fx.spec.probs = {0.5, 0.5};
    fx.train_data = synth_conditional_mixture(fx.spec, 2000, 501);
    fx.test_data = synth_conditional_mixture(fx.spec, 400, 502);

    ArchConfig arch;
    arch.p = 2;
    arch.levels = 1;
    arch.depth = 6;
    arch.hidden = {32};
    arch.variant = CouplingVariant::affine;
    HeadSpec head;
    head.kind = HeadKind::categorical;
    head.K = 2;
    head.d = 1;

    fx.model = build_model(arch, {head}, {}, 503);
    TrainConfig cfg;
    cfg.epochs = 150;
    cfg.batch_size = 64;
    cfg.warmup_epochs = 4;
    cfg.mc_samples = 256;
    cfg.seed = 504;
    train(fx.model, fx.train_data, cfg);

    fx.identity_model = build_model(arch, {head}, {}, 503, InitKind::identity);
    return fx;
  }();
  return fixture;
}

}  // namespace helpers
