#include "apcde/train.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace apcde {

double lr_at(long step, long total_steps, long warmup_steps, const TrainConfig& cfg) {
  if (step < 0 || step >= total_steps) throw ArgumentError("lr_at: step out of range");
  if (step < warmup_steps)
    return cfg.lr_peak * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
  double frac = static_cast<double>(step - warmup_steps) /
                static_cast<double>(total_steps - warmup_steps);
  return cfg.lr_final + 0.5 * (cfg.lr_peak - cfg.lr_final) * (1.0 + std::cos(M_PI * frac));
}

AdamState adam_init(const ParamStore& store) {
  AdamState state;
  state.m.resize(store.size());
  state.v.resize(store.size());
  for (ParamRef p = 0; p < store.size(); ++p) {
    if (!store.trainable(p)) continue;
    state.m[p] = Tensor::zeros(store.value(p).shape());
    state.v[p] = Tensor::zeros(store.value(p).shape());
  }
  return state;
}

void adam_step(ParamStore& store, const std::vector<Tensor>& grads, AdamState& state,
               double lr, const TrainConfig& cfg) {
  if (static_cast<int>(grads.size()) != store.size())
    throw ArgumentError("adam_step: gradient count mismatch");
  for (ParamRef p = 0; p < store.size(); ++p) {
    if (!store.trainable(p)) continue;
    if (!grads[p].same_shape(store.value(p)))
      throw ArgumentError("adam_step: gradient shape mismatch for " + store.name(p));
    if (!grads[p].all_finite())
      throw NumericalError("adam_step: non-finite gradient for " + store.name(p));
  }

  state.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(state.t));
  for (ParamRef p = 0; p < store.size(); ++p) {
    if (!store.trainable(p)) continue;
    Tensor& param = store.value(p);
    Tensor& m = state.m[p];
    Tensor& v = state.v[p];
    for (std::size_t i = 0; i < param.size(); ++i) {
      double g = grads[p][i];
      m[i] = cfg.adam_beta1 * m[i] + (1.0 - cfg.adam_beta1) * g;
      v[i] = cfg.adam_beta2 * v[i] + (1.0 - cfg.adam_beta2) * g * g;
      double mhat = m[i] / bc1;
      double vhat = v[i] / bc2;
      param[i] -= lr * mhat / (std::sqrt(vhat) + cfg.adam_eps);
    }
  }
}

namespace {
void validate_config(const TrainConfig& cfg) {
  if (cfg.batch_size < 1) throw ConfigError("train: batch size must be >= 1");
  if (cfg.epochs < 0) throw ConfigError("train: epochs must be >= 0");
  if (!(cfg.lr_peak > 0) || !(cfg.lr_final > 0))
    throw ConfigError("train: learning rates must be positive");
  if (cfg.warmup_epochs < 0) throw ConfigError("train: warmup epochs must be >= 0");
  if (cfg.epochs > 0 && cfg.warmup_epochs >= cfg.epochs)
    throw ConfigError("train: warmup epochs must be smaller than epochs");
  if (cfg.mc_samples < 1) throw ConfigError("train: M must be >= 1");
}

void clip_gradients(std::vector<Tensor>& grads, const ParamStore& store, double clip) {
  double sq = 0.0;
  for (ParamRef p = 0; p < store.size(); ++p) {
    if (!store.trainable(p)) continue;
    for (double g : grads[p].data()) sq += g * g;
  }
  double norm = std::sqrt(sq);
  if (norm <= clip) return;
  double s = clip / norm;
  for (ParamRef p = 0; p < store.size(); ++p) {
    if (!store.trainable(p)) continue;
    for (double& g : grads[p].data()) g *= s;
  }
}
}  // namespace

Checkpoint train(Model& model, const Dataset& data, const TrainConfig& cfg,
                 const DataPrep& prep) {
  validate_config(cfg);
  if (data.n() < 1) throw DataError("train: empty dataset");
  if (data.p() != model.arch.p) throw ConfigError("train: dataset dimension mismatch");
  if (data.x_dim() != model.base.x_dim)
    throw ConfigError("train: covariate columns do not match the model heads");
  model.base.mc_samples = cfg.mc_samples;

  const int n = data.n();
  const long steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  const long total_steps = cfg.epochs * steps_per_epoch;
  const long warmup_steps = cfg.warmup_epochs * steps_per_epoch;

  Rng shuffle_rng(cfg.seed, Stream::shuffle);
  Rng mc_rng(cfg.seed, Stream::monte_carlo);

  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  shuffle_rng.shuffle(perm);

  // data-dependent actnorm init from the first batch, before step 0
  {
    std::vector<Tensor> first_batch;
    for (int i = 0; i < std::min<int>(cfg.batch_size, n); ++i)
      first_batch.push_back(data.row_y(perm[i]));
    actnorm_init_from_data(model.flow, model.store, first_batch);
  }

  AdamState adam = adam_init(model.store);
  std::vector<double> epoch_loss, epoch_lr;
  long step = 0;
  int consecutive_bad = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (epoch > 0) shuffle_rng.shuffle(perm);
    double loss_sum = 0.0;
    long finite_steps = 0;
    double lr = cfg.lr_peak;

    for (int start = 0; start < n; start += cfg.batch_size) {
      std::vector<Example> batch;
      for (int i = start; i < std::min(start + cfg.batch_size, n); ++i)
        batch.push_back(data.example(perm[i]));
      lr = lr_at(step, total_steps, warmup_steps, cfg);
      try {
        LossGrad lg = apcde_loss_grad(model.flow, model.base, model.store, batch, mc_rng);
        if (cfg.clip_norm > 0) clip_gradients(lg.grads, model.store, cfg.clip_norm);
        adam_step(model.store, lg.grads, adam, lr, cfg);
        loss_sum += lg.loss;
        ++finite_steps;
        consecutive_bad = 0;
      } catch (const NumericalError& err) {
        ++consecutive_bad;
        if (consecutive_bad >= 3) {
          std::ostringstream os;
          os << "train: loss non-finite for 3 consecutive steps at epoch " << epoch
             << " (" << err.what() << "); recent epoch losses:";
          std::size_t from = epoch_loss.size() > 5 ? epoch_loss.size() - 5 : 0;
          for (std::size_t e = from; e < epoch_loss.size(); ++e) os << " " << epoch_loss[e];
          throw DivergenceError(os.str());
        }
      }
      ++step;
    }
    epoch_loss.push_back(finite_steps > 0 ? loss_sum / static_cast<double>(finite_steps)
                                          : std::nan(""));
    epoch_lr.push_back(lr);
  }

  if (!cfg.loss_log.empty()) {
    std::ofstream log(cfg.loss_log);
    if (!log) throw DataError("train: cannot open loss log " + cfg.loss_log);
    log << "# epoch mean_loss learning_rate\n";
    char buf[80];
    for (std::size_t e = 0; e < epoch_loss.size(); ++e) {
      std::snprintf(buf, sizeof buf, "%zu %.17g %.17g\n", e, epoch_loss[e], epoch_lr[e]);
      log << buf;
    }
  }

  return checkpoint_from_model(model, cfg, prep, std::move(epoch_loss), std::move(epoch_lr));
}

}  // namespace apcde
