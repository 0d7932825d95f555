#pragma once
#include <vector>

#include "apcde/flow.hpp"
#include "apcde/rng.hpp"
#include "apcde/tape.hpp"

namespace apcde {

enum class HeadKind { categorical, linear_gaussian };

struct HeadSpec {
  HeadKind kind = HeadKind::categorical;
  int K = 2;           // categorical: class count
  int m = 1;           // linear-gaussian: covariate dimension
  int d = 1;           // z_P block width
  double lambda = 1.0; // tempering power
  bool free_intercept = false;  // categorical: learn beta0 instead of pinning at 0
  bool pin_noise = false;       // linear-gaussian: freeze beta2
  double noise_value = 0.01;    // beta2 value when pinned (variance)
  int label_base = 1;           // label convention of the source data (0 or 1)
};

/// GLM likelihood f(x | z_P; beta) with tempering. Categorical heads pin
/// the last class's logit to zero; linear-gaussian heads store the noise
/// variance beta2 as a log so positivity is structural.
struct PredictiveHead {
  HeadSpec spec;
  ParamRef beta = -1;     // categorical: (K-1) x d; linear-gaussian: m x d loading
  ParamRef beta0 = -1;    // categorical: (K-1) intercepts (absent when pinned); linear: m
  ParamRef log_var = -1;  // linear-gaussian: m, log(beta2)
};

struct AugmentedBase {
  std::vector<PredictiveHead> heads;
  int mc_samples = 1000;        // M of the Monte-Carlo marginal estimator
  std::vector<int> x_offsets;   // covariate slot start per head
  int x_dim = 0;                // total covariate slots per sample
};

/// Covariate observation for one head: a 1..K label or an m-vector.
struct HeadObs {
  int label = 0;
  Tensor value;
};
HeadObs head_obs(const AugmentedBase& base, int head, const std::vector<double>& xrow);

/// log N(z; 0, I) = -(d/2) log(2 pi) - |z|^2 / 2.
double log_std_normal(const Tensor& z);
NodeId log_std_normal_tape(Tape& tape, NodeId z);

/// Class logits at z_P, including the pinned zero for class K.
Tensor head_logits(const PredictiveHead& head, const ParamStore& store, const Tensor& zp);

/// Tempered log-likelihood lambda * log g(x | z_P; beta).
double loglik_head(const PredictiveHead& head, const ParamStore& store, const HeadObs& x,
                   const Tensor& zp);
NodeId loglik_head_tape(const PredictiveHead& head, Tape& tape, const HeadObs& x, NodeId zp);

/// True when log_marginal has a closed form (linear-gaussian with lambda=1:
/// the Gaussian convolution N(x; beta0, beta1 beta1' + diag(beta2))).
bool has_closed_form_marginal(const PredictiveHead& head);
double log_marginal_closed(const PredictiveHead& head, const ParamStore& store, const HeadObs& x);

/// The M-sample Monte-Carlo estimate log[(1/M) sum_l g(x|t_l)^lambda] with
/// t_l ~ N(0, I_d) drawn from rng. Exact for integrands constant in t.
double log_marginal_mc(const PredictiveHead& head, const ParamStore& store, const HeadObs& x,
                       int mc_samples, Rng& rng);

/// log integral f_{z_P}(t) g(x|t)^lambda dt. Uses the closed form when
/// available, otherwise the M-sample Monte-Carlo estimate with t_l drawn
/// from rng.
double log_marginal(const PredictiveHead& head, const ParamStore& store, const HeadObs& x,
                    int mc_samples, Rng& rng);

/// log f(z | x): z_N prior plus, per head, prior + likelihood - marginal.
double log_aug_posterior(const AugmentedBase& base, const LatentLayout& layout,
                         const ParamStore& store, const Tensor& z,
                         const std::vector<double>& xrow, Rng& mc_rng);

struct Example {
  Tensor y;
  std::vector<double> x;
};

/// Empirical-KL training loss over a batch: mean over items of
/// -log f_z(T(y)) - logdet - loglik(x, T_P(y)) + log-marginal(x), with the
/// Monte-Carlo draws shared across the batch. Bit-reproducible for a fixed
/// rng seed. Non-finite per-item losses throw NumericalError naming the item.
double apcde_loss(const FlowModel& flow, const AugmentedBase& base, const ParamStore& store,
                  const std::vector<Example>& batch, Rng& mc_rng);

struct LossGrad {
  double loss = 0.0;
  std::vector<Tensor> grads;
};
LossGrad apcde_loss_grad(const FlowModel& flow, const AugmentedBase& base,
                         const ParamStore& store, const std::vector<Example>& batch,
                         Rng& mc_rng);

/// Derives covariate slot offsets from head specs; call after building or
/// loading heads.
void bind_covariate_slots(AugmentedBase& base);

}  // namespace apcde
