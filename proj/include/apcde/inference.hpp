#pragma once
#include <string>
#include <vector>

#include "apcde/data.hpp"
#include "apcde/model.hpp"

namespace apcde {

struct Embedding {
  std::vector<Tensor> zp;  // one per head, layout order
  Tensor zn;
};

/// z_P per head and z_N for one response: flow_forward then the layout
/// partition.
Embedding embed(const Model& model, const Tensor& y);

/// log f(y | x) = log f(z|x) at T(y) plus the Jacobian term. The head
/// marginal uses the closed form when available, Monte-Carlo draws from
/// mc_rng otherwise.
double log_cond_density(const Model& model, const Tensor& y, const std::vector<double>& xrow,
                        Rng& mc_rng);

/// log f(y) = log N(T(y); 0, I_p) + logdet.
double log_marg_density(const Model& model, const Tensor& y);

/// -log2 f(y)/p + log2(scale_divisor), the discrete-data convention for
/// inputs scaled to (0,1). nats=true switches both terms to base e.
double bits_per_dim(const Model& model, const Tensor& y, double scale_divisor = 256.0,
                    bool nats = false);

struct Classified {
  int label = 0;  // internal 1..K
  bool tie = false;
};

/// argmax_k f(x=k | z_P) under the single categorical head; ties resolve
/// to the lowest class index with the tie flag set.
Classified classify(const Model& model, const Tensor& y);

std::vector<Tensor> sample_uncond(const Model& model, int n, Rng& rng);

/// Holds the given z_P blocks fixed and redraws z_N ~ N(0, I) J times,
/// pulling each latent back through the inverse flow.
std::vector<Tensor> generate_fixed_zp(const Model& model, const std::vector<Tensor>& zp,
                                      int draws, Rng& rng);

/// Maps a target covariate value of a linear-gaussian head onto z_P via
/// the regression inverse (min-norm solution of beta0 + beta1 zp = target).
Tensor zp_for_covariate(const Model& model, int head, const Tensor& target);

struct DensityReport {
  std::vector<int> id;
  std::vector<double> log_cond;
  std::vector<double> log_marg;
  std::vector<double> bpd;
  std::string fingerprint;
};

DensityReport density_report(const Model& model, const Dataset& data, double scale_divisor,
                             std::uint64_t seed, int threads, std::string fingerprint);
void write_density_csv(const DensityReport& report, const std::string& path);

}  // namespace apcde
