#include "apcde/inference.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <thread>

#include "apcde/linalg.hpp"

namespace apcde {

Embedding embed(const Model& model, const Tensor& y) {
  FlowForward fwd = flow_forward(model.flow, model.store, y);
  LatentParts parts = latent_partition(model.flow.layout, fwd.z);
  return {std::move(parts.zp), std::move(parts.zn)};
}

double log_cond_density(const Model& model, const Tensor& y, const std::vector<double>& xrow,
                        Rng& mc_rng) {
  FlowForward fwd = flow_forward(model.flow, model.store, y);
  return log_aug_posterior(model.base, model.flow.layout, model.store, fwd.z, xrow, mc_rng) +
         fwd.logdet;
}

double log_marg_density(const Model& model, const Tensor& y) {
  FlowForward fwd = flow_forward(model.flow, model.store, y);
  return log_std_normal(fwd.z) + fwd.logdet;
}

double bits_per_dim(const Model& model, const Tensor& y, double scale_divisor, bool nats) {
  if (!(scale_divisor > 0)) throw ArgumentError("bits_per_dim: scale divisor must be positive");
  double lm = log_marg_density(model, y);
  double p = static_cast<double>(model.arch.p);
  if (nats) return -lm / p + std::log(scale_divisor);
  return -lm / (p * M_LN2) + std::log2(scale_divisor);
}

Classified classify(const Model& model, const Tensor& y) {
  int head_idx = -1;
  for (std::size_t h = 0; h < model.base.heads.size(); ++h)
    if (model.base.heads[h].spec.kind == HeadKind::categorical) {
      if (head_idx >= 0) throw ConfigError("classify: more than one categorical head");
      head_idx = static_cast<int>(h);
    }
  if (head_idx < 0) throw ConfigError("classify: no categorical head");

  Embedding emb = embed(model, y);
  int block = -1;
  for (std::size_t b = 0; b < model.flow.layout.blocks.size(); ++b)
    if (model.flow.layout.blocks[b].head == head_idx) block = static_cast<int>(b);
  Tensor logits = head_logits(model.base.heads[head_idx], model.store, emb.zp[block]);

  Classified out;
  out.label = 1;
  double best = logits[0];
  for (std::size_t k = 1; k < logits.size(); ++k)
    if (logits[k] > best) {
      best = logits[k];
      out.label = static_cast<int>(k) + 1;
    }
  for (std::size_t k = 0; k < logits.size(); ++k)
    if (static_cast<int>(k) + 1 != out.label && logits[k] == best) out.tie = true;
  return out;
}

std::vector<Tensor> sample_uncond(const Model& model, int n, Rng& rng) {
  if (n < 1) throw ArgumentError("sample_uncond: n must be >= 1");
  std::vector<Tensor> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i)
    out.push_back(flow_inverse(model.flow, model.store,
                               rng.normal_vec(static_cast<std::size_t>(model.arch.p))));
  return out;
}

std::vector<Tensor> generate_fixed_zp(const Model& model, const std::vector<Tensor>& zp,
                                      int draws, Rng& rng) {
  if (draws < 1) throw ArgumentError("generate_fixed_zp: J must be >= 1");
  const LatentLayout& layout = model.flow.layout;
  std::vector<Tensor> out;
  out.reserve(draws);
  for (int j = 0; j < draws; ++j) {
    Tensor zn = rng.normal_vec(layout.zn_indices.size());
    out.push_back(flow_inverse(model.flow, model.store, latent_assemble(layout, zp, zn)));
  }
  return out;
}

Tensor zp_for_covariate(const Model& model, int head, const Tensor& target) {
  const PredictiveHead& h = model.base.heads.at(head);
  if (h.spec.kind != HeadKind::linear_gaussian)
    throw ConfigError("zp_for_covariate: linear-gaussian head required");
  if (static_cast<int>(target.size()) != h.spec.m)
    throw ArgumentError("zp_for_covariate: target dimension mismatch");
  const Tensor& b1 = model.store.value(h.beta);
  Tensor r = sub(target, model.store.value(h.beta0));
  // min-norm solution b1' (b1 b1')^-1 r
  Tensor gram = matmul(b1, transpose(b1));
  Tensor w = lu_solve(lu_factor(gram), r);
  return matvec(transpose(b1), w);
}

namespace {
void parallel_for(int n, int threads, const std::function<void(int)>& body) {
  if (threads <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  int used = std::min(threads, n);
  for (int t = 0; t < used; ++t)
    pool.emplace_back([&, t] {
      for (int i = t; i < n; i += used) body(i);
    });
  for (std::thread& th : pool) th.join();
}
}  // namespace

DensityReport density_report(const Model& model, const Dataset& data, double scale_divisor,
                             std::uint64_t seed, int threads, std::string fingerprint) {
  if (data.x_dim() != model.base.x_dim)
    throw DataError("density_report: covariate columns do not match the model heads");
  const int n = data.n();
  DensityReport report;
  report.fingerprint = std::move(fingerprint);
  report.id.resize(n);
  report.log_cond.resize(n);
  report.log_marg.resize(n);
  report.bpd.resize(n);
  // per-sample rng streams keep the output independent of the thread count
  parallel_for(n, threads, [&](int i) {
    Tensor y = data.row_y(i);
    Rng mc(seed, 0x10000u + static_cast<std::uint64_t>(i));
    report.id[i] = i;
    report.log_cond[i] = log_cond_density(model, y, data.row_x(i), mc);
    report.log_marg[i] = log_marg_density(model, y);
    report.bpd[i] = bits_per_dim(model, y, scale_divisor);
  });
  return report;
}

void write_density_csv(const DensityReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("write_density_csv: cannot open " + path);
  out << "# fingerprint: " << report.fingerprint << "\n";
  out << "id,log_cond,log_marg,bpd\n";
  char buf[120];
  for (std::size_t i = 0; i < report.id.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g\n", report.id[i], report.log_cond[i],
                  report.log_marg[i], report.bpd[i]);
    out << buf;
  }
  if (!out) throw DataError("write_density_csv: write failed for " + path);
}

}  // namespace apcde
