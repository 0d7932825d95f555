#include "apcde/posterior.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "apcde/linalg.hpp"

namespace apcde {

namespace {
const double kLn2Pi = std::log(2.0 * M_PI);

int block_for_head(const LatentLayout& layout, int head) {
  for (std::size_t b = 0; b < layout.blocks.size(); ++b)
    if (layout.blocks[b].head == head) return static_cast<int>(b);
  throw ConfigError("layout: no z_P block for head " + std::to_string(head));
}
}  // namespace

void bind_covariate_slots(AugmentedBase& base) {
  base.x_offsets.clear();
  int off = 0;
  for (const PredictiveHead& h : base.heads) {
    base.x_offsets.push_back(off);
    off += h.spec.kind == HeadKind::categorical ? 1 : h.spec.m;
  }
  base.x_dim = off;
}

HeadObs head_obs(const AugmentedBase& base, int head, const std::vector<double>& xrow) {
  if (static_cast<int>(xrow.size()) != base.x_dim)
    throw ArgumentError("head_obs: covariate row arity mismatch");
  const PredictiveHead& h = base.heads.at(head);
  const int off = base.x_offsets.at(head);
  HeadObs obs;
  if (h.spec.kind == HeadKind::categorical) {
    obs.label = static_cast<int>(std::llround(xrow[off]));
    if (obs.label < 1 || obs.label > h.spec.K)
      throw ArgumentError("head_obs: label " + std::to_string(obs.label) +
                          " outside 1.." + std::to_string(h.spec.K));
  } else {
    obs.value = Tensor::zeros({static_cast<std::size_t>(h.spec.m)});
    for (int j = 0; j < h.spec.m; ++j) obs.value[j] = xrow[off + j];
  }
  return obs;
}

double log_std_normal(const Tensor& z) {
  double sq = 0.0;
  for (double v : z.data()) sq += v * v;
  return -0.5 * static_cast<double>(z.size()) * kLn2Pi - 0.5 * sq;
}

NodeId log_std_normal_tape(Tape& tape, NodeId z) {
  double d = static_cast<double>(tape.val(z).size());
  return tape.add_const(tape.scale(tape.sum(tape.mul(z, z)), -0.5), -0.5 * d * kLn2Pi);
}

Tensor head_logits(const PredictiveHead& head, const ParamStore& store, const Tensor& zp) {
  if (head.spec.kind != HeadKind::categorical)
    throw ArgumentError("head_logits: categorical head required");
  Tensor logits = matvec(store.value(head.beta), zp);
  if (head.beta0 >= 0) logits = add(logits, store.value(head.beta0));
  return concat(logits, Tensor::vec({0.0}));  // class K pinned to zero
}

double loglik_head(const PredictiveHead& head, const ParamStore& store, const HeadObs& x,
                   const Tensor& zp) {
  const HeadSpec& spec = head.spec;
  if (static_cast<int>(zp.size()) != spec.d)
    throw ArgumentError("loglik_head: z_P width mismatch");
  if (spec.kind == HeadKind::categorical) {
    if (x.label < 1 || x.label > spec.K)
      throw ArgumentError("loglik_head: label out of range");
    Tensor logits = head_logits(head, store, zp);
    return spec.lambda * (logits[x.label - 1] - logsumexp(logits));
  }
  const Tensor& b0 = store.value(head.beta0);
  const Tensor& lv = store.value(head.log_var);
  Tensor mean = add(matvec(store.value(head.beta), zp), b0);
  double acc = 0.0;
  for (int j = 0; j < spec.m; ++j) {
    double var = std::exp(lv[j]);
    double r = x.value[j] - mean[j];
    acc += -0.5 * (kLn2Pi + lv[j]) - r * r / (2.0 * var);
  }
  return spec.lambda * acc;
}

NodeId loglik_head_tape(const PredictiveHead& head, Tape& tape, const HeadObs& x, NodeId zp) {
  const HeadSpec& spec = head.spec;
  if (static_cast<int>(tape.val(zp).size()) != spec.d)
    throw ArgumentError("loglik_head: z_P width mismatch");
  if (spec.kind == HeadKind::categorical) {
    if (x.label < 1 || x.label > spec.K)
      throw ArgumentError("loglik_head: label out of range");
    NodeId logits = tape.matvec(tape.param(head.beta), zp);
    if (head.beta0 >= 0) logits = tape.add(logits, tape.param(head.beta0));
    logits = tape.concat(logits, tape.constant(Tensor::vec({0.0})));
    NodeId hit = tape.sum(tape.slice(logits, x.label - 1, x.label));
    return tape.scale(tape.sub(hit, tape.logsumexp(logits)), spec.lambda);
  }
  NodeId mean = tape.add(tape.matvec(tape.param(head.beta), zp), tape.param(head.beta0));
  NodeId resid = tape.sub(tape.constant(x.value), mean);
  NodeId lv = tape.param(head.log_var);
  NodeId quad = tape.sum(tape.mul(tape.mul(resid, resid), tape.vexp(tape.scale(lv, -1.0))));
  NodeId logdet_part = tape.add_const(tape.sum(lv), spec.m * kLn2Pi);
  return tape.scale(tape.add(quad, logdet_part), -0.5 * spec.lambda);
}

bool has_closed_form_marginal(const PredictiveHead& head) {
  return head.spec.kind == HeadKind::linear_gaussian && head.spec.lambda == 1.0;
}

double log_marginal_closed(const PredictiveHead& head, const ParamStore& store,
                           const HeadObs& x) {
  if (!has_closed_form_marginal(head))
    throw ArgumentError("log_marginal_closed: not available for this head");
  const HeadSpec& spec = head.spec;
  const Tensor& b1 = store.value(head.beta);
  const Tensor& lv = store.value(head.log_var);
  Tensor sigma = matmul(b1, transpose(b1));
  for (int j = 0; j < spec.m; ++j) sigma.at(j, j) += std::exp(lv[j]);
  Tensor r = sub(x.value, store.value(head.beta0));
  LuFactor f = lu_factor(sigma);
  double logdet = 0.0;
  for (int j = 0; j < spec.m; ++j) logdet += std::log(std::abs(f.lu.at(j, j)));
  double quad = dot(r, lu_solve(f, r));
  return -0.5 * (spec.m * kLn2Pi + logdet + quad);
}

double log_marginal_mc(const PredictiveHead& head, const ParamStore& store, const HeadObs& x,
                       int mc_samples, Rng& rng) {
  if (mc_samples < 1) throw ArgumentError("log_marginal: M must be >= 1");
  const HeadSpec& spec = head.spec;
  const int d = spec.d;
  std::vector<double> loglik(mc_samples);
  std::vector<double> t(d);

  if (spec.kind == HeadKind::categorical) {
    if (x.label < 1 || x.label > spec.K)
      throw ArgumentError("log_marginal: label out of range");
    const Tensor& beta = store.value(head.beta);
    const Tensor* beta0 = head.beta0 >= 0 ? &store.value(head.beta0) : nullptr;
    std::vector<double> logits(spec.K);
    for (int l = 0; l < mc_samples; ++l) {
      for (int j = 0; j < d; ++j) t[j] = rng.normal();
      for (int k = 0; k < spec.K - 1; ++k) {
        double acc = beta0 ? (*beta0)[k] : 0.0;
        for (int j = 0; j < d; ++j) acc += beta.at(k, j) * t[j];
        logits[k] = acc;
      }
      logits[spec.K - 1] = 0.0;
      loglik[l] = spec.lambda * (logits[x.label - 1] - logsumexp(logits));
    }
  } else {
    const Tensor& b1 = store.value(head.beta);
    const Tensor& b0 = store.value(head.beta0);
    const Tensor& lv = store.value(head.log_var);
    double const_part = 0.0;
    for (int j = 0; j < spec.m; ++j) const_part += kLn2Pi + lv[j];
    for (int l = 0; l < mc_samples; ++l) {
      for (int j = 0; j < d; ++j) t[j] = rng.normal();
      double quad = 0.0;
      for (int j = 0; j < spec.m; ++j) {
        double mean = b0[j];
        for (int jj = 0; jj < d; ++jj) mean += b1.at(j, jj) * t[jj];
        double r = x.value[j] - mean;
        quad += r * r * std::exp(-lv[j]);
      }
      loglik[l] = -0.5 * spec.lambda * (const_part + quad);
    }
  }

  // m + log(mean exp(a - m)) keeps the constant-integrand case exact.
  double m = *std::max_element(loglik.begin(), loglik.end());
  double acc = 0.0;
  for (double a : loglik) acc += std::exp(a - m);
  return m + std::log(acc / static_cast<double>(mc_samples));
}

double log_marginal(const PredictiveHead& head, const ParamStore& store, const HeadObs& x,
                    int mc_samples, Rng& rng) {
  if (mc_samples < 1) throw ArgumentError("log_marginal: M must be >= 1");
  if (has_closed_form_marginal(head)) return log_marginal_closed(head, store, x);
  return log_marginal_mc(head, store, x, mc_samples, rng);
}

double log_aug_posterior(const AugmentedBase& base, const LatentLayout& layout,
                         const ParamStore& store, const Tensor& z,
                         const std::vector<double>& xrow, Rng& mc_rng) {
  LatentParts parts = latent_partition(layout, z);
  double out = log_std_normal(parts.zn);
  for (std::size_t h = 0; h < base.heads.size(); ++h) {
    const PredictiveHead& head = base.heads[h];
    const Tensor& zp = parts.zp[block_for_head(layout, static_cast<int>(h))];
    HeadObs obs = head_obs(base, static_cast<int>(h), xrow);
    out += log_std_normal(zp);
    out += loglik_head(head, store, obs, zp);
    out -= log_marginal(head, store, obs, base.mc_samples, mc_rng);
  }
  return out;
}

namespace {
// Shared per-batch marginal nodes for one head.
struct HeadBatchNodes {
  std::vector<NodeId> cat_marginal;  // per class, categorical heads
  NodeId lin_precision = -1;         // inverse(Sigma), closed-form linear heads
  NodeId lin_logdet = -1;
  NodeId lin_proj = -1;  // T beta1', MC linear heads
  NodeId lin_winv = -1;  // exp(-log_var)
  NodeId lin_const = -1; // -(m log 2pi + sum(log_var)) / 2
};

HeadBatchNodes build_head_batch_nodes(const PredictiveHead& head, Tape& tape, int mc_samples,
                                      Rng& rng) {
  const HeadSpec& spec = head.spec;
  HeadBatchNodes out;
  const double log_m = std::log(static_cast<double>(mc_samples));

  if (spec.kind == HeadKind::categorical) {
    NodeId draws = tape.constant(rng.normal_mat(mc_samples, spec.d));
    NodeId logits = tape.matmul(draws, tape.transpose(tape.param(head.beta)));
    if (head.beta0 >= 0) logits = tape.add_rowvec(logits, tape.param(head.beta0));
    logits = tape.hcat(logits, tape.constant(Tensor::zeros(
                                   {static_cast<std::size_t>(mc_samples), 1})));
    NodeId rowlse = tape.row_logsumexp(logits);
    for (int k = 0; k < spec.K; ++k) {
      NodeId a = tape.scale(tape.sub(tape.col(logits, k), rowlse), spec.lambda);
      out.cat_marginal.push_back(tape.add_const(tape.logsumexp(a), -log_m));
    }
    return out;
  }

  if (has_closed_form_marginal(head)) {
    NodeId b1 = tape.param(head.beta);
    NodeId sigma = tape.add(tape.matmul(b1, tape.transpose(b1)),
                            tape.diagmat(tape.vexp(tape.param(head.log_var))));
    out.lin_precision = tape.inverse(sigma);
    out.lin_logdet = tape.logabsdet(sigma);
    return out;
  }

  // tempered linear-gaussian: Monte-Carlo marginal
  NodeId draws = tape.constant(rng.normal_mat(mc_samples, spec.d));
  out.lin_proj = tape.matmul(draws, tape.transpose(tape.param(head.beta)));
  NodeId lv = tape.param(head.log_var);
  out.lin_winv = tape.vexp(tape.scale(lv, -1.0));
  out.lin_const = tape.scale(tape.add_const(tape.sum(lv), spec.m * kLn2Pi), -0.5);
  return out;
}

NodeId head_marginal_node(const PredictiveHead& head, Tape& tape, const HeadBatchNodes& nodes,
                          const HeadObs& obs, int mc_samples) {
  const HeadSpec& spec = head.spec;
  const double log_m = std::log(static_cast<double>(mc_samples));

  if (spec.kind == HeadKind::categorical) return nodes.cat_marginal.at(obs.label - 1);

  if (has_closed_form_marginal(head)) {
    NodeId r = tape.sub(tape.constant(obs.value), tape.param(head.beta0));
    NodeId quad = tape.sum(tape.mul(r, tape.matvec(nodes.lin_precision, r)));
    return tape.add_const(tape.scale(tape.add(nodes.lin_logdet, quad), -0.5),
                          -0.5 * spec.m * kLn2Pi);
  }

  NodeId cvec = tape.sub(tape.constant(obs.value), tape.param(head.beta0));
  NodeId resid = tape.add_rowvec(tape.scale(nodes.lin_proj, -1.0), cvec);
  NodeId quad = tape.row_sum(tape.mul_rowvec(tape.mul(resid, resid), nodes.lin_winv));
  NodeId ll = tape.add_vs(tape.scale(quad, -0.5), nodes.lin_const);
  NodeId a = tape.scale(ll, spec.lambda);
  return tape.add_const(tape.logsumexp(a), -log_m);
}

struct LossBuild {
  Tape tape;
  NodeId loss = -1;
};

LossBuild build_loss(const FlowModel& flow, const AugmentedBase& base, const ParamStore& store,
                     const std::vector<Example>& batch, Rng& mc_rng) {
  if (batch.empty()) throw ArgumentError("apcde_loss: empty batch");
  LossBuild b{Tape(&store), -1};
  Tape& tape = b.tape;

  FlowSharedNodes shared = flow_shared_nodes(flow, tape);
  std::vector<HeadBatchNodes> head_nodes;
  head_nodes.reserve(base.heads.size());
  for (const PredictiveHead& head : base.heads)
    head_nodes.push_back(build_head_batch_nodes(head, tape, base.mc_samples, mc_rng));

  NodeId acc = -1;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    FlowTapeOut fwd = flow_forward_tape(flow, tape, tape.constant(batch[i].y), &shared);
    NodeId li = tape.sub(tape.scale(log_std_normal_tape(tape, fwd.z), -1.0), fwd.logdet);
    for (std::size_t h = 0; h < base.heads.size(); ++h) {
      const PredictiveHead& head = base.heads[h];
      const LatentBlock& blk = flow.layout.blocks.at(block_for_head(flow.layout, h));
      NodeId zp = tape_gather(tape, fwd.z, blk.flat_indices);
      HeadObs obs = head_obs(base, static_cast<int>(h), batch[i].x);
      li = tape.sub(li, loglik_head_tape(head, tape, obs, zp));
      li = tape.add(li, head_marginal_node(head, tape, head_nodes[h], obs, base.mc_samples));
    }
    if (!tape.val(li).all_finite())
      throw NumericalError("apcde_loss: non-finite loss at batch item " + std::to_string(i));
    acc = acc < 0 ? li : tape.add(acc, li);
  }
  b.loss = tape.scale(acc, 1.0 / static_cast<double>(batch.size()));
  return b;
}
}  // namespace

double apcde_loss(const FlowModel& flow, const AugmentedBase& base, const ParamStore& store,
                  const std::vector<Example>& batch, Rng& mc_rng) {
  LossBuild b = build_loss(flow, base, store, batch, mc_rng);
  return b.tape.scalar(b.loss);
}

LossGrad apcde_loss_grad(const FlowModel& flow, const AugmentedBase& base,
                         const ParamStore& store, const std::vector<Example>& batch,
                         Rng& mc_rng) {
  LossBuild b = build_loss(flow, base, store, batch, mc_rng);
  LossGrad out;
  out.loss = b.tape.scalar(b.loss);
  out.grads = b.tape.gradient_of(b.loss);
  return out;
}

}  // namespace apcde
