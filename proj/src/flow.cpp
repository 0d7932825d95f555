#include "apcde/flow.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "apcde/linalg.hpp"

namespace apcde {

namespace {
constexpr double kLogScaleBound = 5.0;  // affine scales stay in [e^-5, e^5]

void check_finite(const Tensor& v, int level, int step, const char* layer) {
  if (!v.all_finite())
    throw NumericalError("flow_forward: non-finite output at level " +
                         std::to_string(level + 1) + " step " + std::to_string(step + 1) +
                         " (" + layer + ")");
}
}  // namespace

Tensor conditioner_eval(const Conditioner& net, const ParamStore& store, const Tensor& in) {
  if (in.rank() != 1 || static_cast<int>(in.size()) != net.widths.front())
    throw ConfigError("conditioner: input width mismatch");
  Tensor x = in;
  const std::size_t layers = net.weights.size();
  for (std::size_t i = 0; i < layers; ++i) {
    x = add(matvec(store.value(net.weights[i]), x), store.value(net.biases[i]));
    if (i + 1 < layers) x = vtanh(x);
  }
  return x;
}

NodeId conditioner_eval_tape(const Conditioner& net, Tape& tape, NodeId in) {
  if (tape.val(in).rank() != 1 ||
      static_cast<int>(tape.val(in).size()) != net.widths.front())
    throw ConfigError("conditioner: input width mismatch");
  NodeId x = in;
  const std::size_t layers = net.weights.size();
  for (std::size_t i = 0; i < layers; ++i) {
    x = tape.add(tape.matvec(tape.param(net.weights[i]), x), tape.param(net.biases[i]));
    if (i + 1 < layers) x = tape.vtanh(x);
  }
  return x;
}

ActNormInit actnorm_init(const Tensor& batch) {
  if (batch.rank() != 2 || batch.rows() < 2)
    throw ArgumentError("actnorm_init: batch of at least two rows required");
  const std::size_t n = batch.rows(), w = batch.cols();
  ActNormInit out{Tensor::zeros({w}), Tensor::zeros({w})};
  for (std::size_t j = 0; j < w; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += batch.at(i, j);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double d = batch.at(i, j) - mean;
      var += d * d;
    }
    var /= static_cast<double>(n);  // population convention
    if (var == 0.0)
      throw DegenerateDataError("actnorm_init: zero variance in dimension " + std::to_string(j));
    double std_dev = std::sqrt(var);
    out.scale[j] = 1.0 / std_dev;
    out.bias[j] = -mean / std_dev;
  }
  return out;
}

LayerForward actnorm_forward(const ActNorm& layer, const ParamStore& store, const Tensor& in) {
  const Tensor& s = store.value(layer.scale);
  const Tensor& b = store.value(layer.bias);
  LayerForward out;
  out.out = add(mul(in, s), b);
  for (double v : s.data()) out.logdet += std::log(std::abs(v));
  return out;
}

LayerForward invlinear_forward(const InvLinear& layer, const ParamStore& store, const Tensor& in) {
  const Tensor& w = store.value(layer.weight);
  LayerForward out;
  out.out = matvec(w, in);
  out.logdet = logdet_lu(w).log_abs;
  return out;
}

namespace {
struct Halves {
  Tensor passive, active;
};

Halves split_halves(const Tensor& in, int parity) {
  const std::size_t w = in.size();
  if (w % 2 != 0) throw ConfigError("coupling: input width must be even");
  const std::size_t half = w / 2;
  Halves h;
  if (parity == 0) {
    h.passive = slice(in, 0, half);
    h.active = slice(in, half, w);
  } else {
    h.passive = slice(in, half, w);
    h.active = slice(in, 0, half);
  }
  return h;
}

Tensor join_halves(const Tensor& passive, const Tensor& active, int parity) {
  return parity == 0 ? concat(passive, active) : concat(active, passive);
}

Tensor bounded_logscale(const Tensor& raw) {
  Tensor out = raw;
  for (double& v : out.data()) v = kLogScaleBound * std::tanh(v / kLogScaleBound);
  return out;
}
}  // namespace

LayerForward coupling_forward(const Coupling& layer, const ParamStore& store, const Tensor& in) {
  Halves h = split_halves(in, layer.parity);
  Tensor net = conditioner_eval(layer.net, store, h.passive);
  LayerForward out;
  if (layer.variant == CouplingVariant::additive) {
    if (net.size() != h.active.size()) throw ConfigError("coupling: conditioner output width mismatch");
    out.out = join_halves(h.passive, add(h.active, net), layer.parity);
  } else {
    if (net.size() != 2 * h.active.size())
      throw ConfigError("coupling: conditioner output width mismatch");
    Tensor shift = slice(net, 0, h.active.size());
    Tensor ls = bounded_logscale(slice(net, h.active.size(), net.size()));
    Tensor scaled = add(mul(h.active, vexp(ls)), shift);
    out.out = join_halves(h.passive, scaled, layer.parity);
    out.logdet = sum(ls);
  }
  return out;
}

std::vector<LevelSpan> level_spans(const FlowModel& model) {
  std::vector<LevelSpan> spans;
  int offset = 0;
  for (const FlowLevel& lvl : model.levels) {
    int len = lvl.factored > 0 ? lvl.factored : lvl.width;
    spans.push_back({offset, len});
    offset += len;
  }
  return spans;
}

void validate_layout(const FlowModel& model) {
  const LatentLayout& layout = model.layout;
  if (layout.p != model.p) throw ConfigError("layout: dimension mismatch with flow");
  std::vector<int> owner(model.p, -1);
  auto spans = level_spans(model);
  for (std::size_t b = 0; b < layout.blocks.size(); ++b) {
    const LatentBlock& blk = layout.blocks[b];
    if (blk.level < 1 || blk.level > static_cast<int>(spans.size()))
      throw ConfigError("layout: block level out of range");
    const LevelSpan& span = spans[blk.level - 1];
    if (blk.level_indices.size() != blk.flat_indices.size())
      throw ConfigError("layout: block index arity mismatch");
    for (std::size_t i = 0; i < blk.level_indices.size(); ++i) {
      int li = blk.level_indices[i];
      if (li < 0 || li >= span.length) throw ConfigError("layout: index outside level output");
      if (blk.flat_indices[i] != span.offset + li)
        throw ConfigError("layout: flat index inconsistent with level record");
      int fi = blk.flat_indices[i];
      if (owner[fi] != -1) throw ConfigError("layout: overlapping z_P blocks");
      owner[fi] = static_cast<int>(b);
    }
  }
  std::size_t zn_seen = 0;
  for (int i : layout.zn_indices) {
    if (i < 0 || i >= model.p || owner[i] != -1)
      throw ConfigError("layout: z_N overlaps a z_P block or is out of range");
    owner[i] = -2;
    ++zn_seen;
  }
  (void)zn_seen;
  for (int i = 0; i < model.p; ++i)
    if (owner[i] == -1) throw ConfigError("layout: latent dimension " + std::to_string(i) +
                                          " not covered by z_P or z_N");
}

FlowSharedNodes flow_shared_nodes(const FlowModel& model, Tape& tape) {
  FlowSharedNodes shared;
  for (const FlowLevel& lvl : model.levels)
    for (const FlowStep& step : lvl.steps) {
      FlowSharedNodes::Step s;
      s.actnorm_ld = tape.sum(tape.vlogabs(tape.param(step.actnorm.scale)));
      s.linear_ld = tape.logabsdet(tape.param(step.linear.weight));
      shared.steps.push_back(s);
    }
  return shared;
}

namespace {
struct CouplingTapeOut {
  NodeId out;
  NodeId logdet;  // -1 for additive
};

CouplingTapeOut coupling_forward_tape(const Coupling& layer, Tape& tape, NodeId in) {
  const std::size_t w = tape.val(in).size();
  if (w % 2 != 0) throw ConfigError("coupling: input width must be even");
  const std::size_t half = w / 2;
  NodeId passive = layer.parity == 0 ? tape.slice(in, 0, half) : tape.slice(in, half, w);
  NodeId active = layer.parity == 0 ? tape.slice(in, half, w) : tape.slice(in, 0, half);
  NodeId net = conditioner_eval_tape(layer.net, tape, passive);
  CouplingTapeOut out{-1, -1};
  NodeId new_active;
  if (layer.variant == CouplingVariant::additive) {
    if (tape.val(net).size() != half) throw ConfigError("coupling: conditioner output width mismatch");
    new_active = tape.add(active, net);
  } else {
    if (tape.val(net).size() != 2 * half)
      throw ConfigError("coupling: conditioner output width mismatch");
    NodeId shift = tape.slice(net, 0, half);
    NodeId raw = tape.slice(net, half, 2 * half);
    NodeId ls = tape.scale(tape.vtanh(tape.scale(raw, 1.0 / kLogScaleBound)), kLogScaleBound);
    new_active = tape.add(tape.mul(active, tape.vexp(ls)), shift);
    out.logdet = tape.sum(ls);
  }
  out.out = layer.parity == 0 ? tape.concat(passive, new_active)
                              : tape.concat(new_active, passive);
  return out;
}
}  // namespace

FlowTapeOut flow_forward_tape(const FlowModel& model, Tape& tape, NodeId y,
                              const FlowSharedNodes* shared) {
  if (tape.val(y).rank() != 1 || static_cast<int>(tape.val(y).size()) != model.p)
    throw ArgumentError("flow_forward: input length mismatch");

  FlowTapeOut out;
  NodeId total = tape.constant(Tensor::scalar(0.0));
  NodeId zero_ld = -1;  // lazy constant for additive couplings
  std::vector<NodeId> factored;
  NodeId cur = y;
  int gstep = 0;
  for (std::size_t l = 0; l < model.levels.size(); ++l) {
    const FlowLevel& lvl = model.levels[l];
    for (std::size_t s = 0; s < lvl.steps.size(); ++s, ++gstep) {
      const FlowStep& step = lvl.steps[s];

      NodeId sc = tape.param(step.actnorm.scale);
      cur = tape.add(tape.mul(cur, sc), tape.param(step.actnorm.bias));
      check_finite(tape.val(cur), l, s, "actnorm");
      NodeId ld_an = shared ? shared->steps[gstep].actnorm_ld : tape.sum(tape.vlogabs(sc));

      cur = tape.matvec(tape.param(step.linear.weight), cur);
      check_finite(tape.val(cur), l, s, "linear");
      NodeId ld_lin = shared ? shared->steps[gstep].linear_ld
                             : tape.logabsdet(tape.param(step.linear.weight));

      CouplingTapeOut c = coupling_forward_tape(step.coupling, tape, cur);
      cur = c.out;
      check_finite(tape.val(cur), l, s, "coupling");
      NodeId ld_coup = c.logdet;
      if (ld_coup < 0) {
        if (zero_ld < 0) zero_ld = tape.constant(Tensor::scalar(0.0));
        ld_coup = zero_ld;
      }

      out.layer_logdets.insert(out.layer_logdets.end(), {ld_an, ld_lin, ld_coup});
      total = tape.add(total, ld_an);
      total = tape.add(total, ld_lin);
      total = tape.add(total, ld_coup);
    }
    if (lvl.factored > 0) {
      factored.push_back(tape.slice(cur, 0, lvl.factored));
      cur = tape.slice(cur, lvl.factored, lvl.width);
    }
  }
  NodeId z = cur;
  for (auto it = factored.rbegin(); it != factored.rend(); ++it) z = tape.concat(*it, z);
  out.z = z;
  out.logdet = total;
  return out;
}

FlowForward flow_forward(const FlowModel& model, const ParamStore& store, const Tensor& y) {
  Tape tape(&store);
  FlowTapeOut t = flow_forward_tape(model, tape, tape.constant(y));
  FlowForward out;
  out.z = tape.val(t.z);
  out.logdet = tape.scalar(t.logdet);
  out.layer_logdets.reserve(t.layer_logdets.size());
  for (NodeId id : t.layer_logdets) out.layer_logdets.push_back(tape.scalar(id));
  return out;
}

namespace {
Tensor coupling_inverse(const Coupling& layer, const ParamStore& store, const Tensor& out) {
  Halves h = split_halves(out, layer.parity);
  Tensor net = conditioner_eval(layer.net, store, h.passive);
  Tensor active;
  if (layer.variant == CouplingVariant::additive) {
    active = sub(h.active, net);
  } else {
    const std::size_t half = h.active.size();
    Tensor shift = slice(net, 0, half);
    Tensor ls = bounded_logscale(slice(net, half, net.size()));
    active = mul(sub(h.active, shift), vexp(scale(ls, -1.0)));
  }
  return join_halves(h.passive, active, layer.parity);
}

Tensor step_inverse(const FlowStep& step, const ParamStore& store, const Tensor& out) {
  Tensor v = coupling_inverse(step.coupling, store, out);
  v = lu_solve(lu_factor(store.value(step.linear.weight)), v);
  const Tensor& sc = store.value(step.actnorm.scale);
  const Tensor& b = store.value(step.actnorm.bias);
  Tensor r = v;
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = (v[i] - b[i]) / sc[i];
  return r;
}
}  // namespace

Tensor flow_inverse(const FlowModel& model, const ParamStore& store, const Tensor& z) {
  if (z.rank() != 1 || static_cast<int>(z.size()) != model.p)
    throw ArgumentError("flow_inverse: input length mismatch");

  auto spans = level_spans(model);
  const int last = static_cast<int>(model.levels.size()) - 1;
  Tensor cur = slice(z, spans[last].offset, spans[last].offset + spans[last].length);
  for (int l = last; l >= 0; --l) {
    const FlowLevel& lvl = model.levels[l];
    for (auto it = lvl.steps.rbegin(); it != lvl.steps.rend(); ++it) {
      cur = step_inverse(*it, store, cur);
      if (!cur.all_finite())
        throw NumericalError("flow_inverse: non-finite output at level " + std::to_string(l + 1));
    }
    if (l > 0) {
      const LevelSpan& span = spans[l - 1];
      cur = concat(slice(z, span.offset, span.offset + span.length), cur);
    }
  }
  return cur;
}

LatentParts latent_partition(const LatentLayout& layout, const Tensor& z) {
  if (z.rank() != 1 || static_cast<int>(z.size()) != layout.p)
    throw ConfigError("latent_partition: latent length mismatch");
  LatentParts parts;
  for (const LatentBlock& blk : layout.blocks) {
    Tensor v = Tensor::zeros({blk.flat_indices.size()});
    for (std::size_t i = 0; i < blk.flat_indices.size(); ++i) {
      int fi = blk.flat_indices[i];
      if (fi < 0 || fi >= layout.p) throw ConfigError("latent_partition: index out of range");
      v[i] = z[fi];
    }
    parts.zp.push_back(std::move(v));
  }
  parts.zn = Tensor::zeros({layout.zn_indices.size()});
  for (std::size_t i = 0; i < layout.zn_indices.size(); ++i)
    parts.zn[i] = z[layout.zn_indices[i]];
  return parts;
}

Tensor latent_assemble(const LatentLayout& layout, const std::vector<Tensor>& zp, const Tensor& zn) {
  if (zp.size() != layout.blocks.size())
    throw ArgumentError("latent_assemble: block count mismatch");
  if (zn.size() != layout.zn_indices.size())
    throw ArgumentError("latent_assemble: z_N length mismatch");
  Tensor z = Tensor::zeros({static_cast<std::size_t>(layout.p)});
  for (std::size_t b = 0; b < layout.blocks.size(); ++b) {
    const LatentBlock& blk = layout.blocks[b];
    if (zp[b].size() != blk.flat_indices.size())
      throw ArgumentError("latent_assemble: block width mismatch");
    for (std::size_t i = 0; i < blk.flat_indices.size(); ++i)
      z[blk.flat_indices[i]] = zp[b][i];
  }
  for (std::size_t i = 0; i < layout.zn_indices.size(); ++i)
    z[layout.zn_indices[i]] = zn[i];
  return z;
}

NodeId tape_gather(Tape& tape, NodeId z, const std::vector<int>& indices) {
  if (indices.empty()) throw ArgumentError("tape_gather: empty index set");
  NodeId out = -1;
  std::size_t run_start = 0;
  for (std::size_t i = 1; i <= indices.size(); ++i) {
    bool run_ends = i == indices.size() || indices[i] != indices[i - 1] + 1;
    if (!run_ends) continue;
    NodeId piece = tape.slice(z, indices[run_start], indices[i - 1] + 1);
    out = out < 0 ? piece : tape.concat(out, piece);
    run_start = i;
  }
  return out;
}

void actnorm_init_from_data(const FlowModel& model, ParamStore& store,
                            const std::vector<Tensor>& batch_rows) {
  const std::size_t n = batch_rows.size();
  if (n < 2) throw DegenerateDataError("actnorm init: at least two samples required");
  Tensor x = Tensor::zeros({n, static_cast<std::size_t>(model.p)});
  for (std::size_t i = 0; i < n; ++i)
    for (int j = 0; j < model.p; ++j) x.at(i, j) = batch_rows[i][j];

  for (const FlowLevel& lvl : model.levels) {
    for (const FlowStep& step : lvl.steps) {
      ActNormInit ini = actnorm_init(x);
      store.value(step.actnorm.scale) = ini.scale;
      store.value(step.actnorm.bias) = ini.bias;
      for (std::size_t i = 0; i < n; ++i) {
        Tensor row = Tensor::zeros({x.cols()});
        for (std::size_t j = 0; j < x.cols(); ++j) row[j] = x.at(i, j);
        row = actnorm_forward(step.actnorm, store, row).out;
        row = invlinear_forward(step.linear, store, row).out;
        row = coupling_forward(step.coupling, store, row).out;
        for (std::size_t j = 0; j < x.cols(); ++j) x.at(i, j) = row[j];
      }
    }
    if (lvl.factored > 0) {
      Tensor next = Tensor::zeros({n, static_cast<std::size_t>(lvl.width - lvl.factored)});
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < next.cols(); ++j)
          next.at(i, j) = x.at(i, lvl.factored + j);
      x = std::move(next);
    }
  }
}

}  // namespace apcde
