#include "apcde/model.hpp"

#include <cmath>
#include <numeric>
#include <string>

namespace apcde {

namespace {
std::vector<int> level_widths(const ArchConfig& arch) {
  if (arch.p < 2) throw ConfigError("flow: p must be at least 2");
  if (arch.levels < 1) throw ConfigError("flow: at least one level required");
  if (arch.depth < 1) throw ConfigError("flow: depth must be at least 1");
  std::vector<int> widths;
  int w = arch.p;
  for (int l = 0; l < arch.levels; ++l) {
    if (w % 2 != 0 || w < 2)
      throw ConfigError("flow: width " + std::to_string(w) + " at level " +
                        std::to_string(l + 1) + " must be even and >= 2");
    widths.push_back(w);
    w /= 2;
  }
  return widths;
}
}  // namespace

LatentLayout resolve_layout(const ArchConfig& arch, const std::vector<HeadSpec>& heads,
                            const std::vector<ZpSpec>& zp) {
  if (!zp.empty() && zp.size() != heads.size())
    throw ConfigError("layout: one z_P spec per head required");
  std::vector<int> widths = level_widths(arch);
  const int levels = arch.levels;

  std::vector<int> span_len(levels), span_off(levels);
  int off = 0;
  for (int l = 0; l < levels; ++l) {
    span_len[l] = l + 1 < levels ? widths[l] / 2 : widths[l];
    span_off[l] = off;
    off += span_len[l];
  }

  LatentLayout layout;
  layout.p = arch.p;
  int cursor = span_off[levels - 1];  // default packing: front of the final level
  for (std::size_t h = 0; h < heads.size(); ++h) {
    ZpSpec spec = zp.empty() ? ZpSpec{} : zp[h];
    int level = spec.level == 0 ? levels : spec.level;
    if (level < 1 || level > levels) throw ConfigError("layout: level out of range");
    int lo = spec.lo, hi = spec.hi;
    if (lo < 0) {
      if (level != levels) throw ConfigError("layout: default packing requires the final level");
      lo = cursor - span_off[level - 1];
      hi = lo + heads[h].d;
      cursor += heads[h].d;
    }
    if (hi - lo != heads[h].d)
      throw ConfigError("layout: block width does not match head d");
    if (lo < 0 || hi > span_len[level - 1])
      throw ConfigError("layout: block outside the level output");
    LatentBlock blk;
    blk.head = static_cast<int>(h);
    blk.level = level;
    for (int i = lo; i < hi; ++i) {
      blk.level_indices.push_back(i);
      blk.flat_indices.push_back(span_off[level - 1] + i);
    }
    layout.blocks.push_back(std::move(blk));
  }

  std::vector<bool> taken(arch.p, false);
  for (const LatentBlock& blk : layout.blocks)
    for (int i : blk.flat_indices) {
      if (taken[i]) throw ConfigError("layout: overlapping z_P blocks");
      taken[i] = true;
    }
  for (int i = 0; i < arch.p; ++i)
    if (!taken[i]) layout.zn_indices.push_back(i);
  return layout;
}

Model assemble_model(const ArchConfig& arch, const std::vector<HeadSpec>& heads,
                     const LatentLayout& layout) {
  std::vector<int> widths = level_widths(arch);
  for (int h : arch.hidden)
    if (h < 1) throw ConfigError("flow: conditioner hidden width must be positive");

  Model model;
  model.arch = arch;
  model.flow.p = arch.p;
  model.flow.layout = layout;

  for (int l = 0; l < arch.levels; ++l) {
    FlowLevel level;
    level.width = widths[l];
    level.factored = l + 1 < arch.levels ? widths[l] / 2 : 0;
    const std::size_t w = static_cast<std::size_t>(widths[l]);
    const std::size_t half = w / 2;
    for (int s = 0; s < arch.depth; ++s) {
      std::string prefix =
          "flow.L" + std::to_string(l + 1) + ".S" + std::to_string(s + 1) + ".";
      FlowStep step;
      step.actnorm.scale = model.store.add(prefix + "actnorm.scale", Tensor::full({w}, 1.0));
      step.actnorm.bias = model.store.add(prefix + "actnorm.bias", Tensor::zeros({w}));
      step.linear.weight = model.store.add(prefix + "linear.W", Tensor::identity(w));

      step.coupling.variant = arch.variant;
      step.coupling.parity = s % 2;
      Conditioner& net = step.coupling.net;
      net.widths.push_back(static_cast<int>(half));
      for (int hidden : arch.hidden) net.widths.push_back(hidden);
      net.widths.push_back(static_cast<int>(
          arch.variant == CouplingVariant::additive ? half : 2 * half));
      for (std::size_t i = 0; i + 1 < net.widths.size(); ++i) {
        std::size_t in = static_cast<std::size_t>(net.widths[i]);
        std::size_t out = static_cast<std::size_t>(net.widths[i + 1]);
        net.weights.push_back(model.store.add(prefix + "coupling.W" + std::to_string(i),
                                              Tensor::zeros({out, in})));
        net.biases.push_back(model.store.add(prefix + "coupling.b" + std::to_string(i),
                                             Tensor::zeros({out})));
      }
      level.steps.push_back(std::move(step));
    }
    model.flow.levels.push_back(std::move(level));
  }

  for (std::size_t h = 0; h < heads.size(); ++h) {
    const HeadSpec& spec = heads[h];
    std::string prefix = "head" + std::to_string(h) + ".";
    PredictiveHead head;
    head.spec = spec;
    if (spec.kind == HeadKind::categorical) {
      if (spec.K < 2) throw ConfigError("head: categorical K must be >= 2");
      head.beta = model.store.add(
          prefix + "beta",
          Tensor::zeros({static_cast<std::size_t>(spec.K - 1), static_cast<std::size_t>(spec.d)}));
      if (spec.free_intercept)
        head.beta0 = model.store.add(prefix + "beta0",
                                     Tensor::zeros({static_cast<std::size_t>(spec.K - 1)}));
    } else {
      if (spec.m < 1) throw ConfigError("head: linear-gaussian m must be >= 1");
      if (!(spec.noise_value > 0)) throw ConfigError("head: noise variance must be positive");
      head.beta = model.store.add(
          prefix + "beta1",
          Tensor::zeros({static_cast<std::size_t>(spec.m), static_cast<std::size_t>(spec.d)}));
      head.beta0 = model.store.add(prefix + "beta0",
                                   Tensor::zeros({static_cast<std::size_t>(spec.m)}));
      double lv = spec.pin_noise ? std::log(spec.noise_value) : 0.0;
      head.log_var = model.store.add(prefix + "log_var",
                                     Tensor::full({static_cast<std::size_t>(spec.m)}, lv),
                                     !spec.pin_noise);
    }
    if (!(spec.lambda > 0)) throw ConfigError("head: lambda must be positive");
    model.base.heads.push_back(std::move(head));
  }
  bind_covariate_slots(model.base);
  validate_layout(model.flow);

  for (const LatentBlock& blk : model.flow.layout.blocks) {
    const HeadSpec& spec = model.base.heads.at(blk.head).spec;
    if (static_cast<int>(blk.flat_indices.size()) != spec.d)
      throw ConfigError("layout: block width does not match head d");
  }
  return model;
}

Model build_model(const ArchConfig& arch, const std::vector<HeadSpec>& heads,
                  const std::vector<ZpSpec>& zp, std::uint64_t seed, InitKind init) {
  Model model = assemble_model(arch, heads, resolve_layout(arch, heads, zp));
  if (init == InitKind::identity) return model;

  Rng rng(seed, Stream::model_init);
  for (const FlowLevel& level : model.flow.levels) {
    const std::size_t w = static_cast<std::size_t>(level.width);
    for (const FlowStep& step : level.steps) {
      // random permutation matrix: logdet 0, invertible by construction
      std::vector<std::size_t> perm(w);
      std::iota(perm.begin(), perm.end(), 0);
      rng.shuffle(perm);
      Tensor& weight = model.store.value(step.linear.weight);
      weight = Tensor::zeros({w, w});
      for (std::size_t i = 0; i < w; ++i) weight.at(i, perm[i]) = 1.0;

      const Conditioner& net = step.coupling.net;
      for (std::size_t i = 0; i + 1 < net.weights.size(); ++i) {
        Tensor& wt = model.store.value(net.weights[i]);
        double sd = 1.0 / std::sqrt(static_cast<double>(net.widths[i]));
        for (double& v : wt.data()) v = sd * rng.normal();
      }
      // final conditioner layer stays at zero: couplings start as identity
    }
  }
  return model;
}

}  // namespace apcde
