#pragma once
#include <cstdint>
#include <vector>

#include "apcde/flow.hpp"
#include "apcde/posterior.hpp"

namespace apcde {

struct ArchConfig {
  int p = 0;
  int levels = 2;
  int depth = 4;
  std::vector<int> hidden = {64};  // conditioner hidden widths
  CouplingVariant variant = CouplingVariant::additive;
};

/// Where a head's z_P block sits: 1-based level (0 selects the final
/// level) and an index range [lo, hi) within that level's frozen output.
/// lo < 0 requests default packing at the front of the final level.
struct ZpSpec {
  int level = 0;
  int lo = -1;
  int hi = -1;
};

struct Model {
  ArchConfig arch;
  ParamStore store;
  FlowModel flow;
  AugmentedBase base;
};

enum class InitKind { random, identity };

LatentLayout resolve_layout(const ArchConfig& arch, const std::vector<HeadSpec>& heads,
                            const std::vector<ZpSpec>& zp);

/// Structure-only assembly with zero/unit parameters; build_model
/// randomizes on top of it and checkpoint loading overwrites values.
Model assemble_model(const ArchConfig& arch, const std::vector<HeadSpec>& heads,
                     const LatentLayout& layout);

/// Random initialization: unit actnorms (replaced by the data-dependent
/// init at training time), random-permutation invertible linears, random
/// hidden conditioner layers with zeroed output layers so every coupling
/// starts as the identity.
Model build_model(const ArchConfig& arch, const std::vector<HeadSpec>& heads,
                  const std::vector<ZpSpec>& zp, std::uint64_t seed,
                  InitKind init = InitKind::random);

}  // namespace apcde
