#pragma once
#include <vector>

#include "apcde/rng.hpp"
#include "apcde/tape.hpp"

namespace apcde {

/// Dense conditioner network: affine layers with tanh between them and an
/// identity output layer. Produces the shift (and log-scale) of a coupling
/// layer from its passive half.
struct Conditioner {
  std::vector<int> widths;  // input, hidden..., output
  std::vector<ParamRef> weights;
  std::vector<ParamRef> biases;
};

Tensor conditioner_eval(const Conditioner& net, const ParamStore& store, const Tensor& in);
NodeId conditioner_eval_tape(const Conditioner& net, Tape& tape, NodeId in);

struct ActNorm {
  ParamRef scale = -1;
  ParamRef bias = -1;
};

struct InvLinear {
  ParamRef weight = -1;
};

enum class CouplingVariant { additive, affine };

struct Coupling {
  CouplingVariant variant = CouplingVariant::additive;
  int parity = 0;  // 0: first half passive, 1: second half passive
  Conditioner net;
};

struct FlowStep {
  ActNorm actnorm;
  InvLinear linear;
  Coupling coupling;
};

struct FlowLevel {
  int width = 0;     // dimensions transformed at this level
  int factored = 0;  // dimensions frozen to the latent after this level
  std::vector<FlowStep> steps;
};

struct LatentBlock {
  int head = -1;
  int level = 0;                   // 1-based level of origin
  std::vector<int> level_indices;  // within that level's frozen output
  std::vector<int> flat_indices;   // resolved positions in the flat latent
};

/// Partition of the p latent dimensions into per-head z_P blocks and the
/// z_N complement. Blocks are disjoint, each drawn from a single level's
/// output, and together with z_N cover {0..p-1}.
struct LatentLayout {
  int p = 0;
  std::vector<LatentBlock> blocks;
  std::vector<int> zn_indices;
};

/// Invertible transform: L levels of repeated {actnorm, invertible linear,
/// coupling} steps; after each non-final level the first half of the
/// surviving dimensions is frozen into the flat latent.
struct FlowModel {
  int p = 0;
  std::vector<FlowLevel> levels;
  LatentLayout layout;
};

/// Flat offset and length of each level's frozen output inside the latent
/// vector, in level order (factored blocks first, final level last).
struct LevelSpan {
  int offset = 0;
  int length = 0;
};
std::vector<LevelSpan> level_spans(const FlowModel& model);

void validate_layout(const FlowModel& model);

// --- single-layer forwards -------------------------------------------------

struct ActNormInit {
  Tensor scale;
  Tensor bias;
};

/// Data-dependent initialization from an n x w batch: scale = 1/std,
/// bias = -mean/std per dimension (population standard deviation), so the
/// initialized layer whitens the batch. Zero variance in any dimension
/// throws DegenerateDataError.
ActNormInit actnorm_init(const Tensor& batch);

struct LayerForward {
  Tensor out;
  double logdet = 0.0;
};

LayerForward actnorm_forward(const ActNorm& layer, const ParamStore& store, const Tensor& in);
LayerForward invlinear_forward(const InvLinear& layer, const ParamStore& store, const Tensor& in);
LayerForward coupling_forward(const Coupling& layer, const ParamStore& store, const Tensor& in);

// --- whole-flow paths ------------------------------------------------------

struct FlowForward {
  Tensor z;
  double logdet = 0.0;
  std::vector<double> layer_logdets;  // one entry per applied layer
};

/// y -> (z, logdet). Non-finite intermediates throw NumericalError naming
/// the level/step/layer.
FlowForward flow_forward(const FlowModel& model, const ParamStore& store, const Tensor& y);

/// z -> y; exact inverse of flow_forward up to roundoff.
Tensor flow_inverse(const FlowModel& model, const ParamStore& store, const Tensor& z);

struct LatentParts {
  std::vector<Tensor> zp;  // one per layout block
  Tensor zn;
};
LatentParts latent_partition(const LatentLayout& layout, const Tensor& z);
Tensor latent_assemble(const LatentLayout& layout, const std::vector<Tensor>& zp, const Tensor& zn);

// --- tape path (training) ---------------------------------------------------

/// Input-independent per-step logdet nodes (actnorm and invertible-linear
/// terms), built once per tape and shared across batch items.
struct FlowSharedNodes {
  struct Step {
    NodeId actnorm_ld = -1;
    NodeId linear_ld = -1;
  };
  std::vector<Step> steps;  // level-major order
};
FlowSharedNodes flow_shared_nodes(const FlowModel& model, Tape& tape);

struct FlowTapeOut {
  NodeId z = -1;
  NodeId logdet = -1;
  std::vector<NodeId> layer_logdets;
};
FlowTapeOut flow_forward_tape(const FlowModel& model, Tape& tape, NodeId y,
                              const FlowSharedNodes* shared = nullptr);

/// Extract a subset of a latent vector node, merging contiguous index runs
/// into single slices.
NodeId tape_gather(Tape& tape, NodeId z, const std::vector<int>& indices);

/// Runs the first training batch through the flow level by level, setting
/// every actnorm's scale/bias from the batch statistics at its input.
void actnorm_init_from_data(const FlowModel& model, ParamStore& store,
                            const std::vector<Tensor>& batch_rows);

}  // namespace apcde
