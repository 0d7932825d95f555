#pragma once
#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "apcde/tensor.hpp"

namespace apcde {

using ParamRef = int;

/// Named parameter tensors with stable insertion order. The flow, the
/// predictive heads and the probe classifier all keep their weights here;
/// checkpoints serialize the store by name.
class ParamStore {
 public:
  ParamRef add(std::string name, Tensor value, bool trainable = true);

  int size() const { return static_cast<int>(entries_.size()); }
  const Tensor& value(ParamRef p) const;
  Tensor& value(ParamRef p);
  const std::string& name(ParamRef p) const;
  bool trainable(ParamRef p) const;
  ParamRef find(const std::string& name) const;  // -1 when absent

 private:
  struct Entry {
    std::string name;
    Tensor value;
    bool trainable;
  };
  std::vector<Entry> entries_;
  std::unordered_map<std::string, ParamRef> index_;
};

using NodeId = int;

/// Reverse-mode gradient tape over a fixed primitive vocabulary. A tape is
/// rebuilt per batch, records forward values eagerly and replays adjoints
/// in reverse creation order, so gradients are deterministic for a fixed
/// graph. Single-threaded; distinct tapes may run concurrently.
class Tape {
 public:
  explicit Tape(const ParamStore* params = nullptr);

  NodeId constant(Tensor v);
  /// Memoized leaf for a store parameter; non-trainable parameters enter
  /// as constants.
  NodeId param(ParamRef p);

  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);  // elementwise
  NodeId scale(NodeId a, double c);
  NodeId add_const(NodeId a, double c);
  NodeId vtanh(NodeId a);
  NodeId vexp(NodeId a);
  NodeId vlog(NodeId a);
  NodeId vlogabs(NodeId a);

  NodeId sum(NodeId a);        // any rank -> scalar
  NodeId logsumexp(NodeId a);  // vector -> scalar

  NodeId slice(NodeId v, std::size_t lo, std::size_t hi);
  NodeId concat(NodeId a, NodeId b);

  NodeId matvec(NodeId a, NodeId x);
  NodeId matmul(NodeId a, NodeId b);
  NodeId transpose(NodeId a);
  NodeId logabsdet(NodeId a);  // scalar; singular input throws
  NodeId inverse(NodeId a);
  NodeId diagmat(NodeId v);  // vector -> diagonal matrix

  NodeId add_rowvec(NodeId a, NodeId v);  // A + 1 v'
  NodeId mul_rowvec(NodeId a, NodeId v);  // A o (1 v')
  NodeId row_sum(NodeId a);               // m x n -> m
  NodeId row_logsumexp(NodeId a);         // m x n -> m
  NodeId col(NodeId a, std::size_t j);    // column extract
  NodeId hcat(NodeId a, NodeId b);        // column concat
  NodeId add_vs(NodeId v, NodeId s);      // vector + broadcast scalar node

  const Tensor& val(NodeId id) const;
  double scalar(NodeId id) const;
  std::size_t node_count() const { return nodes_.size(); }

  /// Reverse pass from a rank-0 loss node. Returns one gradient per store
  /// parameter (zeros for trainable parameters that did not participate,
  /// empty tensors for non-trainable ones). Deterministic for a fixed tape.
  std::vector<Tensor> gradient_of(NodeId loss) const;

 private:
  enum class Op : std::uint8_t {
    kConst, kParam, kAdd, kSub, kMul, kScale, kAddConst,
    kTanh, kExp, kLog, kLogAbs, kSum, kLogSumExp, kSlice, kConcat,
    kMatVec, kMatMul, kTranspose, kLogAbsDet, kInverse, kDiagMat,
    kAddRowVec, kMulRowVec, kRowSum, kRowLogSumExp, kCol, kHCat, kAddVS,
  };

  struct Node {
    Op op = Op::kConst;
    int a = -1;
    int b = -1;
    std::size_t i0 = 0;
    std::size_t i1 = 0;
    double c = 0.0;
    ParamRef pref = -1;
    Tensor value;
  };

  NodeId push(Node n);
  const Node& node(NodeId id) const;

  std::vector<Node> nodes_;
  const ParamStore* params_;
  std::unordered_map<ParamRef, NodeId> param_nodes_;
};

/// Central finite differences (f(p+h e) - f(p-h e)) / (2h) over every
/// coordinate of every trainable parameter, evaluated by mutating the
/// store in place and restoring it. Non-finite f at a probe point throws
/// NumericalError. Test oracle for gradient_of.
std::vector<Tensor> finite_diff_gradient(const std::function<double()>& f,
                                         ParamStore& params, double step);

}  // namespace apcde
