#include "apcde/tape.hpp"

#include <algorithm>
#include <cmath>

#include "apcde/linalg.hpp"

namespace apcde {

ParamRef ParamStore::add(std::string name, Tensor value, bool trainable) {
  if (index_.count(name))
    throw ArgumentError("ParamStore: duplicate parameter name " + name);
  ParamRef ref = static_cast<ParamRef>(entries_.size());
  index_.emplace(name, ref);
  entries_.push_back({std::move(name), std::move(value), trainable});
  return ref;
}

const Tensor& ParamStore::value(ParamRef p) const { return entries_.at(p).value; }
Tensor& ParamStore::value(ParamRef p) { return entries_.at(p).value; }
const std::string& ParamStore::name(ParamRef p) const { return entries_.at(p).name; }
bool ParamStore::trainable(ParamRef p) const { return entries_.at(p).trainable; }

ParamRef ParamStore::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? -1 : it->second;
}

Tape::Tape(const ParamStore* params) : params_(params) {}

NodeId Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size()) - 1;
}

const Tape::Node& Tape::node(NodeId id) const {
  if (id < 0 || id >= static_cast<NodeId>(nodes_.size()))
    throw ArgumentError("Tape: node id out of range");
  return nodes_[id];
}

const Tensor& Tape::val(NodeId id) const { return node(id).value; }

double Tape::scalar(NodeId id) const { return node(id).value.scalar_value(); }

NodeId Tape::constant(Tensor v) {
  Node n;
  n.op = Op::kConst;
  n.value = std::move(v);
  return push(n);
}

NodeId Tape::param(ParamRef p) {
  if (params_ == nullptr)
    throw ArgumentError("Tape: param() on a tape without a bound ParamStore");
  auto it = param_nodes_.find(p);
  if (it != param_nodes_.end()) return it->second;
  Node n;
  n.op = params_->trainable(p) ? Op::kParam : Op::kConst;
  n.pref = p;
  n.value = params_->value(p);
  NodeId id = push(std::move(n));
  param_nodes_.emplace(p, id);
  return id;
}

NodeId Tape::add(NodeId a, NodeId b) {
  Node n;
  n.op = Op::kAdd;
  n.a = a;
  n.b = b;
  n.value = apcde::add(val(a), val(b));
  return push(std::move(n));
}

NodeId Tape::sub(NodeId a, NodeId b) {
  Node n;
  n.op = Op::kSub;
  n.a = a;
  n.b = b;
  n.value = apcde::sub(val(a), val(b));
  return push(std::move(n));
}

NodeId Tape::mul(NodeId a, NodeId b) {
  Node n;
  n.op = Op::kMul;
  n.a = a;
  n.b = b;
  n.value = apcde::mul(val(a), val(b));
  return push(std::move(n));
}

NodeId Tape::scale(NodeId a, double c) {
  Node n;
  n.op = Op::kScale;
  n.a = a;
  n.c = c;
  n.value = apcde::scale(val(a), c);
  return push(std::move(n));
}

NodeId Tape::add_const(NodeId a, double c) {
  Node n;
  n.op = Op::kAddConst;
  n.a = a;
  n.c = c;
  n.value = apcde::add_const(val(a), c);
  return push(std::move(n));
}

NodeId Tape::vtanh(NodeId a) {
  Node n;
  n.op = Op::kTanh;
  n.a = a;
  n.value = apcde::vtanh(val(a));
  return push(std::move(n));
}

NodeId Tape::vexp(NodeId a) {
  Node n;
  n.op = Op::kExp;
  n.a = a;
  n.value = apcde::vexp(val(a));
  return push(std::move(n));
}

NodeId Tape::vlog(NodeId a) {
  Node n;
  n.op = Op::kLog;
  n.a = a;
  n.value = apcde::vlog(val(a));
  return push(std::move(n));
}

NodeId Tape::vlogabs(NodeId a) {
  Node n;
  n.op = Op::kLogAbs;
  n.a = a;
  n.value = val(a);
  for (double& v : n.value.data()) v = std::log(std::abs(v));
  return push(std::move(n));
}

NodeId Tape::sum(NodeId a) {
  Node n;
  n.op = Op::kSum;
  n.a = a;
  n.value = Tensor::scalar(apcde::sum(val(a)));
  return push(std::move(n));
}

NodeId Tape::logsumexp(NodeId a) {
  Node n;
  n.op = Op::kLogSumExp;
  n.a = a;
  n.value = Tensor::scalar(apcde::logsumexp(val(a)));
  return push(std::move(n));
}

NodeId Tape::slice(NodeId v, std::size_t lo, std::size_t hi) {
  Node n;
  n.op = Op::kSlice;
  n.a = v;
  n.i0 = lo;
  n.i1 = hi;
  n.value = apcde::slice(val(v), lo, hi);
  return push(std::move(n));
}

NodeId Tape::concat(NodeId a, NodeId b) {
  Node n;
  n.op = Op::kConcat;
  n.a = a;
  n.b = b;
  n.i0 = val(a).size();
  n.value = apcde::concat(val(a), val(b));
  return push(std::move(n));
}

NodeId Tape::matvec(NodeId a, NodeId x) {
  Node n;
  n.op = Op::kMatVec;
  n.a = a;
  n.b = x;
  n.value = apcde::matvec(val(a), val(x));
  return push(std::move(n));
}

NodeId Tape::matmul(NodeId a, NodeId b) {
  Node n;
  n.op = Op::kMatMul;
  n.a = a;
  n.b = b;
  n.value = apcde::matmul(val(a), val(b));
  return push(std::move(n));
}

NodeId Tape::transpose(NodeId a) {
  Node n;
  n.op = Op::kTranspose;
  n.a = a;
  n.value = apcde::transpose(val(a));
  return push(std::move(n));
}

NodeId Tape::logabsdet(NodeId a) {
  Node n;
  n.op = Op::kLogAbsDet;
  n.a = a;
  n.value = Tensor::scalar(logdet_lu(val(a)).log_abs);
  return push(std::move(n));
}

NodeId Tape::inverse(NodeId a) {
  Node n;
  n.op = Op::kInverse;
  n.a = a;
  n.value = apcde::inverse(val(a));
  return push(std::move(n));
}

NodeId Tape::diagmat(NodeId v) {
  const Tensor& x = val(v);
  if (x.rank() != 1) throw ArgumentError("diagmat: vector required");
  Node n;
  n.op = Op::kDiagMat;
  n.a = v;
  n.value = Tensor::zeros({x.size(), x.size()});
  for (std::size_t i = 0; i < x.size(); ++i) n.value.at(i, i) = x[i];
  return push(std::move(n));
}

NodeId Tape::add_rowvec(NodeId a, NodeId v) {
  const Tensor& m = val(a);
  const Tensor& x = val(v);
  if (m.rank() != 2 || x.rank() != 1 || m.cols() != x.size())
    throw ArgumentError("add_rowvec: shape mismatch");
  Node n;
  n.op = Op::kAddRowVec;
  n.a = a;
  n.b = v;
  n.value = m;
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) n.value.at(i, j) += x[j];
  return push(std::move(n));
}

NodeId Tape::mul_rowvec(NodeId a, NodeId v) {
  const Tensor& m = val(a);
  const Tensor& x = val(v);
  if (m.rank() != 2 || x.rank() != 1 || m.cols() != x.size())
    throw ArgumentError("mul_rowvec: shape mismatch");
  Node n;
  n.op = Op::kMulRowVec;
  n.a = a;
  n.b = v;
  n.value = m;
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) n.value.at(i, j) *= x[j];
  return push(std::move(n));
}

NodeId Tape::row_sum(NodeId a) {
  const Tensor& m = val(a);
  if (m.rank() != 2) throw ArgumentError("row_sum: matrix required");
  Node n;
  n.op = Op::kRowSum;
  n.a = a;
  n.value = Tensor::zeros({m.rows()});
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) n.value[i] += m.at(i, j);
  return push(std::move(n));
}

NodeId Tape::row_logsumexp(NodeId a) {
  const Tensor& m = val(a);
  if (m.rank() != 2 || m.cols() == 0)
    throw ArgumentError("row_logsumexp: nonempty matrix required");
  Node n;
  n.op = Op::kRowLogSumExp;
  n.a = a;
  n.value = Tensor::zeros({m.rows()});
  for (std::size_t i = 0; i < m.rows(); ++i) {
    std::vector<double> row(m.cols());
    for (std::size_t j = 0; j < m.cols(); ++j) row[j] = m.at(i, j);
    n.value[i] = apcde::logsumexp(row);
  }
  return push(std::move(n));
}

NodeId Tape::col(NodeId a, std::size_t j) {
  const Tensor& m = val(a);
  if (m.rank() != 2 || j >= m.cols()) throw ArgumentError("col: index out of range");
  Node n;
  n.op = Op::kCol;
  n.a = a;
  n.i0 = j;
  n.value = Tensor::zeros({m.rows()});
  for (std::size_t i = 0; i < m.rows(); ++i) n.value[i] = m.at(i, j);
  return push(std::move(n));
}

NodeId Tape::hcat(NodeId a, NodeId b) {
  const Tensor& m = val(a);
  const Tensor& k = val(b);
  if (m.rank() != 2 || k.rank() != 2 || m.rows() != k.rows())
    throw ArgumentError("hcat: row mismatch");
  Node n;
  n.op = Op::kHCat;
  n.a = a;
  n.b = b;
  n.i0 = m.cols();
  n.value = Tensor::zeros({m.rows(), m.cols() + k.cols()});
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) n.value.at(i, j) = m.at(i, j);
    for (std::size_t j = 0; j < k.cols(); ++j) n.value.at(i, m.cols() + j) = k.at(i, j);
  }
  return push(std::move(n));
}

NodeId Tape::add_vs(NodeId v, NodeId s) {
  const Tensor& x = val(v);
  const Tensor& c = val(s);
  if (x.rank() != 1 || c.rank() != 0) throw ArgumentError("add_vs: vector + scalar required");
  Node n;
  n.op = Op::kAddVS;
  n.a = v;
  n.b = s;
  n.value = apcde::add_const(x, c.scalar_value());
  return push(std::move(n));
}

std::vector<Tensor> Tape::gradient_of(NodeId loss) const {
  if (node(loss).value.rank() != 0)
    throw ArgumentError("gradient_of: loss must be a scalar node");

  std::vector<Tensor> adj(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    adj[i] = Tensor::zeros(nodes_[i].value.shape());
  adj[loss][0] = 1.0;

  for (NodeId id = loss; id >= 0; --id) {
    const Node& n = nodes_[id];
    const Tensor& g = adj[id];
    switch (n.op) {
      case Op::kConst:
      case Op::kParam:
        break;
      case Op::kAdd:
        for (std::size_t i = 0; i < g.size(); ++i) {
          adj[n.a][i] += g[i];
          adj[n.b][i] += g[i];
        }
        break;
      case Op::kSub:
        for (std::size_t i = 0; i < g.size(); ++i) {
          adj[n.a][i] += g[i];
          adj[n.b][i] -= g[i];
        }
        break;
      case Op::kMul:
        for (std::size_t i = 0; i < g.size(); ++i) {
          adj[n.a][i] += g[i] * nodes_[n.b].value[i];
          adj[n.b][i] += g[i] * nodes_[n.a].value[i];
        }
        break;
      case Op::kScale:
        for (std::size_t i = 0; i < g.size(); ++i) adj[n.a][i] += n.c * g[i];
        break;
      case Op::kAddConst:
        for (std::size_t i = 0; i < g.size(); ++i) adj[n.a][i] += g[i];
        break;
      case Op::kTanh:
        for (std::size_t i = 0; i < g.size(); ++i) {
          double t = n.value[i];
          adj[n.a][i] += g[i] * (1.0 - t * t);
        }
        break;
      case Op::kExp:
        for (std::size_t i = 0; i < g.size(); ++i) adj[n.a][i] += g[i] * n.value[i];
        break;
      case Op::kLog:
      case Op::kLogAbs:
        for (std::size_t i = 0; i < g.size(); ++i)
          adj[n.a][i] += g[i] / nodes_[n.a].value[i];
        break;
      case Op::kSum: {
        double gs = g[0];
        for (std::size_t i = 0; i < adj[n.a].size(); ++i) adj[n.a][i] += gs;
        break;
      }
      case Op::kLogSumExp: {
        Tensor sm = softmax(nodes_[n.a].value);
        for (std::size_t i = 0; i < sm.size(); ++i) adj[n.a][i] += g[0] * sm[i];
        break;
      }
      case Op::kSlice:
        for (std::size_t i = 0; i < g.size(); ++i) adj[n.a][n.i0 + i] += g[i];
        break;
      case Op::kConcat:
        for (std::size_t i = 0; i < n.i0; ++i) adj[n.a][i] += g[i];
        for (std::size_t i = n.i0; i < g.size(); ++i) adj[n.b][i - n.i0] += g[i];
        break;
      case Op::kMatVec: {
        const Tensor& a = nodes_[n.a].value;
        const Tensor& x = nodes_[n.b].value;
        for (std::size_t i = 0; i < a.rows(); ++i)
          for (std::size_t j = 0; j < a.cols(); ++j) {
            adj[n.a].at(i, j) += g[i] * x[j];
            adj[n.b][j] += g[i] * a.at(i, j);
          }
        break;
      }
      case Op::kMatMul: {
        const Tensor& a = nodes_[n.a].value;
        const Tensor& b = nodes_[n.b].value;
        // dA += G B', dB += A' G
        for (std::size_t i = 0; i < a.rows(); ++i)
          for (std::size_t k = 0; k < a.cols(); ++k) {
            double acc = 0.0;
            for (std::size_t j = 0; j < b.cols(); ++j) acc += g.at(i, j) * b.at(k, j);
            adj[n.a].at(i, k) += acc;
          }
        for (std::size_t k = 0; k < b.rows(); ++k)
          for (std::size_t j = 0; j < b.cols(); ++j) {
            double acc = 0.0;
            for (std::size_t i = 0; i < a.rows(); ++i) acc += a.at(i, k) * g.at(i, j);
            adj[n.b].at(k, j) += acc;
          }
        break;
      }
      case Op::kTranspose:
        for (std::size_t i = 0; i < g.rows(); ++i)
          for (std::size_t j = 0; j < g.cols(); ++j) adj[n.a].at(j, i) += g.at(i, j);
        break;
      case Op::kLogAbsDet: {
        Tensor inv_t = apcde::transpose(apcde::inverse(nodes_[n.a].value));
        for (std::size_t i = 0; i < inv_t.size(); ++i)
          adj[n.a][i] += g[0] * inv_t[i];
        break;
      }
      case Op::kInverse: {
        // dA = -B' G B' with B = inv(A) = value
        Tensor bt = apcde::transpose(n.value);
        Tensor d = apcde::matmul(apcde::matmul(bt, g), bt);
        for (std::size_t i = 0; i < d.size(); ++i) adj[n.a][i] -= d[i];
        break;
      }
      case Op::kDiagMat:
        for (std::size_t i = 0; i < adj[n.a].size(); ++i)
          adj[n.a][i] += g.at(i, i);
        break;
      case Op::kAddRowVec:
        for (std::size_t i = 0; i < g.rows(); ++i)
          for (std::size_t j = 0; j < g.cols(); ++j) {
            adj[n.a].at(i, j) += g.at(i, j);
            adj[n.b][j] += g.at(i, j);
          }
        break;
      case Op::kMulRowVec: {
        const Tensor& a = nodes_[n.a].value;
        const Tensor& x = nodes_[n.b].value;
        for (std::size_t i = 0; i < g.rows(); ++i)
          for (std::size_t j = 0; j < g.cols(); ++j) {
            adj[n.a].at(i, j) += g.at(i, j) * x[j];
            adj[n.b][j] += g.at(i, j) * a.at(i, j);
          }
        break;
      }
      case Op::kRowSum: {
        const Tensor& a = nodes_[n.a].value;
        for (std::size_t i = 0; i < a.rows(); ++i)
          for (std::size_t j = 0; j < a.cols(); ++j) adj[n.a].at(i, j) += g[i];
        break;
      }
      case Op::kRowLogSumExp: {
        const Tensor& a = nodes_[n.a].value;
        for (std::size_t i = 0; i < a.rows(); ++i) {
          std::vector<double> row(a.cols());
          for (std::size_t j = 0; j < a.cols(); ++j) row[j] = a.at(i, j);
          Tensor sm = softmax(Tensor::vec(row));
          for (std::size_t j = 0; j < a.cols(); ++j)
            adj[n.a].at(i, j) += g[i] * sm[j];
        }
        break;
      }
      case Op::kCol:
        for (std::size_t i = 0; i < g.size(); ++i) adj[n.a].at(i, n.i0) += g[i];
        break;
      case Op::kHCat:
        for (std::size_t i = 0; i < g.rows(); ++i) {
          for (std::size_t j = 0; j < n.i0; ++j) adj[n.a].at(i, j) += g.at(i, j);
          for (std::size_t j = n.i0; j < g.cols(); ++j)
            adj[n.b].at(i, j - n.i0) += g.at(i, j);
        }
        break;
      case Op::kAddVS:
        for (std::size_t i = 0; i < g.size(); ++i) {
          adj[n.a][i] += g[i];
          adj[n.b][0] += g[i];
        }
        break;
    }
  }

  std::vector<Tensor> grads;
  if (params_ != nullptr) {
    grads.resize(params_->size());
    for (ParamRef p = 0; p < params_->size(); ++p)
      if (params_->trainable(p)) grads[p] = Tensor::zeros(params_->value(p).shape());
    for (const auto& [pref, nid] : param_nodes_)
      if (nodes_[nid].op == Op::kParam) grads[pref] = std::move(adj[nid]);
  }
  return grads;
}

std::vector<Tensor> finite_diff_gradient(const std::function<double()>& f,
                                         ParamStore& params, double step) {
  if (!(step > 0)) throw ArgumentError("finite_diff_gradient: step must be positive");
  std::vector<Tensor> grads(params.size());
  for (ParamRef p = 0; p < params.size(); ++p) {
    if (!params.trainable(p)) continue;
    Tensor g = Tensor::zeros(params.value(p).shape());
    for (std::size_t i = 0; i < g.size(); ++i) {
      double saved = params.value(p)[i];
      params.value(p)[i] = saved + step;
      double up = f();
      params.value(p)[i] = saved - step;
      double down = f();
      params.value(p)[i] = saved;
      if (!std::isfinite(up) || !std::isfinite(down))
        throw NumericalError("finite_diff_gradient: non-finite value at probe point");
      g[i] = (up - down) / (2.0 * step);
    }
    grads[p] = std::move(g);
  }
  return grads;
}

}  // namespace apcde
