#include "apcde/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace apcde {

namespace {
std::size_t shape_product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}
}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_product(shape_))
    throw ArgumentError("Tensor: data length does not match shape product");
}

Tensor Tensor::scalar(double v) { return Tensor({}, {v}); }

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
  std::size_t n = shape_product(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::full(std::vector<std::size_t> shape, double v) {
  std::size_t n = shape_product(shape);
  return Tensor(std::move(shape), std::vector<double>(n, v));
}

Tensor Tensor::vec(std::vector<double> data) {
  std::size_t n = data.size();
  return Tensor({n}, std::move(data));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> data) {
  return Tensor({rows, cols}, std::move(data));
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t = zeros({n, n});
  for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
  return t;
}

std::size_t Tensor::rows() const {
  if (rank() != 2) throw ArgumentError("Tensor: rows() on non-matrix");
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw ArgumentError("Tensor: cols() on non-matrix");
  return shape_[1];
}

double& Tensor::at(std::size_t i, std::size_t j) {
  return data_[i * shape_[1] + j];
}

double Tensor::at(std::size_t i, std::size_t j) const {
  return data_[i * shape_[1] + j];
}

double Tensor::scalar_value() const {
  if (size() != 1) throw ArgumentError("Tensor: scalar_value() on non-scalar");
  return data_[0];
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v); });
}

namespace {
Tensor zip(const Tensor& a, const Tensor& b, const char* what,
           double (*f)(double, double)) {
  if (!a.same_shape(b)) throw ArgumentError(std::string(what) + ": shape mismatch");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(a[i], b[i]);
  return out;
}

Tensor map(const Tensor& a, double (*f)(double)) {
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(a[i]);
  return out;
}
}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return zip(a, b, "add", [](double x, double y) { return x + y; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return zip(a, b, "sub", [](double x, double y) { return x - y; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return zip(a, b, "mul", [](double x, double y) { return x * y; });
}

Tensor scale(const Tensor& a, double c) {
  Tensor out = a;
  for (double& v : out.data()) v *= c;
  return out;
}

Tensor add_const(const Tensor& a, double c) {
  Tensor out = a;
  for (double& v : out.data()) v += c;
  return out;
}

Tensor vtanh(const Tensor& a) { return map(a, [](double x) { return std::tanh(x); }); }
Tensor vexp(const Tensor& a) { return map(a, [](double x) { return std::exp(x); }); }
Tensor vlog(const Tensor& a) { return map(a, [](double x) { return std::log(x); }); }

Tensor matvec(const Tensor& a, const Tensor& x) {
  if (a.rank() != 2 || x.rank() != 1 || a.cols() != x.size())
    throw ArgumentError("matvec: shape mismatch");
  Tensor out = Tensor::zeros({a.rows()});
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) acc += a.at(i, j) * x[j];
    out[i] = acc;
  }
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows())
    throw ArgumentError("matmul: shape mismatch");
  Tensor out = Tensor::zeros({a.rows(), b.cols()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t k = 0; k < a.cols(); ++k) {
      double aik = a.at(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j)
        out.at(i, j) += aik * b.at(k, j);
    }
  return out;
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw ArgumentError("transpose: matrix required");
  Tensor out = Tensor::zeros({a.cols(), a.rows()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out.at(j, i) = a.at(i, j);
  return out;
}

Tensor outer(const Tensor& x, const Tensor& y) {
  if (x.rank() != 1 || y.rank() != 1) throw ArgumentError("outer: vectors required");
  Tensor out = Tensor::zeros({x.size(), y.size()});
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = 0; j < y.size(); ++j) out.at(i, j) = x[i] * y[j];
  return out;
}

double dot(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw ArgumentError("dot: shape mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double sum(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  return acc;
}

Tensor slice(const Tensor& v, std::size_t lo, std::size_t hi) {
  if (v.rank() != 1) throw ArgumentError("slice: vector required");
  if (lo > hi || hi > v.size()) throw ArgumentError("slice: bounds out of range");
  std::vector<double> out(v.data().begin() + lo, v.data().begin() + hi);
  return Tensor::vec(std::move(out));
}

Tensor concat(const Tensor& a, const Tensor& b) {
  if (a.rank() != 1 || b.rank() != 1) throw ArgumentError("concat: vectors required");
  std::vector<double> out = a.data();
  out.insert(out.end(), b.data().begin(), b.data().end());
  return Tensor::vec(std::move(out));
}

double logsumexp(const std::vector<double>& v) {
  if (v.empty()) throw ArgumentError("logsumexp: empty input");
  double m = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(m)) return m;  // all -inf, or an inf/nan dominates
  double acc = 0.0;
  for (double x : v) acc += std::exp(x - m);
  return m + std::log(acc);
}

double logsumexp(const Tensor& v) {
  if (v.rank() != 1) throw ArgumentError("logsumexp: vector required");
  return logsumexp(v.data());
}

Tensor softmax(const Tensor& v) {
  if (v.rank() != 1 || v.size() == 0) throw ArgumentError("softmax: nonempty vector required");
  double m = *std::max_element(v.data().begin(), v.data().end());
  Tensor out = v;
  double acc = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - m);
    acc += out[i];
  }
  for (double& x : out.data()) x /= acc;
  return out;
}

}  // namespace apcde
