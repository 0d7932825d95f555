#pragma once
#include <cstddef>
#include <initializer_list>
#include <vector>

#include "apcde/errors.hpp"

namespace apcde {

/// Dense row-major tensor of 64-bit floats. Rank 0 is a scalar, rank 1 a
/// vector, rank 2 a matrix. Data length always equals the shape product.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor scalar(double v);
  static Tensor zeros(std::vector<std::size_t> shape);
  static Tensor full(std::vector<std::size_t> shape, double v);
  static Tensor vec(std::vector<double> data);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  static Tensor identity(std::size_t n);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t i, std::size_t j);
  double at(std::size_t i, std::size_t j) const;

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  double scalar_value() const;
  bool all_finite() const;
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

// Plain (non-differentiated) tensor arithmetic. Shape mismatches throw
// ArgumentError.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor add_const(const Tensor& a, double c);
Tensor vtanh(const Tensor& a);
Tensor vexp(const Tensor& a);
Tensor vlog(const Tensor& a);

Tensor matvec(const Tensor& a, const Tensor& x);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor outer(const Tensor& x, const Tensor& y);

double dot(const Tensor& a, const Tensor& b);
double sum(const Tensor& a);

Tensor slice(const Tensor& v, std::size_t lo, std::size_t hi);
Tensor concat(const Tensor& a, const Tensor& b);

/// log sum_j exp(v_j) via max-shifting; exact to within a couple of ulp of
/// the shifted formula. Empty input throws ArgumentError.
double logsumexp(const Tensor& v);
double logsumexp(const std::vector<double>& v);
Tensor softmax(const Tensor& v);

}  // namespace apcde
