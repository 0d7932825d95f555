#include "apcde/linalg.hpp"

#include <cmath>

namespace apcde {

LuFactor lu_factor(const Tensor& a) {
  if (a.rank() != 2 || a.rows() != a.cols())
    throw ArgumentError("lu_factor: square matrix required");
  const std::size_t n = a.rows();
  if (n == 0) throw ArgumentError("lu_factor: empty matrix");

  double max_row_norm = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double norm = 0.0;
    for (std::size_t j = 0; j < n; ++j) norm = std::max(norm, std::abs(a.at(i, j)));
    max_row_norm = std::max(max_row_norm, norm);
  }
  const double tol = 1e-12 * max_row_norm;

  LuFactor f;
  f.lu = a;
  f.piv.resize(n);
  for (std::size_t i = 0; i < n; ++i) f.piv[i] = static_cast<int>(i);

  for (std::size_t k = 0; k < n; ++k) {
    std::size_t pivot = k;
    double best = std::abs(f.lu.at(k, k));
    for (std::size_t i = k + 1; i < n; ++i) {
      double v = std::abs(f.lu.at(i, k));
      if (v > best) {
        best = v;
        pivot = i;
      }
    }
    if (best <= tol)
      throw SingularMatrixError("lu_factor: numerically singular matrix");
    if (pivot != k) {
      for (std::size_t j = 0; j < n; ++j)
        std::swap(f.lu.at(k, j), f.lu.at(pivot, j));
      std::swap(f.piv[k], f.piv[pivot]);
      f.sign = -f.sign;
    }
    for (std::size_t i = k + 1; i < n; ++i) {
      f.lu.at(i, k) /= f.lu.at(k, k);
      double lik = f.lu.at(i, k);
      if (lik == 0.0) continue;
      for (std::size_t j = k + 1; j < n; ++j)
        f.lu.at(i, j) -= lik * f.lu.at(k, j);
    }
  }
  return f;
}

LogDet logdet_lu(const Tensor& w) {
  LuFactor f = lu_factor(w);
  const std::size_t n = w.rows();
  LogDet out;
  out.sign = f.sign;
  for (std::size_t i = 0; i < n; ++i) {
    double d = f.lu.at(i, i);
    if (d < 0) out.sign = -out.sign;
    out.log_abs += std::log(std::abs(d));
  }
  return out;
}

Tensor lu_solve(const LuFactor& f, const Tensor& b) {
  const std::size_t n = f.lu.rows();
  const bool vec = b.rank() == 1;
  if (vec ? b.size() != n : (b.rank() != 2 || b.rows() != n))
    throw ArgumentError("lu_solve: rhs shape mismatch");
  const std::size_t m = vec ? 1 : b.cols();

  Tensor x = vec ? Tensor::zeros({n}) : Tensor::zeros({n, m});
  auto bval = [&](std::size_t i, std::size_t c) { return vec ? b[i] : b.at(i, c); };
  auto xat = [&](std::size_t i, std::size_t c) -> double& {
    return vec ? x[i] : x.at(i, c);
  };

  for (std::size_t c = 0; c < m; ++c) {
    // forward substitution on permuted rhs
    for (std::size_t i = 0; i < n; ++i) {
      double acc = bval(static_cast<std::size_t>(f.piv[i]), c);
      for (std::size_t j = 0; j < i; ++j) acc -= f.lu.at(i, j) * xat(j, c);
      xat(i, c) = acc;
    }
    // back substitution
    for (std::size_t ii = n; ii-- > 0;) {
      double acc = xat(ii, c);
      for (std::size_t j = ii + 1; j < n; ++j) acc -= f.lu.at(ii, j) * xat(j, c);
      xat(ii, c) = acc / f.lu.at(ii, ii);
    }
  }
  return x;
}

Tensor inverse(const Tensor& a) {
  LuFactor f = lu_factor(a);
  return lu_solve(f, Tensor::identity(a.rows()));
}

}  // namespace apcde
