#pragma once
// Test-only oracles, independent of the library's computation paths.
#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "apcde/tensor.hpp"

namespace oracles {

// direct log(sum exp) with no shifting; only safe for moderate inputs
inline double naive_logsumexp(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += std::exp(x);
  return std::log(acc);
}

// recursive cofactor expansion, O(n!)
inline double cofactor_det(const apcde::Tensor& a) {
  const std::size_t n = a.rows();
  if (n == 1) return a[0];
  double det = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    apcde::Tensor minor = apcde::Tensor::zeros({n - 1, n - 1});
    for (std::size_t r = 1; r < n; ++r) {
      std::size_t cc = 0;
      for (std::size_t c = 0; c < n; ++c) {
        if (c == j) continue;
        minor.at(r - 1, cc++) = a.at(r, c);
      }
    }
    double term = a.at(0, j) * cofactor_det(minor);
    det += (j % 2 == 0) ? term : -term;
  }
  return det;
}

// central-difference Jacobian of a vector map
inline apcde::Tensor numerical_jacobian(
    const std::function<apcde::Tensor(const apcde::Tensor&)>& f, const apcde::Tensor& x,
    double h = 1e-6) {
  apcde::Tensor fx = f(x);
  apcde::Tensor jac = apcde::Tensor::zeros({fx.size(), x.size()});
  for (std::size_t j = 0; j < x.size(); ++j) {
    apcde::Tensor up = x, dn = x;
    up[j] += h;
    dn[j] -= h;
    apcde::Tensor fu = f(up), fd = f(dn);
    for (std::size_t i = 0; i < fx.size(); ++i) jac.at(i, j) = (fu[i] - fd[i]) / (2.0 * h);
  }
  return jac;
}

// adaptive Simpson quadrature
namespace detail {
inline double simpson(double a, double b, double fa, double fm, double fb) {
  return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

inline double adapt(const std::function<double(double)>& f, double a, double b, double fa,
                    double fm, double fb, double whole, double tol, int depth) {
  double m = 0.5 * (a + b);
  double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  double flm = f(lm), frm = f(rm);
  double left = simpson(a, m, fa, flm, fm);
  double right = simpson(m, b, fm, frm, fb);
  if (depth <= 0 || std::abs(left + right - whole) < 15.0 * tol)
    return left + right + (left + right - whole) / 15.0;
  return adapt(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) +
         adapt(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1);
}
}  // namespace detail

inline double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                               double tol = 1e-10, int depth = 30) {
  double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  double whole = detail::simpson(a, b, fa, fm, fb);
  return detail::adapt(f, a, b, fa, fm, fb, whole, tol, depth);
}

// Kolmogorov-Smirnov statistic against the standard normal CDF
inline double ks_statistic_normal(std::vector<double> samples) {
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    double cdf = 0.5 * std::erfc(-samples[i] / std::sqrt(2.0));
    d = std::max(d, std::abs((i + 1) / n - cdf));
    d = std::max(d, std::abs(cdf - i / n));
  }
  return d;
}

}  // namespace oracles
