#pragma once
#include <vector>

#include "apcde/tensor.hpp"

namespace apcde {

/// Partial-pivot LU factorization of a square matrix, P*A = L*U stored
/// packed. A pivot with magnitude <= 1e-12 times the largest row infinity
/// norm of A throws SingularMatrixError.
struct LuFactor {
  Tensor lu;              // packed L (unit diagonal) and U
  std::vector<int> piv;   // row permutation
  int sign = 1;           // permutation parity
};

LuFactor lu_factor(const Tensor& a);

struct LogDet {
  double log_abs = 0.0;
  int sign = 1;
};

/// log|det W| and sign(det W) via partial-pivot LU.
LogDet logdet_lu(const Tensor& w);

/// Solves A x = b given a factorization; b may be a vector or a matrix of
/// stacked right-hand-side columns.
Tensor lu_solve(const LuFactor& f, const Tensor& b);

Tensor inverse(const Tensor& a);

}  // namespace apcde
