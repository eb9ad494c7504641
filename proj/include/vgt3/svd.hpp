#pragma once

#include <vector>

#include "vgt3/matrix.hpp"

namespace vgt3 {

struct SvdResult {
  Matrix u;               // rows x k
  std::vector<double> s;  // k, non-negative, descending
  Matrix v;               // cols x k, so that m ~= u * diag(s) * v^T
};

// One-sided Jacobi SVD for small matrices (rows, cols <= 512). Verification
// oracle only; never on a hot path. Throws OracleFailure if the rotation
// sweeps do not converge within 100 passes.
SvdResult svd_small(const Matrix& m);

}  // namespace vgt3
