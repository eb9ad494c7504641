#include "vgt3/svd.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "vgt3/kernels.hpp"

namespace vgt3 {

namespace {

// Hestenes one-sided Jacobi on a tall matrix: rotate column pairs until all
// are mutually orthogonal, then read singular values off the column norms.
SvdResult jacobi_tall(Matrix a) {
  const int rows = a.rows;
  const int cols = a.cols;
  Matrix v = Matrix::identity(cols);

  constexpr double kTol = 1e-14;
  constexpr int kMaxSweeps = 100;
  bool converged = false;
  for (int sweep = 0; sweep < kMaxSweeps && !converged; ++sweep) {
    converged = true;
    for (int p = 0; p < cols - 1; ++p) {
      for (int q = p + 1; q < cols; ++q) {
        double alpha = 0.0, beta = 0.0, gamma = 0.0;
        for (int i = 0; i < rows; ++i) {
          const double ap = a(i, p);
          const double aq = a(i, q);
          alpha += ap * ap;
          beta += aq * aq;
          gamma += ap * aq;
        }
        if (std::abs(gamma) <= kTol * std::sqrt(alpha * beta)) continue;
        converged = false;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t =
            (zeta >= 0.0 ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (int i = 0; i < rows; ++i) {
          const double ap = a(i, p);
          const double aq = a(i, q);
          a(i, p) = c * ap - s * aq;
          a(i, q) = s * ap + c * aq;
        }
        for (int i = 0; i < cols; ++i) {
          const double vp = v(i, p);
          const double vq = v(i, q);
          v(i, p) = c * vp - s * vq;
          v(i, q) = s * vp + c * vq;
        }
      }
    }
  }
  if (!converged) throw OracleFailure("svd_small: Jacobi sweeps did not converge");

  std::vector<double> sigma(cols, 0.0);
  for (int j = 0; j < cols; ++j) {
    double ss = 0.0;
    for (int i = 0; i < rows; ++i) ss += a(i, j) * a(i, j);
    sigma[j] = std::sqrt(ss);
  }

  std::vector<int> order(cols);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int x, int y) { return sigma[x] > sigma[y]; });

  SvdResult out;
  out.u = Matrix(rows, cols);
  out.v = Matrix(cols, cols);
  out.s.resize(cols);
  for (int j = 0; j < cols; ++j) {
    const int src = order[j];
    out.s[j] = sigma[src];
    // Columns with a vanishing singular value contribute nothing to the
    // reconstruction; leave their U column zero.
    const double inv = sigma[src] > 0.0 ? 1.0 / sigma[src] : 0.0;
    for (int i = 0; i < rows; ++i) out.u(i, j) = a(i, src) * inv;
    for (int i = 0; i < cols; ++i) out.v(i, j) = v(i, src);
  }
  return out;
}

}  // namespace

SvdResult svd_small(const Matrix& m) {
  require(m.rows >= 1 && m.cols >= 1, "svd_small: empty matrix");
  require(m.rows <= 512 && m.cols <= 512, "svd_small: dimensions exceed 512");
  require(m.all_finite(), "svd_small: input must be finite");
  if (m.rows >= m.cols) return jacobi_tall(m);
  // Wide input: factor the transpose and swap the roles of U and V.
  SvdResult t = jacobi_tall(transpose(m));
  SvdResult out;
  out.u = std::move(t.v);
  out.v = std::move(t.u);
  out.s = std::move(t.s);
  return out;
}

}  // namespace vgt3
