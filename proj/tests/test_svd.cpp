#include <cmath>

#include "doctest.h"
#include "vgt3/kernels.hpp"
#include "vgt3/svd.hpp"

using namespace vgt3;

namespace {

Matrix reconstruct(const SvdResult& r) {
  Matrix us = r.u;
  for (int i = 0; i < us.rows; ++i) {
    for (int j = 0; j < us.cols; ++j) us(i, j) *= r.s[j];
  }
  return matmul(us, transpose(r.v));
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a.data[i] - b.data[i]));
  }
  return worst;
}

// Orthonormal basis via Gram-Schmidt on a random square matrix.
Matrix random_orthogonal(int n, std::uint64_t seed) {
  Rng rng(seed);
  Matrix q = rng_normal(rng, n, n);
  for (int j = 0; j < n; ++j) {
    for (int prev = 0; prev < j; ++prev) {
      double dot = 0.0;
      for (int i = 0; i < n; ++i) dot += q(i, j) * q(i, prev);
      for (int i = 0; i < n; ++i) q(i, j) -= dot * q(i, prev);
    }
    double norm = 0.0;
    for (int i = 0; i < n; ++i) norm += q(i, j) * q(i, j);
    norm = std::sqrt(norm);
    for (int i = 0; i < n; ++i) q(i, j) /= norm;
  }
  return q;
}

// Classical Jacobi eigenvalues of a symmetric matrix; independent route for
// cross-checking singular values against sqrt(eig(m^T m)).
std::vector<double> jacobi_eigenvalues(Matrix a) {
  const int n = a.rows;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < n; ++p) {
      for (int q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    }
    if (off < 1e-24) break;
    for (int p = 0; p < n; ++p) {
      for (int q = p + 1; q < n; ++q) {
        if (std::abs(a(p, q)) < 1e-18) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t =
            (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(1.0 + theta * theta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (int i = 0; i < n; ++i) {
          const double aip = a(i, p), aiq = a(i, q);
          a(i, p) = c * aip - s * aiq;
          a(i, q) = s * aip + c * aiq;
        }
        for (int i = 0; i < n; ++i) {
          const double api = a(p, i), aqi = a(q, i);
          a(p, i) = c * api - s * aqi;
          a(q, i) = s * api + c * aqi;
        }
      }
    }
  }
  std::vector<double> eig(n);
  for (int i = 0; i < n; ++i) eig[i] = a(i, i);
  std::sort(eig.begin(), eig.end(), std::greater<>());
  return eig;
}

}  // namespace

TEST_CASE("svd of a diagonal matrix reads off the diagonal") {
  Matrix m(2, 2);
  m(0, 0) = 2.0;
  m(1, 1) = 1.0;
  const SvdResult r = svd_small(m);
  CHECK(r.s[0] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(r.s[1] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("svd of an orthogonal matrix has unit spectrum") {
  const Matrix q = random_orthogonal(12, 99);
  const SvdResult r = svd_small(q);
  for (const double s : r.s) CHECK(std::abs(s - 1.0) < 1e-8);
}

TEST_CASE("svd reconstructs random matrices") {
  Rng rng(42);
  const Matrix m = rng_normal(rng, 8, 8);
  const SvdResult r = svd_small(m);
  CHECK(max_abs_diff(reconstruct(r), m) < 1e-8 * frobenius_norm(m));
  for (std::size_t i = 0; i + 1 < r.s.size(); ++i) {
    CHECK(r.s[i] >= r.s[i + 1]);  // descending
    CHECK(r.s[i] >= 0.0);
  }
}

TEST_CASE("svd handles wide and tall shapes") {
  Rng rng(17);
  for (const auto [rows, cols] : {std::pair{4, 10}, {10, 4}, {1, 6}, {6, 1}}) {
    const Matrix m = rng_normal(rng, rows, cols);
    const SvdResult r = svd_small(m);
    CHECK(r.u.rows == rows);
    CHECK(r.v.rows == cols);
    CHECK(static_cast<int>(r.s.size()) == std::min(rows, cols));
    CHECK(max_abs_diff(reconstruct(r), m) < 1e-8 * frobenius_norm(m));
  }
}

TEST_CASE("svd rejects oversized input") {
  CHECK_THROWS_AS(svd_small(Matrix(513, 4)), ContractViolation);
}

TEST_CASE("singular values match eigenvalue square roots of m^T m") {
  Rng rng(2024);
  for (int trial = 0; trial < 4; ++trial) {
    const Matrix m = rng_normal(rng, 6, 6);
    const SvdResult r = svd_small(m);
    const std::vector<double> eig = jacobi_eigenvalues(matmul(transpose(m), m));
    for (int i = 0; i < 6; ++i) {
      CHECK(std::abs(r.s[i] - std::sqrt(std::max(0.0, eig[i]))) < 1e-8);
    }
  }
}
