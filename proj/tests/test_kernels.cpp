#include <cmath>

#include "doctest.h"
#include "vgt3/kernels.hpp"
#include "vgt3/serial.hpp"

using namespace vgt3;

namespace {

Matrix from_rows(int rows, int cols, std::initializer_list<double> vals) {
  Matrix m(rows, cols);
  std::copy(vals.begin(), vals.end(), m.data.begin());
  return m;
}

bool bitwise_equal(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a.data[i] != b.data[i]) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("matmul identity and annihilator") {
  Rng rng(7);
  const Matrix a = rng_normal(rng, 3, 5);
  CHECK(bitwise_equal(matmul(Matrix::identity(3), a), a));
  const Matrix zero(5, 4);
  const Matrix prod = matmul(a, zero);
  for (const double v : prod.data) CHECK(v == 0.0);
}

TEST_CASE("matmul hand-computed 2x2 times 2x1") {
  const Matrix a = from_rows(2, 2, {1, 2, 3, 4});
  const Matrix b = from_rows(2, 1, {5, 6});
  const Matrix c = matmul(a, b);
  CHECK(c(0, 0) == 17.0);
  CHECK(c(1, 0) == 39.0);
}

TEST_CASE("matmul rejects dimension mismatch") {
  CHECK_THROWS_AS(matmul(Matrix(2, 3), Matrix(2, 3)), ContractViolation);
}

TEST_CASE("matmul associativity on random triples") {
  Rng rng(42);
  for (int trial = 0; trial < 5; ++trial) {
    const Matrix a = rng_normal(rng, 6, 4);
    const Matrix b = rng_normal(rng, 4, 7);
    const Matrix c = rng_normal(rng, 7, 3);
    const Matrix left = matmul(matmul(a, b), c);
    const Matrix right = matmul(a, matmul(b, c));
    for (std::size_t i = 0; i < left.size(); ++i) {
      const double denom = std::max(1.0, std::abs(left.data[i]));
      CHECK(std::abs(left.data[i] - right.data[i]) / denom < 1e-10);
    }
  }
}

TEST_CASE("transpose round trip") {
  Rng rng(3);
  const Matrix a = rng_normal(rng, 5, 8);
  CHECK(bitwise_equal(transpose(transpose(a)), a));
  const Matrix t = transpose(a);
  CHECK(t.rows == 8);
  CHECK(t(2, 3) == a(3, 2));
}

TEST_CASE("row_softmax basics") {
  SUBCASE("single column is all ones") {
    const Matrix m = from_rows(3, 1, {-4.0, 0.0, 17.5});
    const Matrix s = row_softmax(m, 1.0);
    for (const double v : s.data) CHECK(v == doctest::Approx(1.0).epsilon(1e-14));
  }
  SUBCASE("symmetric row splits evenly") {
    const Matrix s = row_softmax(from_rows(1, 2, {0.0, 0.0}), 1.0);
    CHECK(s(0, 0) == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(s(0, 1) == doctest::Approx(0.5).epsilon(1e-14));
  }
  SUBCASE("scalar softmax oracle e/(e+1)") {
    const Matrix s = row_softmax(from_rows(1, 2, {1.0, 0.0}), 1.0);
    const double e = std::exp(1.0);
    CHECK(std::abs(s(0, 0) - e / (e + 1.0)) < 1e-12);
    CHECK(std::abs(s(0, 1) - 1.0 / (e + 1.0)) < 1e-12);
  }
}

TEST_CASE("row_softmax rows sum to one and shift invariance") {
  Rng rng(11);
  Matrix m = rng_normal(rng, 20, 33);
  for (auto& v : m.data) v *= 30.0;  // spread the logits
  const Matrix s = row_softmax(m, 0.7);
  for (int i = 0; i < s.rows; ++i) {
    double sum = 0.0;
    for (int j = 0; j < s.cols; ++j) sum += s(i, j);
    CHECK(std::abs(sum - 1.0) < 1e-12);
  }
  Matrix shifted = m;
  for (int i = 0; i < m.rows; ++i) {
    for (int j = 0; j < m.cols; ++j) shifted(i, j) += 123.25;
  }
  const Matrix s2 = row_softmax(shifted, 0.7);
  for (std::size_t i = 0; i < s.size(); ++i) {
    CHECK(std::abs(s.data[i] - s2.data[i]) < 1e-12);
  }
}

TEST_CASE("exp_approx tracks libm exp") {
  for (double x = -700.0; x <= 700.0; x += 0.7137) {
    const double ref = std::exp(x);
    const double got = detail::exp_approx(x);
    CHECK(std::abs(got - ref) <= 4e-15 * ref);
  }
  CHECK(detail::exp_approx(0.0) == 1.0);
  CHECK(detail::exp_approx(-1000.0) < 1e-300);
}

TEST_CASE("l2_normalize_rows") {
  SUBCASE("hand case 3-4-5") {
    const Matrix n = l2_normalize_rows(from_rows(1, 2, {3.0, 4.0}), 1e-12);
    CHECK(n(0, 0) == doctest::Approx(0.6).epsilon(1e-10));
    CHECK(n(0, 1) == doctest::Approx(0.8).epsilon(1e-10));
  }
  SUBCASE("zero rows stay zero") {
    const Matrix n = l2_normalize_rows(Matrix(2, 4), 1e-6);
    for (const double v : n.data) CHECK(v == 0.0);
  }
  SUBCASE("idempotent on unit rows up to eps") {
    const Matrix unit = from_rows(1, 2, {0.6, 0.8});
    const Matrix n = l2_normalize_rows(unit, 1e-6);
    CHECK(std::abs(n(0, 0) - 0.6) < 1e-5);
    CHECK(std::abs(n(0, 1) - 0.8) < 1e-5);
  }
  SUBCASE("norms bounded by one, approaching one as eps shrinks") {
    Rng rng(5);
    const Matrix m = rng_normal(rng, 10, 6);
    for (const double eps : {1e-2, 1e-6, 1e-10}) {
      const Matrix n = l2_normalize_rows(m, eps);
      for (int i = 0; i < n.rows; ++i) {
        double ss = 0.0;
        for (int j = 0; j < n.cols; ++j) ss += n(i, j) * n(i, j);
        const double norm = std::sqrt(ss);
        CHECK(norm <= 1.0 + 1e-12);
        if (eps == 1e-10) CHECK(norm == doctest::Approx(1.0).epsilon(1e-8));
      }
    }
  }
  SUBCASE("rejects non-positive eps") {
    CHECK_THROWS_AS(l2_normalize_rows(Matrix(1, 1), 0.0), ContractViolation);
  }
}

TEST_CASE("frobenius_norm") {
  CHECK(frobenius_norm(Matrix(3, 3)) == 0.0);
  CHECK(frobenius_norm(Matrix::identity(4)) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(frobenius_norm(from_rows(1, 2, {3.0, 4.0})) == doctest::Approx(5.0).epsilon(1e-15));
}

TEST_CASE("conv2d identity kernel copies the grid") {
  Rng rng(9);
  Grid4 g(2, 3, 4, 5);
  const Matrix noise = rng_normal(rng, 1, static_cast<int>(g.data.size()));
  g.data.assign(noise.data.begin(), noise.data.end());
  const Grid4 out = conv2d(g, ConvKernel::identity(3, 5));
  for (std::size_t i = 0; i < g.data.size(); ++i) CHECK(out.data[i] == g.data[i]);
}

TEST_CASE("conv2d averaging kernel preserves interior constants") {
  Grid4 g(1, 5, 5, 1);
  for (auto& v : g.data) v = 2.5;
  ConvKernel avg = ConvKernel::dense(3, 1, 1);
  for (auto& v : avg.data) v = 1.0 / 9.0;
  const Grid4 out = conv2d(g, avg);
  CHECK(out.at(0, 2, 2, 0) == doctest::Approx(2.5).epsilon(1e-12));
  // Border cells see zero padding, so they shrink.
  CHECK(out.at(0, 0, 0, 0) < 2.5);
}

TEST_CASE("conv2d hand case: 1x2 grid, all-ones 3x3 kernel") {
  Grid4 g(1, 1, 2, 1);
  g.at(0, 0, 0, 0) = 1.0;
  g.at(0, 0, 1, 0) = 2.0;
  ConvKernel ones = ConvKernel::dense(3, 1, 1);
  for (auto& v : ones.data) v = 1.0;
  const Grid4 out = conv2d(g, ones);
  CHECK(out.at(0, 0, 0, 0) == 3.0);
  CHECK(out.at(0, 0, 1, 0) == 3.0);
}

TEST_CASE("conv2d rejects even kernels and mismatched channels") {
  CHECK_THROWS_AS(ConvKernel::dense(2, 1, 1), ContractViolation);
  Grid4 g(1, 2, 2, 3);
  CHECK_THROWS_AS(conv2d(g, ConvKernel::identity(3, 4)), ContractViolation);
}

TEST_CASE("conv2d is linear") {
  Rng rng(21);
  Grid4 x(2, 4, 3, 2), y(2, 4, 3, 2);
  {
    const Matrix nx = rng_normal(rng, 1, static_cast<int>(x.data.size()));
    const Matrix ny = rng_normal(rng, 1, static_cast<int>(y.data.size()));
    x.data.assign(nx.data.begin(), nx.data.end());
    y.data.assign(ny.data.begin(), ny.data.end());
  }
  ConvKernel k = ConvKernel::dense(3, 2, 2);
  {
    const Matrix nk = rng_normal(rng, 1, static_cast<int>(k.data.size()));
    k.data.assign(nk.data.begin(), nk.data.end());
  }
  const double a = 1.75, b = -0.5;
  Grid4 combo(2, 4, 3, 2);
  for (std::size_t i = 0; i < combo.data.size(); ++i) {
    combo.data[i] = a * x.data[i] + b * y.data[i];
  }
  const Grid4 lhs = conv2d(combo, k);
  const Grid4 cx = conv2d(x, k);
  const Grid4 cy = conv2d(y, k);
  for (std::size_t i = 0; i < lhs.data.size(); ++i) {
    CHECK(std::abs(lhs.data[i] - (a * cx.data[i] + b * cy.data[i])) < 1e-10);
  }
}

TEST_CASE("conv2d never mixes frames") {
  Rng rng(33);
  Grid4 g(3, 4, 4, 2);
  const Matrix noise = rng_normal(rng, 1, static_cast<int>(g.data.size()));
  g.data.assign(noise.data.begin(), noise.data.end());
  ConvKernel k = ConvKernel::depthwise_kernel(3, 2);
  const Matrix taps = rng_normal(rng, 1, static_cast<int>(k.data.size()));
  k.data.assign(taps.data.begin(), taps.data.end());

  const Grid4 base = conv2d(g, k);
  Grid4 perturbed = g;
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 4; ++x) {
      perturbed.at(2, y, x, 0) += 100.0;
    }
  }
  const Grid4 out = conv2d(perturbed, k);
  for (int f = 0; f < 2; ++f) {
    for (std::size_t i = 0; i < static_cast<std::size_t>(4 * 4 * 2); ++i) {
      const std::size_t off = static_cast<std::size_t>(f) * 4 * 4 * 2 + i;
      CHECK(out.data[off] == base.data[off]);
    }
  }
}

TEST_CASE("rng_normal determinism and moments") {
  Rng a(42), b(42), c(43);
  const Matrix m1 = rng_normal(a, 8, 9);
  const Matrix m2 = rng_normal(b, 8, 9);
  const Matrix m3 = rng_normal(c, 8, 9);
  CHECK(bitwise_equal(m1, m2));
  CHECK(!bitwise_equal(m1, m3));

  Rng big(42);
  const Matrix samples = rng_normal(big, 1000, 100);
  double mean = 0.0;
  for (const double v : samples.data) mean += v;
  mean /= static_cast<double>(samples.size());
  double var = 0.0;
  for (const double v : samples.data) var += (v - mean) * (v - mean);
  var /= static_cast<double>(samples.size() - 1);
  CHECK(std::abs(mean) < 0.02);       // CLT: sigma/sqrt(1e5) ~ 0.003
  CHECK(std::abs(var - 1.0) < 0.05);  // var of sample variance ~ sqrt(2/1e5)
}

TEST_CASE("parallel kernels match the serial reference bitwise") {
  Rng rng(1234);
  SUBCASE("matmul across shapes") {
    for (const auto [r, k, c] : {std::tuple{1, 1, 1}, {3, 5, 7}, {17, 64, 33}, {40, 300, 20}}) {
      const Matrix a = rng_normal(rng, r, k);
      const Matrix b = rng_normal(rng, k, c);
      CHECK(bitwise_equal(matmul(a, b), serial::matmul(a, b)));
    }
  }
  SUBCASE("row_softmax") {
    const Matrix m = rng_normal(rng, 23, 41);
    const Matrix p = row_softmax(m, 1.3);
    const Matrix s = serial::row_softmax(m, 1.3);
    CHECK(bitwise_equal(p, s));
  }
  SUBCASE("conv2d dense and depthwise") {
    Grid4 g(2, 6, 5, 3);
    const Matrix noise = rng_normal(rng, 1, static_cast<int>(g.data.size()));
    g.data.assign(noise.data.begin(), noise.data.end());
    ConvKernel dense = ConvKernel::dense(3, 3, 3);
    const Matrix dn = rng_normal(rng, 1, static_cast<int>(dense.data.size()));
    dense.data.assign(dn.data.begin(), dn.data.end());
    ConvKernel depth = ConvKernel::depthwise_kernel(5, 3);
    const Matrix dp = rng_normal(rng, 1, static_cast<int>(depth.data.size()));
    depth.data.assign(dp.data.begin(), dp.data.end());

    const Grid4 a = conv2d(g, dense);
    const Grid4 b = serial::conv2d(g, dense);
    for (std::size_t i = 0; i < a.data.size(); ++i) CHECK(a.data[i] == b.data[i]);
    const Grid4 x = conv2d(g, depth);
    const Grid4 y = serial::conv2d(g, depth);
    for (std::size_t i = 0; i < x.data.size(); ++i) CHECK(x.data[i] == y.data[i]);
  }
}

TEST_CASE("float kernels work at benchmark precision") {
  Rng rng(77);
  const Matrix ad = rng_normal(rng, 9, 12);
  const Matrix bd = rng_normal(rng, 12, 5);
  Matrix32 a(9, 12), b(12, 5);
  for (std::size_t i = 0; i < a.size(); ++i) a.data[i] = static_cast<float>(ad.data[i]);
  for (std::size_t i = 0; i < b.size(); ++i) b.data[i] = static_cast<float>(bd.data[i]);
  const Matrix32 c = matmul(a, b);
  const Matrix cd = matmul(ad, bd);
  for (std::size_t i = 0; i < c.size(); ++i) {
    CHECK(std::abs(static_cast<double>(c.data[i]) - cd.data[i]) < 1e-4);
  }
  const Matrix32 cs = serial::matmul(a, b);
  for (std::size_t i = 0; i < c.size(); ++i) CHECK(c.data[i] == cs.data[i]);
}
