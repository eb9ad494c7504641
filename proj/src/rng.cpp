#include <cmath>

#include "vgt3/kernels.hpp"

namespace vgt3 {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

}  // namespace

Matrix rng_normal(Rng& rng, int rows, int cols) {
  Matrix m(rows, cols);
  const std::size_t n = m.size();
  std::size_t i = 0;
  while (i < n) {
    // u1 in (0, 1] so the log is finite; u2 in [0, 1).
    const double u1 = static_cast<double>((rng.next_u64() >> 11) + 1) * 0x1.0p-53;
    const double u2 = rng.next_unit();
    const double r = std::sqrt(-2.0 * std::log(u1));
    m.data[i++] = r * std::cos(kTwoPi * u2);
    if (i < n) m.data[i++] = r * std::sin(kTwoPi * u2);
  }
  return m;
}

}  // namespace vgt3
