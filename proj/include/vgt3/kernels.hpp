#pragma once

// Data-parallel kernels used throughout the stack. Every loop parallelizes
// over independent output elements while each element's reduction runs in
// ascending index order, so results are bit-identical to the serial twins
// in vgt3/serial.hpp at any thread count.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>

#include "vgt3/matrix.hpp"

namespace vgt3 {

namespace detail {

// exp(x) for finite doubles: round-to-int via the 1.5*2^52 shifter, a
// degree-13 Taylor core on the Cody-Waite remainder, exponent assembled
// from integer bits. ~1 ulp on [-708, 709]; beyond that the exponent
// saturates (huge-but-finite instead of inf, ~1e-308 instead of 0). Pure
// straight-line arithmetic: the compiler can vectorize callers, and bit
// patterns do not depend on the platform libm. The integer clamp stands in
// for an FP clamp because FP ternaries stay branches at default flags.
inline double exp_approx(double x) {
  constexpr double kLog2e = 1.44269504088896340736;
  constexpr double kLn2Hi = 6.93147180369123816490e-01;
  constexpr double kLn2Lo = 1.90821492927058770002e-10;
  constexpr double kShifter = 6755399441055744.0;  // 1.5 * 2^52
  const double kd = x * kLog2e + kShifter;
  std::int64_t n = static_cast<std::int32_t>(std::bit_cast<std::int64_t>(kd));
  const double k = kd - kShifter;
  const double r = (x - k * kLn2Hi) - k * kLn2Lo;
  n = n < -1022 ? -1022 : n;
  n = n > 1023 ? 1023 : n;
  // 1/j! for j = 13 .. 2, then the linear and constant terms.
  double p = 1.6059043836821614599e-10;
  p = p * r + 2.0876756987868098979e-09;
  p = p * r + 2.5052108385441718775e-08;
  p = p * r + 2.7557319223985890653e-07;
  p = p * r + 2.7557319223985892511e-06;
  p = p * r + 2.4801587301587301566e-05;
  p = p * r + 1.9841269841269841253e-04;
  p = p * r + 1.3888888888888889419e-03;
  p = p * r + 8.3333333333333332177e-03;
  p = p * r + 4.1666666666666664354e-02;
  p = p * r + 1.6666666666666665741e-01;
  p = p * r + 5.0e-01;
  p = p * r + 1.0;
  p = p * r + 1.0;
  const double scale = std::bit_cast<double>((n + 1023) << 52);
  return p * scale;
}

inline constexpr int kMatmulPanel = 256;   // columns of B kept hot per pass
inline constexpr int kMatmulTile = 8;      // output columns accumulated in registers
inline constexpr int kMatmulRowBlock = 4;  // A rows sharing one pass over B

// Up to four rows of C against a column panel of B. Every element owns one
// accumulator fed by std::fma in ascending k, so its bits depend neither on
// the block decomposition nor on compiler contraction choices. Remainder
// blocks replicate a row pointer instead of switching code paths; the
// duplicate lanes are computed and discarded. Deliberately not inlined:
// the serial and OpenMP callers must execute this exact code so their
// outputs compare bit-for-bit.
template <typename T>
[[gnu::noinline]] void matmul_block_panel(const T* __restrict__ a, int lda, int nrows,
                                          const T* __restrict__ bdata, int bcols, int kdim,
                                          int jj, int je, T* __restrict__ c, int ldc) {
  constexpr int kTile = kMatmulTile;
  const std::size_t stride = static_cast<std::size_t>(lda);
  const T* a0 = a;
  const T* a1 = a + (nrows > 1 ? stride : 0);
  const T* a2 = a + (nrows > 2 ? 2 * stride : 0);
  const T* a3 = a + (nrows > 3 ? 3 * stride : 0);
  for (int j0 = jj; j0 < je; j0 += kTile) {
    const int tile = std::min(kTile, je - j0);
    const T* b = bdata + j0;
    T acc0[kTile] = {}, acc1[kTile] = {}, acc2[kTile] = {}, acc3[kTile] = {};
    if (tile == kTile) {
      for (int k = 0; k < kdim; ++k) {
        const T* brow = b + static_cast<std::size_t>(k) * bcols;
        const T v0 = a0[k], v1 = a1[k], v2 = a2[k], v3 = a3[k];
        for (int t = 0; t < kTile; ++t) {
          acc0[t] = std::fma(v0, brow[t], acc0[t]);
          acc1[t] = std::fma(v1, brow[t], acc1[t]);
          acc2[t] = std::fma(v2, brow[t], acc2[t]);
          acc3[t] = std::fma(v3, brow[t], acc3[t]);
        }
      }
    } else {
      for (int k = 0; k < kdim; ++k) {
        const T* brow = b + static_cast<std::size_t>(k) * bcols;
        const T v0 = a0[k], v1 = a1[k], v2 = a2[k], v3 = a3[k];
        for (int t = 0; t < tile; ++t) {
          acc0[t] = std::fma(v0, brow[t], acc0[t]);
          acc1[t] = std::fma(v1, brow[t], acc1[t]);
          acc2[t] = std::fma(v2, brow[t], acc2[t]);
          acc3[t] = std::fma(v3, brow[t], acc3[t]);
        }
      }
    }
    for (int t = 0; t < tile; ++t) c[j0 + t] = acc0[t];
    if (nrows > 1) {
      for (int t = 0; t < tile; ++t) c[ldc + j0 + t] = acc1[t];
    }
    if (nrows > 2) {
      for (int t = 0; t < tile; ++t) c[2 * static_cast<std::size_t>(ldc) + j0 + t] = acc2[t];
    }
    if (nrows > 3) {
      for (int t = 0; t < tile; ++t) c[3 * static_cast<std::size_t>(ldc) + j0 + t] = acc3[t];
    }
  }
}

// softmax(scale * row) in place: vectorizable max and exp passes, then the
// normalizing sum in ascending index order. Shared between the serial and
// parallel entry points for bitwise agreement.
template <typename T>
[[gnu::noinline]] void softmax_row(T* __restrict__ row, int n, double scale) {
  double mx = -std::numeric_limits<double>::infinity();
#pragma omp simd reduction(max : mx)  // max is exact, order-free
  for (int j = 0; j < n; ++j) {
    mx = std::max(mx, scale * static_cast<double>(row[j]));
  }
#pragma omp simd
  for (int j = 0; j < n; ++j) {
    row[j] = static_cast<T>(exp_approx(scale * static_cast<double>(row[j]) - mx));
  }
  double sum = 0.0;
  for (int j = 0; j < n; ++j) sum += static_cast<double>(row[j]);
  const double inv = 1.0 / sum;
#pragma omp simd
  for (int j = 0; j < n; ++j) {
    row[j] = static_cast<T>(static_cast<double>(row[j]) * inv);
  }
}

}  // namespace detail

// C = A * B, accumulated over k in ascending order for every element, so
// results are independent of the tiling and of the thread count. The outer
// panel keeps a column block of B cache-resident while A rows stream
// through.
template <typename T>
Mat<T> matmul(const Mat<T>& a, const Mat<T>& b) {
  require(a.cols == b.rows, "matmul: a.cols != b.rows");
  Mat<T> c(a.rows, b.cols);
  const int blocks = (a.rows + detail::kMatmulRowBlock - 1) / detail::kMatmulRowBlock;
  for (int jj = 0; jj < b.cols; jj += detail::kMatmulPanel) {
    const int je = std::min(jj + detail::kMatmulPanel, b.cols);
#pragma omp parallel for schedule(static)
    for (int blk = 0; blk < blocks; ++blk) {
      const int i0 = blk * detail::kMatmulRowBlock;
      const int nrows = std::min(detail::kMatmulRowBlock, a.rows - i0);
      detail::matmul_block_panel(a.row(i0), a.cols, nrows, b.data.data(), b.cols, a.cols, jj,
                                 je, c.row(i0), c.cols);
    }
  }
  return c;
}

// Tiled so both sides stay cache-resident; large strided transposes would
// otherwise pay a full cache line per element written.
template <typename T>
Mat<T> transpose(const Mat<T>& m) {
  Mat<T> t(m.cols, m.rows);
  constexpr int kB = 48;
  const int row_tiles = (m.rows + kB - 1) / kB;
#pragma omp parallel for schedule(static)
  for (int ti = 0; ti < row_tiles; ++ti) {
    const int i0 = ti * kB;
    const int ie = std::min(i0 + kB, m.rows);
    for (int j0 = 0; j0 < m.cols; j0 += kB) {
      const int je = std::min(j0 + kB, m.cols);
      for (int i = i0; i < ie; ++i) {
        const T* src = m.row(i);
        for (int j = j0; j < je; ++j) {
          t.data[static_cast<std::size_t>(j) * m.rows + i] = src[j];
        }
      }
    }
  }
  return t;
}

// Each row becomes softmax(scale * row), computed with the per-row max
// subtracted so large logits cannot overflow.
template <typename T>
void row_softmax_inplace(Mat<T>& m, double scale) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m.rows; ++i) {
    detail::softmax_row(m.row(i), m.cols, scale);
  }
}

template <typename T>
Mat<T> row_softmax(const Mat<T>& m, double scale) {
  Mat<T> out = m;
  row_softmax_inplace(out, scale);
  return out;
}

// Rows are divided by (euclidean norm + eps); zero rows stay zero because
// the guard keeps the denominator positive.
template <typename T>
Mat<T> l2_normalize_rows(const Mat<T>& m, double eps) {
  require(eps > 0.0, "l2_normalize_rows: eps must be positive");
  Mat<T> out(m.rows, m.cols);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m.rows; ++i) {
    const T* src = m.row(i);
    T* dst = out.row(i);
    double ss = 0.0;
    for (int j = 0; j < m.cols; ++j) {
      ss += static_cast<double>(src[j]) * static_cast<double>(src[j]);
    }
    const double inv = 1.0 / (std::sqrt(ss) + eps);
    for (int j = 0; j < m.cols; ++j) {
      dst[j] = static_cast<T>(static_cast<double>(src[j]) * inv);
    }
  }
  return out;
}

template <typename T>
double frobenius_norm(const Mat<T>& m) {
  double ss = 0.0;
  for (const T& v : m.data) {
    ss += static_cast<double>(v) * static_cast<double>(v);
  }
  return std::sqrt(ss);
}

// Per-frame 2D cross-correlation with zero padding and "same" output shape.
// Frames never mix. Taps accumulate in (ky, kx, ci) order per output cell.
template <typename T>
Grid4T<T> conv2d(const Grid4T<T>& grid, const ConvKernel& kernel) {
  require(kernel.size >= 1 && kernel.size % 2 == 1, "conv2d: kernel size must be odd");
  require(kernel.in_channels == grid.channels, "conv2d: channel mismatch");
  Grid4T<T> out(grid.frames, grid.height, grid.width, kernel.out_channels);
  const int k = kernel.size;
  const int half = k / 2;
#pragma omp parallel for collapse(2) schedule(static)
  for (int f = 0; f < grid.frames; ++f) {
    for (int y = 0; y < grid.height; ++y) {
      for (int x = 0; x < grid.width; ++x) {
        T* dst = out.cell(f, y, x);
        if (kernel.depthwise) {
          for (int ky = 0; ky < k; ++ky) {
            const int sy = y + ky - half;
            if (sy < 0 || sy >= grid.height) continue;
            for (int kx = 0; kx < k; ++kx) {
              const int sx = x + kx - half;
              if (sx < 0 || sx >= grid.width) continue;
              const T* src = grid.cell(f, sy, sx);
              const double* taps = &kernel.data[(static_cast<std::size_t>(ky) * k + kx) *
                                                kernel.in_channels];
              for (int c = 0; c < grid.channels; ++c) {
                dst[c] += static_cast<T>(taps[c] * static_cast<double>(src[c]));
              }
            }
          }
        } else {
          for (int ky = 0; ky < k; ++ky) {
            const int sy = y + ky - half;
            if (sy < 0 || sy >= grid.height) continue;
            for (int kx = 0; kx < k; ++kx) {
              const int sx = x + kx - half;
              if (sx < 0 || sx >= grid.width) continue;
              const T* src = grid.cell(f, sy, sx);
              for (int ci = 0; ci < grid.channels; ++ci) {
                const double v = static_cast<double>(src[ci]);
                const double* taps = &kernel.dense_at(ky, kx, ci, 0);
                for (int co = 0; co < kernel.out_channels; ++co) {
                  dst[co] += static_cast<T>(v * taps[co]);
                }
              }
            }
          }
        }
      }
    }
  }
  return out;
}

// Standard normal samples via SplitMix64 + Box-Muller. Entries are drawn
// in row-major pairs; an odd tail discards the sine half of its pair, so
// the stream consumed depends only on rows*cols.
Matrix rng_normal(Rng& rng, int rows, int cols);

}  // namespace vgt3
