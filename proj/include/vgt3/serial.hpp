#pragma once

// Single-threaded twins of the kernels in vgt3/kernels.hpp, kept for
// testing and for the kernel benchmark. Loop bodies are written to match
// the parallel versions expression-for-expression so outputs compare
// bit-for-bit.

#include <algorithm>
#include <cmath>
#include <limits>

#include "vgt3/kernels.hpp"
#include "vgt3/matrix.hpp"

namespace vgt3::serial {

template <typename T>
Mat<T> matmul(const Mat<T>& a, const Mat<T>& b) {
  require(a.cols == b.rows, "matmul: a.cols != b.rows");
  Mat<T> c(a.rows, b.cols);
  const int blocks = (a.rows + detail::kMatmulRowBlock - 1) / detail::kMatmulRowBlock;
  for (int jj = 0; jj < b.cols; jj += detail::kMatmulPanel) {
    const int je = std::min(jj + detail::kMatmulPanel, b.cols);
    for (int blk = 0; blk < blocks; ++blk) {
      const int i0 = blk * detail::kMatmulRowBlock;
      const int nrows = std::min(detail::kMatmulRowBlock, a.rows - i0);
      detail::matmul_block_panel(a.row(i0), a.cols, nrows, b.data.data(), b.cols, a.cols, jj,
                                 je, c.row(i0), c.cols);
    }
  }
  return c;
}

template <typename T>
Mat<T> row_softmax(const Mat<T>& m, double scale) {
  Mat<T> out = m;
  for (int i = 0; i < out.rows; ++i) {
    detail::softmax_row(out.row(i), out.cols, scale);
  }
  return out;
}

template <typename T>
Grid4T<T> conv2d(const Grid4T<T>& grid, const ConvKernel& kernel) {
  require(kernel.size >= 1 && kernel.size % 2 == 1, "conv2d: kernel size must be odd");
  require(kernel.in_channels == grid.channels, "conv2d: channel mismatch");
  Grid4T<T> out(grid.frames, grid.height, grid.width, kernel.out_channels);
  const int k = kernel.size;
  const int half = k / 2;
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

}  // namespace vgt3::serial
