#pragma once

#include <cmath>
#include <cstdint>
#include <cstddef>
#include <vector>

#include "vgt3/common.hpp"

namespace vgt3 {

// Dense row-major matrix. Double precision is the verification default;
// the float instantiation exists for the kernel benchmarks.
template <typename T>
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<T> data;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, T(0)) {
    require(r >= 0 && c >= 0, "Mat: negative dimensions");
  }

  static Mat identity(int n) {
    Mat m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = T(1);
    return m;
  }

  static Mat filled(int r, int c, T value) {
    Mat m(r, c);
    for (auto& v : m.data) v = value;
    return m;
  }

  T& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  const T& operator()(int r, int c) const {
    return data[static_cast<std::size_t>(r) * cols + c];
  }

  T* row(int r) { return data.data() + static_cast<std::size_t>(r) * cols; }
  const T* row(int r) const { return data.data() + static_cast<std::size_t>(r) * cols; }

  std::size_t size() const { return data.size(); }

  bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }

  bool all_finite() const {
    for (const T& v : data) {
      if (!std::isfinite(static_cast<double>(v))) return false;
    }
    return true;
  }
};

using Matrix = Mat<double>;
using Matrix32 = Mat<float>;

// Per-frame token grid: frame-major, then row-major spatial layout, with a
// channel vector per cell.
template <typename T>
struct Grid4T {
  int frames = 0;
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<T> data;

  Grid4T() = default;
  Grid4T(int f, int h, int w, int c)
      : frames(f),
        height(h),
        width(w),
        channels(c),
        data(static_cast<std::size_t>(f) * h * w * c, T(0)) {
    require(f >= 0 && h >= 0 && w >= 0 && c >= 0, "Grid4: negative dimensions");
  }

  std::size_t offset(int f, int y, int x, int c) const {
    return ((static_cast<std::size_t>(f) * height + y) * width + x) * channels + c;
  }

  T& at(int f, int y, int x, int c) { return data[offset(f, y, x, c)]; }
  const T& at(int f, int y, int x, int c) const { return data[offset(f, y, x, c)]; }

  T* cell(int f, int y, int x) { return data.data() + offset(f, y, x, 0); }
  const T* cell(int f, int y, int x) const { return data.data() + offset(f, y, x, 0); }
};

using Grid4 = Grid4T<double>;

// Stack of 2D convolution taps. Dense kernels mix channels
// (k x k x in_channels x out_channels); depthwise kernels keep channels
// separate and store only the diagonal taps (k x k x channels).
struct ConvKernel {
  int size = 0;  // spatial extent k, odd
  int in_channels = 0;
  int out_channels = 0;
  bool depthwise = false;
  std::vector<double> data;

  ConvKernel() = default;

  static ConvKernel dense(int k, int cin, int cout) {
    require(k >= 1 && k % 2 == 1, "ConvKernel: kernel size must be odd");
    ConvKernel ker;
    ker.size = k;
    ker.in_channels = cin;
    ker.out_channels = cout;
    ker.depthwise = false;
    ker.data.assign(static_cast<std::size_t>(k) * k * cin * cout, 0.0);
    return ker;
  }

  static ConvKernel depthwise_kernel(int k, int channels) {
    require(k >= 1 && k % 2 == 1, "ConvKernel: kernel size must be odd");
    ConvKernel ker;
    ker.size = k;
    ker.in_channels = channels;
    ker.out_channels = channels;
    ker.depthwise = true;
    ker.data.assign(static_cast<std::size_t>(k) * k * channels, 0.0);
    return ker;
  }

  // Depthwise kernel whose center tap is 1 for every channel: conv == copy.
  static ConvKernel identity(int k, int channels) {
    ConvKernel ker = depthwise_kernel(k, channels);
    const int center = (k / 2) * k + (k / 2);
    for (int c = 0; c < channels; ++c) {
      ker.data[static_cast<std::size_t>(center) * channels + c] = 1.0;
    }
    return ker;
  }

  double& dense_at(int ky, int kx, int ci, int co) {
    return data[((static_cast<std::size_t>(ky) * size + kx) * in_channels + ci) * out_channels +
                co];
  }
  const double& dense_at(int ky, int kx, int ci, int co) const {
    return data[((static_cast<std::size_t>(ky) * size + kx) * in_channels + ci) * out_channels +
                co];
  }

  double& depth_at(int ky, int kx, int c) {
    return data[(static_cast<std::size_t>(ky) * size + kx) * in_channels + c];
  }
  const double& depth_at(int ky, int kx, int c) const {
    return data[(static_cast<std::size_t>(ky) * size + kx) * in_channels + c];
  }

  bool is_identity() const;
};

// SplitMix64 state. The whole generator is the 64-bit counter, so copies
// are cheap and streams are reproducible across platforms.
struct Rng {
  std::uint64_t state = 0;

  explicit Rng(std::uint64_t seed) : state(seed) {}

  std::uint64_t next_u64() {
    state += 0x9E3779B97F4A7C15ull;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // 53-bit uniform in [0, 1).
  double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
};

inline bool ConvKernel::is_identity() const {
  const int center = (size / 2) * size + (size / 2);
  if (depthwise) {
    for (int t = 0; t < size * size; ++t) {
      for (int c = 0; c < in_channels; ++c) {
        const double want = (t == center) ? 1.0 : 0.0;
        if (data[static_cast<std::size_t>(t) * in_channels + c] != want) return false;
      }
    }
    return true;
  }
  if (in_channels != out_channels) return false;
  for (int t = 0; t < size * size; ++t) {
    for (int ci = 0; ci < in_channels; ++ci) {
      for (int co = 0; co < out_channels; ++co) {
        const double want = (t == center && ci == co) ? 1.0 : 0.0;
        if (data[(static_cast<std::size_t>(t) * in_channels + ci) * out_channels + co] != want) {
          return false;
        }
      }
    }
  }
  return true;
}

}  // namespace vgt3
