// Benchmarks the OpenMP kernels against their serial twins and checks that
// both produce bit-identical outputs while timing them. Covers the f64
// verification precision and the f32 benchmark precision.

#include <omp.h>

#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include "vgt3/bench.hpp"
#include "vgt3/kernels.hpp"
#include "vgt3/serial.hpp"

using namespace vgt3;

namespace {

template <typename T>
Mat<T> random_mat(Rng& rng, int rows, int cols) {
  const Matrix d = rng_normal(rng, rows, cols);
  Mat<T> out(rows, cols);
  for (std::size_t i = 0; i < d.size(); ++i) out.data[i] = static_cast<T>(d.data[i]);
  return out;
}

template <typename T>
bool same_bits(const Mat<T>& a, const Mat<T>& b) {
  return a.same_shape(b) &&
         std::memcmp(a.data.data(), b.data.data(), a.size() * sizeof(T)) == 0;
}

struct Row {
  std::string name;
  double serial_ms;
  double parallel_ms;
  double gflops;
  bool identical;
};

template <typename T>
Row bench_matmul(Rng& rng, int n, const char* label) {
  const Mat<T> a = random_mat<T>(rng, n, n);
  const Mat<T> b = random_mat<T>(rng, n, n);
  Mat<T> out_serial, out_parallel;
  const double t_serial =
      time_median_ms([&] { out_serial = serial::matmul(a, b); }, 3, 1);
  const double t_parallel = time_median_ms([&] { out_parallel = matmul(a, b); }, 3, 1);
  const double flops = 2.0 * n * n * static_cast<double>(n);
  return Row{std::string("matmul ") + label + " " + std::to_string(n), t_serial, t_parallel,
             flops / (t_parallel * 1e6), same_bits(out_serial, out_parallel)};
}

template <typename T>
Row bench_softmax(Rng& rng, int n, const char* label) {
  const Mat<T> m = random_mat<T>(rng, n, n);
  Mat<T> out_serial, out_parallel;
  const double t_serial =
      time_median_ms([&] { out_serial = serial::row_softmax(m, 0.125); }, 3, 1);
  const double t_parallel =
      time_median_ms([&] { out_parallel = row_softmax(m, 0.125); }, 3, 1);
  const double elems = static_cast<double>(n) * n;
  return Row{std::string("softmax ") + label + " " + std::to_string(n), t_serial, t_parallel,
             elems / (t_parallel * 1e6), same_bits(out_serial, out_parallel)};
}

Row bench_conv(Rng& rng, int frames, int hw, int channels) {
  Grid4 g(frames, hw, hw, channels);
  const Matrix noise = rng_normal(rng, 1, static_cast<int>(g.data.size()));
  g.data.assign(noise.data.begin(), noise.data.end());
  ConvKernel k = ConvKernel::depthwise_kernel(3, channels);
  const Matrix taps = rng_normal(rng, 1, static_cast<int>(k.data.size()));
  k.data.assign(taps.data.begin(), taps.data.end());

  Grid4 out_serial, out_parallel;
  const double t_serial = time_median_ms([&] { out_serial = serial::conv2d(g, k); }, 3, 1);
  const double t_parallel = time_median_ms([&] { out_parallel = conv2d(g, k); }, 3, 1);
  const bool identical =
      std::memcmp(out_serial.data.data(), out_parallel.data.data(),
                  out_serial.data.size() * sizeof(double)) == 0;
  const double flops = 2.0 * g.data.size() * 9.0;
  return Row{"conv2d dw3x3 f64 " + std::to_string(frames) + "x" + std::to_string(hw) + "x" +
                 std::to_string(hw) + "x" + std::to_string(channels),
             t_serial, t_parallel, flops / (t_parallel * 1e6), identical};
}

}  // namespace

int main(int argc, char** argv) {
  int threads = 0;
  for (int i = 1; i < argc; ++i) {
    if (std::string(argv[i]) == "--threads" && i + 1 < argc) {
      threads = std::atoi(argv[i + 1]);
    }
  }
  if (threads > 0) omp_set_num_threads(threads);

  Rng rng(42);
  std::vector<Row> rows;
  for (const int n : {128, 256, 512}) {
    rows.push_back(bench_matmul<double>(rng, n, "f64"));
    rows.push_back(bench_matmul<float>(rng, n, "f32"));
  }
  for (const int n : {512, 2048}) {
    rows.push_back(bench_softmax<double>(rng, n, "f64"));
    rows.push_back(bench_softmax<float>(rng, n, "f32"));
  }
  rows.push_back(bench_conv(rng, 16, 16, 64));
  rows.push_back(bench_conv(rng, 64, 8, 128));

  std::printf("%-28s %12s %12s %10s %10s  %s\n", "kernel", "serial_ms", "parallel_ms",
              "speedup", "gflops", "bitwise");
  bool all_identical = true;
  for (const Row& r : rows) {
    std::printf("%-28s %12.3f %12.3f %10.2f %10.2f  %s\n", r.name.c_str(), r.serial_ms,
                r.parallel_ms, r.serial_ms / r.parallel_ms, r.gflops,
                r.identical ? "yes" : "NO");
    all_identical = all_identical && r.identical;
  }
  if (!all_identical) {
    std::fprintf(stderr, "serial and parallel kernels disagree\n");
    return 1;
  }
  std::printf("threads=%d, serial and parallel outputs bit-identical\n",
              omp_get_max_threads());
  return 0;
}
