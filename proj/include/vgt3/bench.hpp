#pragma once

#include <cstdint>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "vgt3/model.hpp"

namespace vgt3 {

// One CSV row of the scaling benchmark. Column order is fixed:
// mode,n_frames,tokens_per_frame,steps,wall_ms,flops_model,peak_resident_minibatches,seed
struct BenchRecord {
  std::string mode;
  int n_frames = 0;
  int tokens_per_frame = 0;
  int steps = 0;
  double wall_ms = 0.0;
  std::int64_t flops_model = 0;
  int peak_resident_minibatches = 1;
  std::uint64_t seed = 0;
};

// Appends rows, writing the header only when the file does not exist yet.
void append_csv(const std::string& path, const std::vector<BenchRecord>& records);
std::vector<BenchRecord> read_csv(const std::string& path);

// Least-squares slope of log(wall_ms) against log(n_frames) over the rows
// of one mode. Needs at least three rows with distinct frame counts.
double fit_scaling_exponent(const std::vector<BenchRecord>& records, const std::string& mode);
double fit_scaling_exponent_csv(const std::string& path, const std::string& mode);

struct SweepConfig {
  std::vector<GlobalMode> modes = {GlobalMode::ttt, GlobalMode::softmax_reference};
  std::vector<int> frames = {32, 64, 128, 256};
  int tokens_per_frame = 64;
  int d = 128;
  int heads = 4;
  int layers = 4;
  int expansion = 4;
  int steps = 2;
  std::uint64_t seed = 42;
  int reps = 3;    // timed repetitions, median reported
  int warmup = 1;
  int threads = 0;  // 0 = leave the OpenMP default alone
  // Optional offloaded execution for the ttt mode: split the global-layer
  // rows into minibatches of this many frames and bound device residency.
  int offload_minibatch_frames = 0;
  int offload_resident_limit = 1;
  // Optional simulated multi-worker execution for the ttt mode.
  int workers = 1;
  double memory_budget_gb = 3.5;
};

std::string mode_name(GlobalMode mode);

// Rough peak allocation of one forward pass, used to reject configurations
// that cannot fit before they thrash.
double estimate_forward_gb(const SweepConfig& cfg, GlobalMode mode, int n_frames);

// Runs the sweep: for each (mode, n_frames) generates a synthetic scene
// (excluded from timing), then times forward passes. One record per pair.
std::vector<BenchRecord> run_scaling_bench(const SweepConfig& cfg, std::ostream* log = nullptr);

// Monotonic-clock median-of-reps timing helper shared by the benchmarks.
double time_median_ms(const std::function<void()>& fn, int reps, int warmup);

}  // namespace vgt3
