#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "vgt3/ttt.hpp"

namespace vgt3 {

enum class ShardStrategy { contiguous, round_robin };

// Assignment of frames to workers. Empty shards are allowed when there are
// more workers than frames.
struct ShardPlan {
  int n_frames = 0;
  int n_workers = 1;
  ShardStrategy strategy = ShardStrategy::contiguous;
  std::vector<int> assignments;  // per-frame worker index

  std::vector<int> frames_of(int worker) const;
};

ShardPlan make_shard_plan(int n_frames, int n_workers, ShardStrategy strategy);

// One worker's slice of the inner objective: key rows and their targets.
struct KvShard {
  Matrix keys;
  Matrix targets;
};

// Row-partitions (k, vp) by the plan, assuming rows_per_frame contiguous
// rows per frame in frame order.
std::vector<KvShard> split_rows_by_plan(const Matrix& k, const Matrix& vp, const ShardPlan& plan,
                                        int rows_per_frame);

// Sum of per-shard gradients in ascending shard order; equals the
// full-batch gradient because the loss is a sum over rows.
FastWeights grad_accumulate_sharded(const FastWeights& theta, std::span<const KvShard> shards,
                                    const ShardPlan& plan,
                                    InnerLoss kind = InnerLoss::neg_dot);

struct CommReport {
  std::int64_t steps = 0;
  // Values exchanged per worker per step: one FastWeights-shaped gradient,
  // independent of how many frames each worker holds.
  std::int64_t payload_values_per_worker_per_step = 0;
};

// Simulated multi-GPU inference: workers compute shard gradients
// concurrently, the reducer sums them in ascending worker order, and one
// muon step is applied identically everywhere per optimization step.
FastWeights run_distributed_update(const FastWeights& theta0, std::span<const KvShard> shards,
                                   const TttConfig& cfg, const ShardPlan& plan,
                                   CommReport* comm = nullptr);

struct ResidencyReport {
  int peak_resident_minibatches = 0;
  std::int64_t loads = 0;
  std::int64_t stores = 0;
};

// Replayable host-side store of minibatches. load(i) models the copy from
// host to device memory.
class MinibatchSource {
 public:
  virtual ~MinibatchSource() = default;
  virtual std::size_t count() const = 0;
  virtual KvShard load(std::size_t index) const = 0;
};

class VectorMinibatchSource final : public MinibatchSource {
 public:
  explicit VectorMinibatchSource(std::vector<KvShard> batches) : batches_(std::move(batches)) {}
  std::size_t count() const override { return batches_.size(); }
  KvShard load(std::size_t index) const override { return batches_.at(index); }

 private:
  std::vector<KvShard> batches_;
};

struct OffloadResult {
  FastWeights weights;
  ResidencyReport report;
};

// Single-worker inference with bounded device residency: at most
// resident_limit minibatches live at once. Each optimization step streams
// through the source, computing the gradient over each resident group and
// accumulating groups in ascending order. When everything fits, the whole
// batch is one group, so the result is bitwise equal to ttt_update.
OffloadResult run_offload_update(const FastWeights& theta0, const MinibatchSource& source,
                                 int resident_limit, const TttConfig& cfg);

// Test hook: perturb one worker's submitted gradient to exercise the
// integrity check in verify_shard_equivalence.
struct ShardFault {
  int worker = 0;
  double delta = 1e-3;
};

struct ShardCheckResult {
  int n_rows = 0;
  int n_workers = 0;
  double max_rel_dev = 0.0;
  bool pass = false;
  std::optional<int> failed_worker;  // set when a worker's gradient is corrupt
};

struct ShardEquivalenceReport {
  std::vector<ShardCheckResult> results;
  bool all_pass = true;
};

// Compares shard-summed against full-batch gradients over a grid of sizes
// and worker counts, recomputing each worker's contribution independently
// to localize faults. Threshold: 1e-10 relative.
ShardEquivalenceReport verify_shard_equivalence(std::uint64_t seed, std::span<const int> sizes,
                                                std::span<const int> worker_counts,
                                                const ShardFault* fault = nullptr);

// Largest elementwise deviation measured against each matrix's own scale
// (its maximum absolute entry). Elementwise-relative comparison would be
// unbounded at near-cancelled entries under summation regrouping, so this
// is the notion of "relative" used by every equivalence check here.
double max_rel_deviation(const Matrix& a, const Matrix& b);
double max_rel_deviation(const FastWeights& a, const FastWeights& b);

}  // namespace vgt3
