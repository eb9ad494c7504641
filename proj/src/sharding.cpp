#include "vgt3/sharding.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <exception>
#include <thread>

#include "vgt3/kernels.hpp"

namespace vgt3 {

namespace {

void add_into(Matrix& acc, const Matrix& g) {
  require(acc.same_shape(g), "gradient reduce: shape mismatch");
  for (std::size_t i = 0; i < acc.size(); ++i) acc.data[i] += g.data[i];
}

void add_into(FastWeights& acc, const FastWeights& g) {
  add_into(acc.w1, g.w1);
  add_into(acc.w3, g.w3);
  add_into(acc.w2, g.w2);
}

Matrix stack_rows(const Matrix& a, const Matrix& b) {
  if (a.rows == 0) return b;
  if (b.rows == 0) return a;
  require(a.cols == b.cols, "stack_rows: width mismatch");
  Matrix out(a.rows + b.rows, a.cols);
  std::copy(a.data.begin(), a.data.end(), out.data.begin());
  std::copy(b.data.begin(), b.data.end(), out.data.begin() + a.data.size());
  return out;
}

}  // namespace

double max_rel_deviation(const Matrix& a, const Matrix& b) {
  require(a.same_shape(b), "max_rel_deviation: shape mismatch");
  double scale = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    scale = std::max({scale, std::abs(a.data[i]), std::abs(b.data[i])});
  }
  if (scale == 0.0) return 0.0;
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a.data[i] - b.data[i]));
  }
  return worst / scale;
}

double max_rel_deviation(const FastWeights& a, const FastWeights& b) {
  return std::max({max_rel_deviation(a.w1, b.w1), max_rel_deviation(a.w3, b.w3),
                   max_rel_deviation(a.w2, b.w2)});
}

std::vector<int> ShardPlan::frames_of(int worker) const {
  std::vector<int> out;
  for (int f = 0; f < n_frames; ++f) {
    if (assignments[f] == worker) out.push_back(f);
  }
  return out;
}

ShardPlan make_shard_plan(int n_frames, int n_workers, ShardStrategy strategy) {
  require(n_frames >= 0, "make_shard_plan: negative frame count");
  require(n_workers >= 1, "make_shard_plan: need at least one worker");
  ShardPlan plan;
  plan.n_frames = n_frames;
  plan.n_workers = n_workers;
  plan.strategy = strategy;
  plan.assignments.resize(n_frames);
  if (strategy == ShardStrategy::round_robin) {
    for (int f = 0; f < n_frames; ++f) plan.assignments[f] = f % n_workers;
  } else {
    // Consecutive blocks whose sizes differ by at most one; the first
    // (n_frames % n_workers) workers take the extra frame.
    const int base = n_workers > 0 ? n_frames / n_workers : 0;
    const int extra = n_workers > 0 ? n_frames % n_workers : 0;
    int f = 0;
    for (int w = 0; w < n_workers; ++w) {
      const int len = base + (w < extra ? 1 : 0);
      for (int j = 0; j < len; ++j) plan.assignments[f++] = w;
    }
  }
  return plan;
}

std::vector<KvShard> split_rows_by_plan(const Matrix& k, const Matrix& vp, const ShardPlan& plan,
                                        int rows_per_frame) {
  require(rows_per_frame >= 1, "split_rows_by_plan: rows_per_frame must be >= 1");
  require(k.rows == vp.rows, "split_rows_by_plan: K/V' row counts differ");
  require(k.rows == plan.n_frames * rows_per_frame,
          "split_rows_by_plan: rows do not cover the planned frames");
  std::vector<KvShard> shards(plan.n_workers);
  for (int w = 0; w < plan.n_workers; ++w) {
    const std::vector<int> frames = plan.frames_of(w);
    KvShard& shard = shards[w];
    shard.keys = Matrix(static_cast<int>(frames.size()) * rows_per_frame, k.cols);
    shard.targets = Matrix(static_cast<int>(frames.size()) * rows_per_frame, vp.cols);
    int dst = 0;
    for (const int f : frames) {
      for (int r = 0; r < rows_per_frame; ++r, ++dst) {
        const int src = f * rows_per_frame + r;
        std::copy_n(k.row(src), k.cols, shard.keys.row(dst));
        std::copy_n(vp.row(src), vp.cols, shard.targets.row(dst));
      }
    }
  }
  return shards;
}

FastWeights grad_accumulate_sharded(const FastWeights& theta, std::span<const KvShard> shards,
                                    const ShardPlan& plan, InnerLoss kind) {
  require(static_cast<int>(shards.size()) == plan.n_workers,
          "grad_accumulate_sharded: shard count != planned workers");
  FastWeights acc = FastWeights::zeros(theta.dim(), theta.hidden());
  bool first = true;
  for (const KvShard& shard : shards) {
    if (shard.keys.rows == 0) continue;
    FastWeights g = inner_grad(theta, shard.keys, shard.targets, kind);
    if (first) {
      acc = std::move(g);  // single-shard case stays bitwise equal to inner_grad
      first = false;
    } else {
      add_into(acc, g);
    }
  }
  return acc;
}

FastWeights run_distributed_update(const FastWeights& theta0, std::span<const KvShard> shards,
                                   const TttConfig& cfg, const ShardPlan& plan,
                                   CommReport* comm) {
  require(static_cast<int>(shards.size()) == plan.n_workers,
          "run_distributed_update: shard count != planned workers");
  const int n_workers = plan.n_workers;
  double lr = cfg.lr;
  if (cfg.scale_lr_by_minibatches && n_workers > 0) lr /= static_cast<double>(n_workers);

  FastWeights theta = theta0;
  if (comm) {
    comm->steps = cfg.steps;
    comm->payload_values_per_worker_per_step = static_cast<std::int64_t>(theta0.value_count());
  }

  for (int step = 0; step < cfg.steps; ++step) {
    std::vector<FastWeights> grads(n_workers);
    std::vector<std::exception_ptr> errors(n_workers);
    {
      std::vector<std::thread> workers;
      workers.reserve(n_workers);
      for (int w = 0; w < n_workers; ++w) {
        workers.emplace_back([&, w]() {
          try {
            if (shards[w].keys.rows > 0) {
              grads[w] = inner_grad(theta, shards[w].keys, shards[w].targets, cfg.loss);
            }
          } catch (...) {
            errors[w] = std::current_exception();
          }
        });
      }
      for (auto& t : workers) t.join();
    }
    for (int w = 0; w < n_workers; ++w) {
      if (errors[w]) {
        try {
          std::rethrow_exception(errors[w]);
        } catch (const std::exception& e) {
          throw RunError("worker " + std::to_string(w) + " failed: " + e.what());
        }
      }
    }

    // Ordered reduction: ascending worker index, regardless of completion
    // order above.
    FastWeights total = FastWeights::zeros(theta.dim(), theta.hidden());
    bool first = true;
    for (int w = 0; w < n_workers; ++w) {
      if (shards[w].keys.rows == 0) continue;
      if (first) {
        total = std::move(grads[w]);
        first = false;
      } else {
        add_into(total, grads[w]);
      }
    }
    theta = muon_step(theta, total, lr, cfg.ns_iters, cfg.eps);
  }
  return theta;
}

OffloadResult run_offload_update(const FastWeights& theta0, const MinibatchSource& source,
                                 int resident_limit, const TttConfig& cfg) {
  require(resident_limit >= 1, "run_offload_update: resident_limit must be >= 1");
  const std::size_t expected = source.count();
  double lr = cfg.lr;
  if (cfg.scale_lr_by_minibatches && expected > 0) lr /= static_cast<double>(expected);

  ResidencyReport report;
  // Device-memory model: an index-keyed cache of at most resident_limit
  // minibatches. Batches survive across steps until evicted.
  std::deque<std::pair<std::size_t, KvShard>> resident;
  auto find_resident = [&](std::size_t idx) -> const KvShard* {
    for (const auto& [i, batch] : resident) {
      if (i == idx) return &batch;
    }
    return nullptr;
  };

  FastWeights theta = theta0;
  for (int step = 0; step < cfg.steps; ++step) {
    if (source.count() != expected) {
      throw RunError("run_offload_update: minibatch stream exhausted mid-step");
    }
    FastWeights total = FastWeights::zeros(theta.dim(), theta.hidden());
    bool first = true;
    std::size_t next = 0;
    while (next < expected) {
      // Fill the device with the next ascending group of minibatches.
      const std::size_t group_begin = next;
      while (next < expected &&
             next - group_begin < static_cast<std::size_t>(resident_limit)) {
        if (!find_resident(next)) {
          while (static_cast<int>(resident.size()) >= resident_limit) {
            resident.pop_front();
            ++report.stores;
          }
          resident.emplace_back(next, source.load(next));
          ++report.loads;
          report.peak_resident_minibatches =
              std::max(report.peak_resident_minibatches, static_cast<int>(resident.size()));
        }
        ++next;
      }
      // One gradient over the concatenated resident group; with a single
      // group this is exactly the full-batch computation.
      Matrix keys(0, 0), targets(0, 0);
      for (std::size_t idx = group_begin; idx < next; ++idx) {
        const KvShard* batch = find_resident(idx);
        require(batch != nullptr, "run_offload_update: resident batch missing");
        keys = stack_rows(keys, batch->keys);
        targets = stack_rows(targets, batch->targets);
      }
      if (keys.rows == 0) continue;
      FastWeights g = inner_grad(theta, keys, targets, cfg.loss);
      if (first) {
        total = std::move(g);
        first = false;
      } else {
        add_into(total, g);
      }
    }
    if (expected > 0) theta = muon_step(theta, total, lr, cfg.ns_iters, cfg.eps);
  }

  // Flush whatever is still on the device back to the host.
  while (!resident.empty()) {
    resident.pop_front();
    ++report.stores;
  }
  return OffloadResult{std::move(theta), report};
}

ShardEquivalenceReport verify_shard_equivalence(std::uint64_t seed, std::span<const int> sizes,
                                                std::span<const int> worker_counts,
                                                const ShardFault* fault) {
  constexpr int kDim = 16;
  constexpr int kHidden = 32;
  constexpr double kThreshold = 1e-10;

  ShardEquivalenceReport report;
  Rng rng(seed);
  const double scale = 1.0 / std::sqrt(static_cast<double>(kDim));

  for (const int n_rows : sizes) {
    FastWeights theta;
    theta.w1 = rng_normal(rng, kDim, kHidden);
    theta.w3 = rng_normal(rng, kDim, kHidden);
    theta.w2 = rng_normal(rng, kHidden, kDim);
    for (auto& v : theta.w1.data) v *= scale;
    for (auto& v : theta.w3.data) v *= scale;
    for (auto& v : theta.w2.data) v *= scale;
    const Matrix k = rng_normal(rng, n_rows, kDim);
    const Matrix vp = rng_normal(rng, n_rows, kDim);
    const FastWeights full = inner_grad(theta, k, vp);

    for (const int n_workers : worker_counts) {
      ShardCheckResult result;
      result.n_rows = n_rows;
      result.n_workers = n_workers;

      const ShardPlan plan = make_shard_plan(n_rows, n_workers, ShardStrategy::contiguous);
      std::vector<KvShard> shards = split_rows_by_plan(k, vp, plan, 1);

      // Submitted per-worker gradients (possibly corrupted by the fault
      // hook), each checked against an independent recomputation.
      FastWeights sum = FastWeights::zeros(kDim, kHidden);
      bool first = true;
      for (int w = 0; w < n_workers; ++w) {
        if (shards[w].keys.rows == 0) continue;
        FastWeights g = inner_grad(theta, shards[w].keys, shards[w].targets);
        if (fault && fault->worker == w) {
          g.w2.data[0] += fault->delta;
        }
        const FastWeights check = inner_grad(theta, shards[w].keys, shards[w].targets);
        if (max_rel_dev(g, check) > kThreshold && !result.failed_worker) {
          result.failed_worker = w;
        }
        if (first) {
          sum = std::move(g);
          first = false;
        } else {
          add_into(sum, g);
        }
      }

      result.max_rel_dev = max_rel_dev(sum, full);
      result.pass = result.max_rel_dev <= kThreshold && !result.failed_worker;
      report.all_pass = report.all_pass && result.pass;
      report.results.push_back(std::move(result));
    }
  }
  return report;
}

}  // namespace vgt3
