#include "vgt3/bench.hpp"

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "vgt3/sharding.hpp"

namespace vgt3 {

namespace {

constexpr const char* kCsvHeader =
    "mode,n_frames,tokens_per_frame,steps,wall_ms,flops_model,peak_resident_minibatches,seed";

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (const char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

// Grid whose area equals tokens_per_frame, as square as the divisors allow.
std::pair<int, int> grid_for_tokens(int tokens_per_frame) {
  require(tokens_per_frame >= 1, "bench: tokens_per_frame must be >= 1");
  int h = static_cast<int>(std::sqrt(static_cast<double>(tokens_per_frame)));
  while (h > 1 && tokens_per_frame % h != 0) --h;
  return {h, tokens_per_frame / h};
}

}  // namespace

std::string mode_name(GlobalMode mode) {
  return mode == GlobalMode::ttt ? "ttt" : "softmax";
}

void append_csv(const std::string& path, const std::vector<BenchRecord>& records) {
  const bool fresh = !std::filesystem::exists(path);
  std::ofstream file(path, std::ios::app);
  if (!file) throw IoError("append_csv: cannot open " + path);
  if (fresh) file << kCsvHeader << "\n";
  file.setf(std::ios::fmtflags(0), std::ios::floatfield);
  file.precision(17);
  for (const BenchRecord& r : records) {
    file << r.mode << ',' << r.n_frames << ',' << r.tokens_per_frame << ',' << r.steps << ','
         << r.wall_ms << ',' << r.flops_model << ',' << r.peak_resident_minibatches << ','
         << r.seed << "\n";
  }
  if (!file) throw IoError("append_csv: write failed for " + path);
}

std::vector<BenchRecord> read_csv(const std::string& path) {
  std::ifstream file(path);
  if (!file) throw IoError("read_csv: cannot open " + path);
  std::vector<BenchRecord> out;
  std::string line;
  bool first = true;
  while (std::getline(file, line)) {
    if (line.empty()) continue;
    if (first) {
      first = false;
      if (line == kCsvHeader) continue;  // header optional so files concatenate
    }
    const std::vector<std::string> f = split_fields(line);
    if (f.size() != 8) throw IoError("read_csv: malformed row: " + line);
    BenchRecord r;
    r.mode = f[0];
    r.n_frames = std::stoi(f[1]);
    r.tokens_per_frame = std::stoi(f[2]);
    r.steps = std::stoi(f[3]);
    r.wall_ms = std::stod(f[4]);
    r.flops_model = std::stoll(f[5]);
    r.peak_resident_minibatches = std::stoi(f[6]);
    r.seed = std::stoull(f[7]);
    out.push_back(std::move(r));
  }
  return out;
}

double fit_scaling_exponent(const std::vector<BenchRecord>& records, const std::string& mode) {
  std::vector<double> xs, ys;
  std::vector<int> seen;
  for (const BenchRecord& r : records) {
    if (r.mode != mode) continue;
    require(r.n_frames >= 1 && r.wall_ms > 0.0, "fit: rows need positive frames and time");
    xs.push_back(std::log(static_cast<double>(r.n_frames)));
    ys.push_back(std::log(r.wall_ms));
    if (std::find(seen.begin(), seen.end(), r.n_frames) == seen.end()) {
      seen.push_back(r.n_frames);
    }
  }
  require(seen.size() >= 3, "fit: need >= 3 rows with distinct n_frames for mode " + mode);

  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= static_cast<double>(xs.size());
  my /= static_cast<double>(xs.size());
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    num += (xs[i] - mx) * (ys[i] - my);
    den += (xs[i] - mx) * (xs[i] - mx);
  }
  return num / den;
}

double fit_scaling_exponent_csv(const std::string& path, const std::string& mode) {
  return fit_scaling_exponent(read_csv(path), mode);
}

double time_median_ms(const std::function<void()>& fn, int reps, int warmup) {
  require(reps >= 1, "time_median_ms: need at least one repetition");
  using clock = std::chrono::steady_clock;
  for (int i = 0; i < warmup; ++i) fn();
  std::vector<double> samples;
  samples.reserve(reps);
  for (int i = 0; i < reps; ++i) {
    const auto t0 = clock::now();
    fn();
    const auto t1 = clock::now();
    samples.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  std::sort(samples.begin(), samples.end());
  return samples[samples.size() / 2];
}

double estimate_forward_gb(const SweepConfig& cfg, GlobalMode mode, int n_frames) {
  const double n_tok = static_cast<double>(n_frames) * (cfg.tokens_per_frame + 2);
  const double token_bytes = n_tok * cfg.d * 8.0;
  double peak = 8.0 * token_bytes;  // stream, Q/K/V, residual copies
  if (mode == GlobalMode::softmax_reference) {
    peak += n_tok * n_tok * 8.0;  // one head's logits at a time
  } else {
    peak += 4.0 * n_tok * cfg.expansion * cfg.d * 8.0;  // hidden activations
  }
  return peak / (1024.0 * 1024.0 * 1024.0);
}

std::vector<BenchRecord> run_scaling_bench(const SweepConfig& cfg, std::ostream* log) {
  require(!cfg.frames.empty(), "bench: frame sweep must not be empty");
  require(cfg.reps >= 3, "bench: timing protocol requires >= 3 repetitions");
  if (cfg.threads > 0) omp_set_num_threads(cfg.threads);

  const auto [grid_h, grid_w] = grid_for_tokens(cfg.tokens_per_frame);
  std::vector<BenchRecord> records;

  for (const GlobalMode mode : cfg.modes) {
    for (const int n_frames : cfg.frames) {
      const double need_gb = estimate_forward_gb(cfg, mode, n_frames);
      if (need_gb > cfg.memory_budget_gb) {
        throw ContractViolation(
            "bench: config needs ~" + std::to_string(need_gb) + " GiB (> budget " +
            std::to_string(cfg.memory_budget_gb) +
            "); shrink frames/tokens or raise --mem-budget-gb");
      }

      ModelConfig model;
      model.layers = cfg.layers;
      model.d = cfg.d;
      model.heads = cfg.heads;
      model.expansion = cfg.expansion;
      model.global_mode = mode;
      model.ttt_cfg.steps = cfg.steps;
      model.seed = cfg.seed;

      // Synthetic data and slow weights are built outside the timed region.
      const TokenGrid tokens =
          tokenize_synthetic(n_frames, grid_h, grid_w, cfg.d, cfg.seed);
      const ModelWeights weights = build_model_weights(model);

      int peak_resident = 1;
      UpdateFn update;
      if (mode == GlobalMode::ttt && cfg.offload_minibatch_frames > 0) {
        const int rows_per_batch = cfg.offload_minibatch_frames * tokens.rows_per_frame();
        update = [&, rows_per_batch](const FastWeights& theta0, const Matrix& k,
                                     const Matrix& vp, const TttConfig& tcfg) {
          std::vector<KvShard> batches;
          for (int begin = 0; begin < k.rows; begin += rows_per_batch) {
            const int len = std::min(rows_per_batch, k.rows - begin);
            KvShard b;
            b.keys = Matrix(len, k.cols);
            b.targets = Matrix(len, vp.cols);
            for (int i = 0; i < len; ++i) {
              std::copy_n(k.row(begin + i), k.cols, b.keys.row(i));
              std::copy_n(vp.row(begin + i), vp.cols, b.targets.row(i));
            }
            batches.push_back(std::move(b));
          }
          const VectorMinibatchSource source(std::move(batches));
          OffloadResult res =
              run_offload_update(theta0, source, cfg.offload_resident_limit, tcfg);
          peak_resident = std::max(peak_resident, res.report.peak_resident_minibatches);
          return std::move(res.weights);
        };
      } else if (mode == GlobalMode::ttt && cfg.workers > 1) {
        update = [&](const FastWeights& theta0, const Matrix& k, const Matrix& vp,
                     const TttConfig& tcfg) {
          const ShardPlan plan =
              make_shard_plan(tokens.n_frames, cfg.workers, ShardStrategy::contiguous);
          const std::vector<KvShard> shards =
              split_rows_by_plan(k, vp, plan, tokens.rows_per_frame());
          return run_distributed_update(theta0, shards, tcfg, plan);
        };
      }

      const double wall_ms = time_median_ms(
          [&] { forward_with_weights(model, weights, tokens, update); }, cfg.reps,
          cfg.warmup);

      const std::int64_t n_tok = static_cast<std::int64_t>(tokens.total_rows());
      BenchRecord record;
      record.mode = mode_name(mode);
      record.n_frames = n_frames;
      record.tokens_per_frame = cfg.tokens_per_frame;
      record.steps = cfg.steps;
      record.wall_ms = wall_ms;
      // The model covers the global layers only: the frame-attention cost is
      // identical in both modes and would blur the mechanism under study.
      record.flops_model =
          mode == GlobalMode::ttt
              ? cfg.layers * flops_ttt(n_tok, cfg.d, cfg.expansion * cfg.d, cfg.steps)
              : cfg.layers * flops_sdpa(n_tok, cfg.d, cfg.heads);
      record.peak_resident_minibatches = peak_resident;
      record.seed = cfg.seed;
      records.push_back(record);

      if (log) {
        (*log) << record.mode << " n_frames=" << record.n_frames
               << " wall_ms=" << record.wall_ms << " flops=" << record.flops_model << "\n";
      }
    }
  }
  return records;
}

}  // namespace vgt3
