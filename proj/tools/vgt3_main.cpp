// Command-line driver: scaling benchmarks, verification suites, scene
// mapping and frozen-query passes, and scaling-exponent fits over the
// emitted CSV.
//
// Exit codes: 0 success, 1 verification failure, 2 usage/config error,
// 3 I/O error.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <vector>

#include "CLI11.hpp"
#include "vgt3/bench.hpp"
#include "vgt3/model.hpp"
#include "vgt3/verify.hpp"

namespace {

using namespace vgt3;

constexpr int kExitVerifyFailure = 1;
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;

std::uint64_t file_checksum(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path);
  std::uint64_t h = 1469598103934665603ull;
  char c;
  while (f.get(c)) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  return h;
}

void echo_config(const CLI::App& cmd) {
  std::cout << "# resolved config (" << cmd.get_name() << ")\n";
  std::cout << cmd.config_to_str(true, false);
}

// Flat key=value config support: defaults < file < command-line flags.
// File-derived tokens are spliced in right after the subcommand name, so
// later flags win; unknown keys are rejected against the subcommand's
// option list.
std::vector<std::string> expand_config_file(const CLI::App& app,
                                            std::vector<std::string> args) {
  std::size_t sub_pos = args.size();
  const CLI::App* sub = nullptr;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (const CLI::App* s = app.get_subcommand_no_throw(args[i])) {
      sub_pos = i;
      sub = s;
      break;
    }
  }
  if (!sub) return args;

  std::string path;
  for (std::size_t i = sub_pos + 1; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw ContractViolation("--config needs a file path");
      path = args[i + 1];
      args.erase(args.begin() + i, args.begin() + i + 2);
      break;
    }
    if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
      args.erase(args.begin() + i);
      break;
    }
  }
  if (path.empty()) return args;

  std::ifstream file(path);
  if (!file) throw IoError("cannot open config file " + path);
  std::vector<std::string> injected;
  std::string line;
  int lineno = 0;
  while (std::getline(file, line)) {
    ++lineno;
    const std::size_t start = line.find_first_not_of(" \t");
    if (start == std::string::npos || line[start] == '#') continue;
    const std::size_t eq = line.find('=', start);
    if (eq == std::string::npos) {
      throw ContractViolation("config line " + std::to_string(lineno) +
                              " is not key=value: " + line);
    }
    std::string key = line.substr(start, eq - start);
    while (!key.empty() && (key.back() == ' ' || key.back() == '\t')) key.pop_back();
    std::string value = line.substr(eq + 1);
    const std::size_t vstart = value.find_first_not_of(" \t");
    value = vstart == std::string::npos ? "" : value.substr(vstart);
    if (!sub->get_option_no_throw("--" + key)) {
      throw ContractViolation("unknown config key '" + key + "' for subcommand " +
                              sub->get_name());
    }
    injected.push_back("--" + key + "=" + value);
  }
  args.insert(args.begin() + sub_pos + 1, injected.begin(), injected.end());
  return args;
}

struct ModelFlags {
  int dim = 128;
  int heads = 4;
  int layers = 4;
  int expansion = 4;
  int steps = 2;
  double lr = 0.1;
  int grid_h = 8;
  int grid_w = 8;
  std::uint64_t seed = 42;

  void attach(CLI::App* cmd) {
    cmd->add_option("--dim", dim, "Token width d");
    cmd->add_option("--heads", heads, "Attention heads");
    cmd->add_option("--layers", layers, "Layer pairs");
    cmd->add_option("--expansion", expansion, "Fast-weight hidden expansion");
    cmd->add_option("--steps", steps, "Inner optimizer steps");
    cmd->add_option("--lr", lr, "Inner learning rate");
    cmd->add_option("--grid-h", grid_h, "Patch grid height per frame");
    cmd->add_option("--grid-w", grid_w, "Patch grid width per frame");
    cmd->add_option("--seed", seed, "Model/scene seed");
  }

  ModelConfig to_config(GlobalMode mode) const {
    ModelConfig cfg;
    cfg.layers = layers;
    cfg.d = dim;
    cfg.heads = heads;
    cfg.expansion = expansion;
    cfg.global_mode = mode;
    cfg.ttt_cfg.steps = steps;
    cfg.ttt_cfg.lr = lr;
    cfg.seed = seed;
    return cfg;
  }
};

int cmd_bench(const CLI::App& cmd, const SweepConfig& sweep, const std::string& out_path) {
  echo_config(cmd);
  const std::vector<BenchRecord> records = run_scaling_bench(sweep, &std::cout);
  append_csv(out_path, records);
  std::cout << "wrote " << records.size() << " rows to " << out_path << "\n";
  return 0;
}

int cmd_verify(const CLI::App& cmd, const std::string& suite, std::uint64_t seed,
               double ns_corruption) {
  echo_config(cmd);
  NsCoeffs coeffs;
  coeffs.a += ns_corruption;
  const std::vector<SuiteResult> results = run_suites(suite, seed, coeffs);
  bool all_pass = true;
  for (const SuiteResult& r : results) {
    std::cout << (r.pass ? "[PASS] " : "[FAIL] ") << r.name << ": " << r.detail << "\n";
    all_pass = all_pass && r.pass;
  }
  return all_pass ? 0 : kExitVerifyFailure;
}

int cmd_map(const CLI::App& cmd, const ModelFlags& flags, int frames,
            const std::string& out_path) {
  echo_config(cmd);
  const ModelConfig cfg = flags.to_config(GlobalMode::ttt);
  const TokenGrid tokens =
      tokenize_synthetic(frames, flags.grid_h, flags.grid_w, flags.dim, flags.seed);
  const ModelWeights weights = build_model_weights(cfg);

  ForwardOut out;
  const double wall_ms = time_median_ms(
      [&] { out = forward_with_weights(cfg, weights, tokens); }, 3, 1);
  save_scene(out.scene, out_path);
  std::cout << "mapped frames=" << frames << " layers=" << out.scene.layers.size()
            << " bytes=" << std::filesystem::file_size(out_path) << " wall_ms=" << wall_ms
            << " out=" << out_path << "\n";
  return 0;
}

int cmd_query(const CLI::App& cmd, const ModelFlags& flags, const std::string& scene_path,
              int query_frames, std::uint64_t query_seed, const std::string& out_path) {
  echo_config(cmd);
  const ModelConfig cfg = flags.to_config(GlobalMode::ttt);
  const std::uint64_t checksum_before = file_checksum(scene_path);
  const SceneState scene = load_scene(scene_path);

  const TokenGrid tokens =
      tokenize_synthetic(query_frames, flags.grid_h, flags.grid_w, flags.dim, query_seed);
  TokenGrid result;
  const double wall_ms =
      time_median_ms([&] { result = query(cfg, scene, tokens); }, 3, 1);

  const std::uint64_t checksum_after = file_checksum(scene_path);
  std::ostringstream report;
  report << "scene=" << scene_path << " mapped_frames=" << scene.n_frames
         << " query_frames=" << query_frames << " wall_ms=" << wall_ms << "\n";
  const Matrix coords = linear_probe(result.tokens, cfg.seed);
  for (int f = 0; f < query_frames; ++f) {
    const int rpf = result.rows_per_frame();
    double mean = 0.0, mean_sq = 0.0;
    for (int r = f * rpf; r < (f + 1) * rpf; ++r) {
      for (int j = 0; j < result.d; ++j) {
        mean += result.tokens(r, j);
        mean_sq += result.tokens(r, j) * result.tokens(r, j);
      }
    }
    const double n = static_cast<double>(rpf) * result.d;
    mean /= n;
    const double var = mean_sq / n - mean * mean;
    report << "frame " << f << " token_mean=" << mean << " token_std=" << std::sqrt(var)
           << " probe=(" << coords(f * rpf, 0) << "," << coords(f * rpf, 1) << ","
           << coords(f * rpf, 2) << ")\n";
  }
  report << "scene_checksum_before=" << checksum_before
         << " after=" << checksum_after
         << (checksum_before == checksum_after ? " (unchanged)" : " (CHANGED)") << "\n";

  std::cout << report.str();
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    if (!out) throw IoError("cannot open " + out_path);
    out << report.str();
  }
  return checksum_before == checksum_after ? 0 : kExitVerifyFailure;
}

int cmd_fit(const CLI::App& cmd, const std::string& csv_path, const std::string& mode) {
  echo_config(cmd);
  const double exponent = fit_scaling_exponent_csv(csv_path, mode);
  std::cout << "mode=" << mode << " exponent=" << exponent << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fast-weight test-time-training toy stack and benchmark harness"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  // File-sourced values are injected before user flags; last value wins.
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  // bench ------------------------------------------------------------
  SweepConfig sweep;
  std::vector<std::string> mode_names = {"ttt", "softmax"};
  std::string bench_out = "scaling.csv";
  CLI::App* bench = app.add_subcommand("bench", "Scaling benchmark, CSV output");
  bench->add_option("--modes", mode_names, "Modes to run (ttt, softmax)")
      ->delimiter(',')
      ->check(CLI::IsMember({"ttt", "softmax"}));
  bench->add_option("--frames", sweep.frames, "Frame counts to sweep")->delimiter(',');
  bench->add_option("--tokens-per-frame", sweep.tokens_per_frame, "Patch tokens per frame");
  bench->add_option("--dim", sweep.d, "Token width d");
  bench->add_option("--heads", sweep.heads, "Attention heads");
  bench->add_option("--layers", sweep.layers, "Layer pairs");
  bench->add_option("--expansion", sweep.expansion, "Fast-weight hidden expansion");
  bench->add_option("--steps", sweep.steps, "Inner optimizer steps");
  bench->add_option("--seed", sweep.seed, "Scene seed");
  bench->add_option("--reps", sweep.reps, "Timed repetitions (median reported)");
  bench->add_option("--threads", sweep.threads, "Pin OpenMP threads (0 = default)");
  bench->add_option("--workers", sweep.workers, "Simulated distributed workers (ttt)");
  bench->add_option("--offload-minibatch-frames", sweep.offload_minibatch_frames,
                    "Offload: frames per minibatch (0 = off)");
  bench->add_option("--resident-limit", sweep.offload_resident_limit,
                    "Offload: max resident minibatches");
  bench->add_option("--mem-budget-gb", sweep.memory_budget_gb,
                    "Reject configs whose forward pass would exceed this");
  bench->add_option("--out", bench_out, "CSV output path");
  bench->add_option("--config", "Read options from a key=value file (flags override it)")->type_name("FILE");

  // verify -----------------------------------------------------------
  std::string suite = "all";
  std::uint64_t verify_seed = 42;
  double ns_corruption = 0.0;
  CLI::App* verify = app.add_subcommand("verify", "Run verification suites");
  verify->add_option("--suite", suite, "all|grad|shard|spectral|query|serde")
      ->check(CLI::IsMember({"all", "grad", "shard", "spectral", "query", "serde"}));
  verify->add_option("--seed", verify_seed, "Suite seed");
  verify->add_option("--corrupt-ns", ns_corruption, "")->group("");  // fault-injection hook
  verify->add_option("--config", "Read options from a key=value file (flags override it)")->type_name("FILE");

  // map --------------------------------------------------------------
  ModelFlags map_flags;
  int map_frames = 16;
  std::string map_out = "scene.vgt3";
  CLI::App* map_cmd = app.add_subcommand("map", "Compress a synthetic scene into fast weights");
  map_flags.attach(map_cmd);
  map_cmd->add_option("--frames", map_frames, "Frames in the synthetic scene");
  map_cmd->add_option("--out", map_out, "Scene file path");
  map_cmd->add_option("--config", "Read options from a key=value file (flags override it)")->type_name("FILE");

  // query ------------------------------------------------------------
  ModelFlags query_flags;
  std::string scene_path;
  int query_frames = 1;
  std::uint64_t query_seed = 1042;
  std::string query_out;
  CLI::App* query_cmd = app.add_subcommand("query", "Frozen-query pass against a scene file");
  query_flags.attach(query_cmd);
  query_cmd->add_option("--scene", scene_path, "Scene file")->required();
  query_cmd->add_option("--query-frames", query_frames, "Frames in the query");
  query_cmd->add_option("--query-seed", query_seed, "Seed for the query tokens");
  query_cmd->add_option("--out", query_out, "Optional report file");
  query_cmd->add_option("--config", "Read options from a key=value file (flags override it)")->type_name("FILE");

  // fit ----------------------------------------------------------------
  std::string fit_csv;
  std::string fit_mode = "ttt";
  CLI::App* fit = app.add_subcommand("fit", "Fit the log-log scaling exponent from a CSV");
  fit->add_option("--csv", fit_csv, "Benchmark CSV")->required();
  fit->add_option("--mode", fit_mode, "Row mode to fit")
      ->check(CLI::IsMember({"ttt", "softmax"}));
  fit->add_option("--config", "Read options from a key=value file (flags override it)")->type_name("FILE");

  try {
    std::vector<std::string> args(argv + 1, argv + argc);
    args = expand_config_file(app, std::move(args));
    std::reverse(args.begin(), args.end());  // CLI11 consumes from the back
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  } catch (const ContractViolation& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitIo;
  }

  try {
    if (bench->parsed()) {
      sweep.modes.clear();
      for (const std::string& name : mode_names) {
        sweep.modes.push_back(name == "ttt" ? GlobalMode::ttt
                                            : GlobalMode::softmax_reference);
      }
      return cmd_bench(*bench, sweep, bench_out);
    }
    if (verify->parsed()) return cmd_verify(*verify, suite, verify_seed, ns_corruption);
    if (map_cmd->parsed()) return cmd_map(*map_cmd, map_flags, map_frames, map_out);
    if (query_cmd->parsed()) {
      return cmd_query(*query_cmd, query_flags, scene_path, query_frames, query_seed,
                       query_out);
    }
    if (fit->parsed()) return cmd_fit(*fit, fit_csv, fit_mode);
  } catch (const ContractViolation& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const RunError& e) {
    std::cerr << "run error: " << e.what() << "\n";
    return kExitVerifyFailure;
  }
  return kExitUsage;
}
