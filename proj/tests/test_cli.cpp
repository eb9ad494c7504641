// Drives the installed CLI binary end to end: exit codes, config echo,
// determinism of map, fingerprint rejection, CSV round trips.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"

#ifndef VGT3_CLI_PATH
#error "VGT3_CLI_PATH must point at the vgt3 binary"
#endif

namespace {

namespace fs = std::filesystem;

struct CmdResult {
  int exit_code;
  std::string output;
};

CmdResult run_cli(const std::string& args) {
  const fs::path out_path = fs::temp_directory_path() / "vgt3_cli_out.txt";
  const std::string cmd =
      std::string(VGT3_CLI_PATH) + " " + args + " > " + out_path.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  std::ifstream f(out_path);
  std::string output((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  std::remove(out_path.string().c_str());
#ifdef _WIN32
  return {status, output};
#else
  return {WEXITSTATUS(status), output};
#endif
}

std::string tmp(const char* name) { return (fs::temp_directory_path() / name).string(); }

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

const std::string kSmallModel = "--dim 16 --heads 2 --layers 2 --expansion 2 --grid-h 2 --grid-w 2";

}  // namespace

TEST_CASE("cli usage errors exit with code 2") {
  CHECK(run_cli("").exit_code == 2);               // missing subcommand
  CHECK(run_cli("bench --bogus-flag 1").exit_code == 2);
  CHECK(run_cli("verify --suite nonsense").exit_code == 2);
  CHECK(run_cli("fit --mode ttt").exit_code == 2);  // --csv required
}

TEST_CASE("cli io errors exit with code 3") {
  CHECK(run_cli("fit --csv /nonexistent/nowhere.csv --mode ttt").exit_code == 3);
  CHECK(run_cli("query --scene /nonexistent/nowhere.vgt3 " + kSmallModel).exit_code == 3);
}

TEST_CASE("verify subcommand: suites, filters, fault hook") {
  const CmdResult all = run_cli("verify --seed 42");
  CHECK(all.exit_code == 0);
  CHECK(all.output.find("[PASS] grad") != std::string::npos);
  CHECK(all.output.find("[PASS] serde") != std::string::npos);

  const CmdResult only = run_cli("verify --suite grad --seed 42");
  CHECK(only.exit_code == 0);
  CHECK(only.output.find("grad") != std::string::npos);
  CHECK(only.output.find("shard") == std::string::npos);

  // Corrupted Newton-Schulz coefficients must be caught.
  const CmdResult corrupt = run_cli("verify --suite spectral --seed 42 --corrupt-ns 0.5");
  CHECK(corrupt.exit_code == 1);
  CHECK(corrupt.output.find("[FAIL] spectral") != std::string::npos);
}

TEST_CASE("map is deterministic and query leaves the scene alone") {
  const std::string scene_a = tmp("cli_scene_a.vgt3");
  const std::string scene_b = tmp("cli_scene_b.vgt3");
  const std::string map_args = "map --frames 3 " + kSmallModel + " --seed 7 --out ";
  CHECK(run_cli(map_args + scene_a).exit_code == 0);
  CHECK(run_cli(map_args + scene_b).exit_code == 0);
  CHECK(slurp(scene_a) == slurp(scene_b));  // byte-identical across runs

  const CmdResult q = run_cli("query --scene " + scene_a + " " + kSmallModel +
                              " --seed 7 --query-frames 2");
  CHECK(q.exit_code == 0);
  CHECK(q.output.find("(unchanged)") != std::string::npos);

  // A mismatched model config must be refused before any output is written.
  const std::string refused_out = tmp("cli_refused.txt");
  std::remove(refused_out.c_str());
  const CmdResult bad = run_cli("query --scene " + scene_a + " " + kSmallModel +
                                " --seed 8 --out " + refused_out);
  CHECK(bad.exit_code != 0);
  CHECK(!fs::exists(refused_out));

  std::remove(scene_a.c_str());
  std::remove(scene_b.c_str());
}

TEST_CASE("bench emits parseable csv and fit reads it back") {
  const std::string csv = tmp("cli_bench.csv");
  std::remove(csv.c_str());
  const CmdResult bench = run_cli(
      "bench --modes ttt,softmax --frames 2,4 --tokens-per-frame 4 --dim 16 --heads 2 "
      "--layers 1 --expansion 2 --steps 1 --seed 42 --out " +
      csv);
  CHECK(bench.exit_code == 0);
  CHECK(bench.output.find("# resolved config (bench)") != std::string::npos);

  const std::string body = slurp(csv);
  CHECK(body.find("mode,n_frames,tokens_per_frame,steps,wall_ms,flops_model,"
                  "peak_resident_minibatches,seed") == 0);
  int lines = 0;
  for (const char c : body) lines += c == '\n';
  CHECK(lines == 5);  // header + 2 modes x 2 sizes

  // Two sizes are not enough for a fit: config error.
  CHECK(run_cli("fit --csv " + csv + " --mode ttt").exit_code == 2);
  std::remove(csv.c_str());
}

TEST_CASE("config file feeds options and flags override it") {
  const std::string cfg = tmp("cli_conf.ini");
  {
    std::ofstream f(cfg);
    f << "suite=grad\nseed=11\n";
  }
  const CmdResult r = run_cli("verify --config " + cfg);
  CHECK(r.exit_code == 0);
  CHECK(r.output.find("seed=11") != std::string::npos);

  const CmdResult overridden = run_cli("verify --config " + cfg + " --seed 12");
  CHECK(overridden.exit_code == 0);
  CHECK(overridden.output.find("seed=12") != std::string::npos);

  {
    std::ofstream f(cfg);
    f << "suite=grad\nunknown_key=1\n";
  }
  CHECK(run_cli("verify --config " + cfg).exit_code == 2);  // unknown keys rejected
  std::remove(cfg.c_str());
}
