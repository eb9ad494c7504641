#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vgt3/ttt.hpp"

namespace vgt3 {

struct SuiteResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

// Verification suites behind `verify`. Each runs self-contained checks with
// the given seed and reports the worst observed deviation.

// inner_grad against central finite differences plus row additivity.
SuiteResult verify_gradients(std::uint64_t seed, int instances = 100);

// Shard-sum vs full batch, distributed vs single worker, offload residency.
SuiteResult verify_sharding(std::uint64_t seed);

// Newton-Schulz: identity oracle, spectral bounds via the SVD oracle,
// descent alignment. The coefficient override exists so a fault can be
// injected to prove the suite detects it.
SuiteResult verify_spectral(std::uint64_t seed, const NsCoeffs& coeffs = NsCoeffs{});

// Frozen-query immutability: scene files and fast weights untouched,
// joint and single queries bitwise identical.
SuiteResult verify_query(std::uint64_t seed);

// Scene serialization round trip and rejection paths.
SuiteResult verify_serde(std::uint64_t seed);

std::vector<SuiteResult> run_suites(const std::string& which, std::uint64_t seed,
                                    const NsCoeffs& coeffs = NsCoeffs{});

}  // namespace vgt3
