#pragma once

#include <stdexcept>
#include <string>

namespace vgt3 {

// Thrown when a caller violates an operation's precondition (shape
// mismatches, invalid configuration values, inconsistent masks).
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Thrown when a verification oracle cannot produce an answer
// (e.g. Jacobi SVD fails to converge within its sweep budget).
class OracleFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Thrown when a runner cannot complete (worker failure, stream
// exhaustion, fingerprint mismatch).
class RunError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ContractViolation(msg);
}

}  // namespace vgt3
