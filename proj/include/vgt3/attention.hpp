#pragma once

#include <cstdint>

#include "vgt3/matrix.hpp"

namespace vgt3 {

enum class NormMode { l2, none };

// Slow weights of one attention block. norm_mode=l2 replaces the original
// learned QK layer norms with plain L2 normalization; norm_mode=none skips
// normalization entirely.
struct AttentionParams {
  Matrix w_q;
  Matrix w_k;
  Matrix w_v;
  Matrix w_o;
  int heads = 1;
  double lambda_base = 0.0;  // 0 means 1/sqrt(head_dim)
  NormMode norm_mode = NormMode::l2;

  int dim() const { return w_q.rows; }
  double lambda() const;
};

// Temperature rescaling for sequences longer than the nominal training
// length: lambda' = lambda * max(1, log_{N_T} N).
struct EntropyScaleConfig {
  std::int64_t n_train_tokens = 32856;
  bool enabled = true;
};

// Default norm guard for the Q/K normalization inside the blocks.
inline constexpr double kNormEps = 1e-7;

struct Qkv {
  Matrix q;
  Matrix k;
  Matrix v;
};

// Q = norm(tokens * w_q^T), K = norm(tokens * w_k^T), V = tokens * w_v^T.
// With norm_mode=l2 each per-head row segment of Q and K is L2-normalized;
// V is never normalized.
Qkv project_qkv(const Matrix& tokens, const AttentionParams& params, double eps);

double entropy_scale(double lambda_base, std::int64_t n_tokens, const EntropyScaleConfig& cfg);

// Per head: O_h = row_softmax(lambda * Q_h K_h^T) * V_h, heads concatenated.
// Attention spans every row, i.e. all tokens of all frames.
Matrix sdpa_global(const Matrix& q, const Matrix& k, const Matrix& v, int heads, double lambda);

// tokens + sdpa_global(project_qkv(tokens)) * w_o^T. No layer norm on the
// token stream; the toy stack studies the attention mechanisms in isolation.
Matrix attention_block_reference(const Matrix& tokens, const AttentionParams& params,
                                 const EntropyScaleConfig& cfg);

// Analytic cost model: 4*n^2*d (two n^2-by-d contractions, 2 flops per MAC)
// + 6*n*d^2 (QKVO projections at the conventional constant).
std::int64_t flops_sdpa(std::int64_t n_tokens, std::int64_t d, std::int64_t heads);

// Per-head-segment L2 normalization of each row.
Matrix l2_normalize_heads(const Matrix& m, int heads, double eps);

}  // namespace vgt3
