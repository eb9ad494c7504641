#pragma once

#include <cstdint>
#include <functional>
#include <span>

#include "vgt3/attention.hpp"
#include "vgt3/matrix.hpp"

namespace vgt3 {

// SwiGLU fast weights: the compressed key->value mapping of one global
// layer. w1 gates, w3 projects up, w2 projects back down.
struct FastWeights {
  Matrix w1;  // d x m
  Matrix w3;  // d x m
  Matrix w2;  // m x d

  int dim() const { return w1.rows; }
  int hidden() const { return w1.cols; }
  std::size_t value_count() const { return w1.size() + w3.size() + w2.size(); }
  bool same_shape(const FastWeights& o) const {
    return w1.same_shape(o.w1) && w3.same_shape(o.w3) && w2.same_shape(o.w2);
  }
  static FastWeights zeros(int d, int m) {
    return FastWeights{Matrix(d, m), Matrix(d, m), Matrix(m, d)};
  }
};

enum class ConvTarget { values, keys, keys_and_values, none };

// Inner objective. neg_dot minimizes -T(k)^T v so the update increases
// alignment; residual is the 0.5*||T(k) - v||^2 alternative, available but
// not the default.
enum class InnerLoss { neg_dot, residual };

struct TttConfig {
  int steps = 2;
  double lr = 0.1;
  int ns_iters = 5;
  double eps = 1e-7;
  int conv_kernel_size = 3;
  ConvTarget conv_target = ConvTarget::values;
  InnerLoss loss = InnerLoss::neg_dot;
  // When set, the sharded/offloaded runners divide lr by the number of
  // minibatches (sum semantics stay the default).
  bool scale_lr_by_minibatches = false;
};

struct TttLayerParams {
  AttentionParams attn;   // norm_mode=l2; w_q/w_k/w_v/w_o reused from the block
  FastWeights theta0;     // initial fast weights, reset at every sequence
  ConvKernel conv_kernel; // depthwise-diagonal by default
  TttConfig cfg;
};

// Spatial shape of the patch tokens of each frame.
struct GridShape {
  int frames = 0;
  int height = 0;
  int width = 0;
};

// Y = (silu(X w1) .* (X w3)) w2 with silu(z) = z / (1 + e^-z).
Matrix fast_forward(const FastWeights& theta, const Matrix& x);

// Reshapes patch-token rows of v onto their frame grids, convolves each
// frame, flattens back. Special-token rows pass through untouched.
Matrix short_conv2d_values(const Matrix& v, const GridShape& grid,
                           std::span<const std::uint8_t> special_mask,
                           const ConvKernel& kernel);

double inner_loss(const FastWeights& theta, const Matrix& k, const Matrix& vp,
                  InnerLoss kind = InnerLoss::neg_dot);

// Exact analytic gradient of inner_loss with respect to each weight.
FastWeights inner_grad(const FastWeights& theta, const Matrix& k, const Matrix& vp,
                       InnerLoss kind = InnerLoss::neg_dot);

struct NsCoeffs {
  double a = 3.4445;
  double b = -4.7750;
  double c = 2.0315;
};

// X0 = G / (||G||_F + eps); X <- a*X + b*(X X^T) X + c*(X X^T)^2 X.
// Drives singular values toward 1; zero input maps to zero.
Matrix newton_schulz5(const Matrix& g, int iters, double eps);
Matrix newton_schulz5(const Matrix& g, int iters, double eps, const NsCoeffs& coeffs);

// W <- W - lr * newton_schulz5(grad_W) for each weight matrix. No momentum:
// with one or two inner steps it would be inert.
FastWeights muon_step(const FastWeights& theta, const FastWeights& grad, double lr,
                      int ns_iters, double eps);

// cfg.steps iterations of {inner_grad; muon_step} starting from theta0.
FastWeights ttt_update(const FastWeights& theta0, const Matrix& k, const Matrix& vp,
                       const TttConfig& cfg);

// fast_forward on query rows; never mutates theta.
Matrix ttt_apply(const FastWeights& theta, const Matrix& q);

enum class TttMode { update_and_apply, frozen_query };

// Pluggable update strategy so a driver can route the optimization through
// the sharded or offloaded runners; empty means plain ttt_update.
using UpdateFn =
    std::function<FastWeights(const FastWeights&, const Matrix&, const Matrix&, const TttConfig&)>;

struct TttBlockOut {
  Matrix tokens;
  FastWeights theta;
};

// The two stages of a global TTT layer. update_and_apply fits fresh fast
// weights from theta0 and applies them; frozen_query applies state_in
// without touching it.
TttBlockOut ttt_block(const Matrix& tokens, const GridShape& grid,
                      std::span<const std::uint8_t> special_mask, const TttLayerParams& params,
                      TttMode mode, const FastWeights* state_in = nullptr,
                      const UpdateFn& update = {});

// Linear cost model: steps * (12*n*d*m + ns_iters*4*max(d,m)^3) + 6*n*d*m
// apply + 6*n*d^2 projections. The Newton-Schulz term does not depend on n.
std::int64_t flops_ttt(std::int64_t n_tokens, std::int64_t d, std::int64_t m, std::int64_t steps,
                       std::int64_t ns_iters = 5);

}  // namespace vgt3
