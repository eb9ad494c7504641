#include "vgt3/ttt.hpp"

#include <algorithm>
#include <cmath>

#include "vgt3/kernels.hpp"

namespace vgt3 {

namespace {

inline double sigmoid(double z) { return 1.0 / (1.0 + detail::exp_approx(-z)); }
inline double silu(double z) { return z * sigmoid(z); }
inline double silu_prime(double z) {
  const double s = sigmoid(z);
  return s * (1.0 + z * (1.0 - s));
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
  require(a.same_shape(b), "hadamard: shape mismatch");
  Matrix out(a.rows, a.cols);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < a.rows; ++i) {
    const double* pa = a.row(i);
    const double* pb = b.row(i);
    double* po = out.row(i);
    for (int j = 0; j < a.cols; ++j) po[j] = pa[j] * pb[j];
  }
  return out;
}

Matrix map_silu(const Matrix& z) {
  Matrix out(z.rows, z.cols);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < z.rows; ++i) {
    const double* src = z.row(i);
    double* dst = out.row(i);
    for (int j = 0; j < z.cols; ++j) dst[j] = silu(src[j]);
  }
  return out;
}

Matrix map_silu_prime(const Matrix& z) {
  Matrix out(z.rows, z.cols);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < z.rows; ++i) {
    const double* src = z.row(i);
    double* dst = out.row(i);
    for (int j = 0; j < z.cols; ++j) dst[j] = silu_prime(src[j]);
  }
  return out;
}

void check_theta(const FastWeights& theta) {
  require(theta.w1.same_shape(theta.w3) && theta.w2.rows == theta.w1.cols &&
              theta.w2.cols == theta.w1.rows,
          "FastWeights: inconsistent shapes");
}

}  // namespace

Matrix fast_forward(const FastWeights& theta, const Matrix& x) {
  check_theta(theta);
  require(x.cols == theta.dim(), "fast_forward: input width != d");
  const Matrix gate = map_silu(matmul(x, theta.w1));
  const Matrix up = matmul(x, theta.w3);
  return matmul(hadamard(gate, up), theta.w2);
}

Matrix short_conv2d_values(const Matrix& v, const GridShape& grid,
                           std::span<const std::uint8_t> special_mask,
                           const ConvKernel& kernel) {
  require(static_cast<std::size_t>(v.rows) == special_mask.size(),
          "short_conv2d_values: mask length != row count");
  std::size_t patches = 0;
  for (const std::uint8_t flag : special_mask) {
    if (!flag) ++patches;
  }
  const std::size_t expected =
      static_cast<std::size_t>(grid.frames) * grid.height * grid.width;
  require(patches == expected, "short_conv2d_values: patch rows do not match grid shape");
  require(kernel.in_channels == v.cols && kernel.out_channels == v.cols,
          "short_conv2d_values: kernel channels != d");

  Grid4 packed(grid.frames, grid.height, grid.width, v.cols);
  std::size_t cell = 0;
  for (int r = 0; r < v.rows; ++r) {
    if (special_mask[r]) continue;
    std::copy_n(v.row(r), v.cols, packed.data.data() + cell * v.cols);
    ++cell;
  }

  const Grid4 mixed = conv2d(packed, kernel);

  Matrix out = v;  // special-token rows keep their exact bytes
  cell = 0;
  for (int r = 0; r < out.rows; ++r) {
    if (special_mask[r]) continue;
    std::copy_n(mixed.data.data() + cell * v.cols, v.cols, out.row(r));
    ++cell;
  }
  return out;
}

double inner_loss(const FastWeights& theta, const Matrix& k, const Matrix& vp, InnerLoss kind) {
  require(k.rows == vp.rows && vp.cols == theta.dim(), "inner_loss: K/V' shape mismatch");
  const Matrix y = fast_forward(theta, k);
  double acc = 0.0;
  if (kind == InnerLoss::neg_dot) {
    for (std::size_t i = 0; i < y.size(); ++i) acc -= y.data[i] * vp.data[i];
  } else {
    for (std::size_t i = 0; i < y.size(); ++i) {
      const double r = y.data[i] - vp.data[i];
      acc += 0.5 * r * r;
    }
  }
  return acc;
}

FastWeights inner_grad(const FastWeights& theta, const Matrix& k, const Matrix& vp,
                       InnerLoss kind) {
  require(k.rows == vp.rows && vp.cols == theta.dim(), "inner_grad: K/V' shape mismatch");
  require(k.cols == theta.dim(), "inner_grad: key width != d");

  const Matrix z1 = matmul(k, theta.w1);
  const Matrix gate = map_silu(z1);
  const Matrix up = matmul(k, theta.w3);
  const Matrix hidden = hadamard(gate, up);

  Matrix g_out(vp.rows, vp.cols);
  if (kind == InnerLoss::neg_dot) {
    for (std::size_t i = 0; i < g_out.size(); ++i) g_out.data[i] = -vp.data[i];
  } else {
    const Matrix y = matmul(hidden, theta.w2);
    for (std::size_t i = 0; i < g_out.size(); ++i) g_out.data[i] = y.data[i] - vp.data[i];
  }

  const Matrix kt = transpose(k);
  const Matrix g_hidden = matmul(g_out, transpose(theta.w2));

  FastWeights grad;
  grad.w2 = matmul(transpose(hidden), g_out);
  grad.w3 = matmul(kt, hadamard(g_hidden, gate));
  grad.w1 = matmul(kt, hadamard(hadamard(g_hidden, up), map_silu_prime(z1)));
  return grad;
}

Matrix newton_schulz5(const Matrix& g, int iters, double eps, const NsCoeffs& coeffs) {
  require(iters >= 1, "newton_schulz5: iters must be >= 1");
  const double norm = frobenius_norm(g);
  Matrix x(g.rows, g.cols);
  const double inv = 1.0 / (norm + eps);
  for (std::size_t i = 0; i < g.size(); ++i) x.data[i] = g.data[i] * inv;
  for (int it = 0; it < iters; ++it) {
    const Matrix gram = matmul(x, transpose(x));
    const Matrix bx = matmul(gram, x);
    const Matrix cx = matmul(gram, bx);
#pragma omp parallel for schedule(static)
    for (int r = 0; r < x.rows; ++r) {
      double* px = x.row(r);
      const double* pb = bx.row(r);
      const double* pc = cx.row(r);
      for (int j = 0; j < x.cols; ++j) {
        px[j] = coeffs.a * px[j] + coeffs.b * pb[j] + coeffs.c * pc[j];
      }
    }
  }
  return x;
}

Matrix newton_schulz5(const Matrix& g, int iters, double eps) {
  return newton_schulz5(g, iters, eps, NsCoeffs{});
}

FastWeights muon_step(const FastWeights& theta, const FastWeights& grad, double lr, int ns_iters,
                      double eps) {
  require(theta.same_shape(grad), "muon_step: gradient shape mismatch");
  require(lr >= 0.0, "muon_step: lr must be >= 0");
  auto step = [&](const Matrix& w, const Matrix& g) {
    const Matrix dir = newton_schulz5(g, ns_iters, eps);
    Matrix out(w.rows, w.cols);
    for (std::size_t i = 0; i < w.size(); ++i) out.data[i] = w.data[i] - lr * dir.data[i];
    return out;
  };
  return FastWeights{step(theta.w1, grad.w1), step(theta.w3, grad.w3),
                     step(theta.w2, grad.w2)};
}

FastWeights ttt_update(const FastWeights& theta0, const Matrix& k, const Matrix& vp,
                       const TttConfig& cfg) {
  require(cfg.steps >= 0, "ttt_update: steps must be >= 0");
  FastWeights theta = theta0;
  for (int s = 0; s < cfg.steps; ++s) {
    const FastWeights grad = inner_grad(theta, k, vp, cfg.loss);
    theta = muon_step(theta, grad, cfg.lr, cfg.ns_iters, cfg.eps);
  }
  return theta;
}

Matrix ttt_apply(const FastWeights& theta, const Matrix& q) { return fast_forward(theta, q); }

TttBlockOut ttt_block(const Matrix& tokens, const GridShape& grid,
                      std::span<const std::uint8_t> special_mask, const TttLayerParams& params,
                      TttMode mode, const FastWeights* state_in, const UpdateFn& update) {
  require(params.attn.norm_mode == NormMode::l2, "ttt_block: the TTT path expects l2 norm");
  const Qkv qkv = project_qkv(tokens, params.attn, params.cfg.eps);

  FastWeights theta;
  if (mode == TttMode::frozen_query) {
    require(state_in != nullptr, "ttt_block: frozen_query requires fast weights");
    theta = *state_in;
  } else {
    require(state_in == nullptr, "ttt_block: update_and_apply starts from theta0");
    Matrix keys = qkv.k;
    Matrix targets = qkv.v;
    switch (params.cfg.conv_target) {
      case ConvTarget::values:
        targets = short_conv2d_values(targets, grid, special_mask, params.conv_kernel);
        break;
      case ConvTarget::keys:
        keys = short_conv2d_values(keys, grid, special_mask, params.conv_kernel);
        break;
      case ConvTarget::keys_and_values:
        keys = short_conv2d_values(keys, grid, special_mask, params.conv_kernel);
        targets = short_conv2d_values(targets, grid, special_mask, params.conv_kernel);
        break;
      case ConvTarget::none:
        break;
    }
    theta = update ? update(params.theta0, keys, targets, params.cfg)
                   : ttt_update(params.theta0, keys, targets, params.cfg);
  }

  const Matrix applied = ttt_apply(theta, qkv.q);
  const Matrix projected = matmul(applied, transpose(params.attn.w_o));
  Matrix out(tokens.rows, tokens.cols);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < out.rows; ++i) {
    const double* a = tokens.row(i);
    const double* b = projected.row(i);
    double* dst = out.row(i);
    for (int j = 0; j < out.cols; ++j) dst[j] = a[j] + b[j];
  }
  return TttBlockOut{std::move(out), std::move(theta)};
}

std::int64_t flops_ttt(std::int64_t n_tokens, std::int64_t d, std::int64_t m, std::int64_t steps,
                       std::int64_t ns_iters) {
  const std::int64_t dm = std::max(d, m);
  const std::int64_t ns_cost = ns_iters * 4 * dm * dm * dm;
  return steps * (12 * n_tokens * d * m + ns_cost) + 6 * n_tokens * d * m + 6 * n_tokens * d * d;
}

}  // namespace vgt3
