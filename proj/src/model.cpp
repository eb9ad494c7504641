#include "vgt3/model.hpp"

#include <cmath>

#include "vgt3/kernels.hpp"

namespace vgt3 {

namespace {

Matrix scaled_normal(Rng& rng, int rows, int cols, double scale) {
  Matrix m = rng_normal(rng, rows, cols);
  for (auto& v : m.data) v *= scale;
  return m;
}

// FNV-1a over a little-endian byte image of the fields.
struct Fnv {
  std::uint64_t h = 1469598103934665603ull;
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ull;
    }
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      const unsigned char b = static_cast<unsigned char>(v >> (8 * i));
      bytes(&b, 1);
    }
  }
  void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
  void f64(double v) {
    std::uint64_t bits;
    static_assert(sizeof bits == sizeof v);
    __builtin_memcpy(&bits, &v, sizeof bits);
    u64(bits);
  }
};

Matrix rows_slice(const Matrix& m, int begin, int count) {
  Matrix out(count, m.cols);
  for (int i = 0; i < count; ++i) {
    std::copy_n(m.row(begin + i), m.cols, out.row(i));
  }
  return out;
}

void rows_write(Matrix& dst, int begin, const Matrix& src) {
  for (int i = 0; i < src.rows; ++i) {
    std::copy_n(src.row(i), src.cols, dst.row(begin + i));
  }
}

}  // namespace

void TokenGrid::validate() const {
  require(n_frames >= 1 && grid_h >= 1 && grid_w >= 1 && d >= 1,
          "TokenGrid: empty dimensions");
  require(specials_per_frame >= 0, "TokenGrid: negative special count");
  require(tokens.rows == total_rows() && tokens.cols == d, "TokenGrid: token shape mismatch");
  require(special_mask.size() == static_cast<std::size_t>(total_rows()),
          "TokenGrid: mask length mismatch");
  for (int f = 0; f < n_frames; ++f) {
    const int base = f * rows_per_frame();
    for (int r = 0; r < rows_per_frame(); ++r) {
      const bool want_special = r < specials_per_frame;
      require(static_cast<bool>(special_mask[base + r]) == want_special,
              "TokenGrid: mask does not match specials-first layout");
    }
  }
}

void ModelConfig::validate() const {
  require(layers >= 1, "ModelConfig: need at least one layer pair");
  require(d >= 1 && heads >= 1 && d % heads == 0, "ModelConfig: d must divide by heads");
  require(expansion >= 1, "ModelConfig: expansion must be >= 1");
  require(ttt_cfg.steps >= 0 && ttt_cfg.lr >= 0.0 && ttt_cfg.ns_iters >= 1,
          "ModelConfig: invalid TTT hyperparameters");
  require(ttt_cfg.conv_kernel_size >= 1 && ttt_cfg.conv_kernel_size % 2 == 1,
          "ModelConfig: conv kernel size must be odd");
}

std::uint64_t config_hash(const ModelConfig& cfg) {
  Fnv fnv;
  fnv.i64(cfg.layers);
  fnv.i64(cfg.d);
  fnv.i64(cfg.heads);
  fnv.i64(cfg.expansion);
  fnv.i64(static_cast<std::int64_t>(cfg.global_mode));
  fnv.i64(cfg.ttt_cfg.steps);
  fnv.f64(cfg.ttt_cfg.lr);
  fnv.i64(cfg.ttt_cfg.ns_iters);
  fnv.f64(cfg.ttt_cfg.eps);
  fnv.i64(cfg.ttt_cfg.conv_kernel_size);
  fnv.i64(static_cast<std::int64_t>(cfg.ttt_cfg.conv_target));
  fnv.i64(static_cast<std::int64_t>(cfg.ttt_cfg.loss));
  fnv.i64(cfg.ttt_cfg.scale_lr_by_minibatches ? 1 : 0);
  fnv.i64(cfg.entropy_cfg.n_train_tokens);
  fnv.i64(cfg.entropy_cfg.enabled ? 1 : 0);
  return fnv.h;
}

ModelWeights build_model_weights(const ModelConfig& cfg) {
  cfg.validate();
  const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.d));
  Rng rng(cfg.seed);
  ModelWeights out;
  out.frame_attn.reserve(cfg.layers);
  out.global.reserve(cfg.layers);
  for (int layer = 0; layer < cfg.layers; ++layer) {
    AttentionParams frame;
    frame.w_q = scaled_normal(rng, cfg.d, cfg.d, scale);
    frame.w_k = scaled_normal(rng, cfg.d, cfg.d, scale);
    frame.w_v = scaled_normal(rng, cfg.d, cfg.d, scale);
    frame.w_o = scaled_normal(rng, cfg.d, cfg.d, scale);
    frame.heads = cfg.heads;
    frame.norm_mode = NormMode::l2;
    out.frame_attn.push_back(std::move(frame));

    TttLayerParams global;
    global.attn.w_q = scaled_normal(rng, cfg.d, cfg.d, scale);
    global.attn.w_k = scaled_normal(rng, cfg.d, cfg.d, scale);
    global.attn.w_v = scaled_normal(rng, cfg.d, cfg.d, scale);
    global.attn.w_o = scaled_normal(rng, cfg.d, cfg.d, scale);
    global.attn.heads = cfg.heads;
    global.attn.norm_mode = NormMode::l2;
    global.theta0.w1 = scaled_normal(rng, cfg.d, cfg.hidden(), scale);
    global.theta0.w3 = scaled_normal(rng, cfg.d, cfg.hidden(), scale);
    global.theta0.w2 = scaled_normal(rng, cfg.hidden(), cfg.d, scale);
    // Depthwise identity-plus-noise: spatial mixing without channel mixing.
    global.conv_kernel = ConvKernel::identity(cfg.ttt_cfg.conv_kernel_size, cfg.d);
    {
      const Matrix noise = scaled_normal(rng, 1, static_cast<int>(global.conv_kernel.data.size()),
                                         0.1);
      for (std::size_t i = 0; i < global.conv_kernel.data.size(); ++i) {
        global.conv_kernel.data[i] += noise.data[i];
      }
    }
    global.cfg = cfg.ttt_cfg;
    out.global.push_back(std::move(global));
  }
  return out;
}

TokenGrid tokenize_synthetic(int n_frames, int grid_h, int grid_w, int d, std::uint64_t seed) {
  require(n_frames >= 1 && grid_h >= 1 && grid_w >= 1 && d >= 1,
          "tokenize_synthetic: counts must be >= 1");
  TokenGrid grid;
  grid.n_frames = n_frames;
  grid.grid_h = grid_h;
  grid.grid_w = grid_w;
  grid.d = d;
  grid.specials_per_frame = 2;
  grid.tokens = Matrix(grid.total_rows(), d);
  grid.special_mask.assign(grid.total_rows(), 0);

  Rng rng(seed);
  const Matrix latent = rng_normal(rng, 1, d);
  const int rpf = grid.rows_per_frame();
  for (int f = 0; f < n_frames; ++f) {
    const int base = f * rpf;
    const Matrix offset = scaled_normal(rng, 1, d, 0.5);
    for (int s = 0; s < grid.specials_per_frame; ++s) {
      const Matrix tok = rng_normal(rng, 1, d);
      std::copy_n(tok.row(0), d, grid.tokens.row(base + s));
      grid.special_mask[base + s] = 1;
    }
    for (int p = 0; p < grid.patches_per_frame(); ++p) {
      const Matrix noise = scaled_normal(rng, 1, d, 0.35);
      double* dst = grid.tokens.row(base + grid.specials_per_frame + p);
      for (int j = 0; j < d; ++j) {
        dst[j] = latent.data[j] + offset.data[j] + noise.data[j];
      }
    }
  }
  grid.validate();
  return grid;
}

TokenGrid frame_self_attention(const TokenGrid& tokens, const AttentionParams& params) {
  tokens.validate();
  require(tokens.d == params.dim(), "frame_self_attention: width mismatch");
  // Frame-local attention never sees long sequences, so length
  // extrapolation stays off.
  const EntropyScaleConfig no_scaling{2, false};
  TokenGrid out = tokens;
  const int rpf = tokens.rows_per_frame();
  for (int f = 0; f < tokens.n_frames; ++f) {
    const Matrix frame = rows_slice(tokens.tokens, f * rpf, rpf);
    const Matrix attended = attention_block_reference(frame, params, no_scaling);
    rows_write(out.tokens, f * rpf, attended);
  }
  return out;
}

ForwardOut forward_with_weights(const ModelConfig& cfg, const ModelWeights& weights,
                                const TokenGrid& tokens, const UpdateFn& update) {
  cfg.validate();
  tokens.validate();
  require(tokens.d == cfg.d, "forward: token width != config d");
  require(static_cast<int>(weights.frame_attn.size()) == cfg.layers &&
              static_cast<int>(weights.global.size()) == cfg.layers,
          "forward: weight count != layers");

  ForwardOut out;
  out.tokens = tokens;
  out.scene.config_hash = config_hash(cfg);
  out.scene.seed = cfg.seed;
  out.scene.n_frames = static_cast<std::uint32_t>(tokens.n_frames);

  for (int layer = 0; layer < cfg.layers; ++layer) {
    out.tokens = frame_self_attention(out.tokens, weights.frame_attn[layer]);
    if (cfg.global_mode == GlobalMode::softmax_reference) {
      out.tokens.tokens =
          attention_block_reference(out.tokens.tokens, weights.global[layer].attn,
                                    cfg.entropy_cfg);
    } else {
      TttBlockOut block = ttt_block(out.tokens.tokens, out.tokens.grid_shape(),
                                    out.tokens.special_mask, weights.global[layer],
                                    TttMode::update_and_apply, nullptr, update);
      out.tokens.tokens = std::move(block.tokens);
      out.scene.layers.push_back(std::move(block.theta));
    }
  }
  return out;
}

ForwardOut forward(const ModelConfig& cfg, const TokenGrid& tokens, const UpdateFn& update) {
  return forward_with_weights(cfg, build_model_weights(cfg), tokens, update);
}

TokenGrid query(const ModelConfig& cfg, const SceneState& scene, const TokenGrid& query_tokens) {
  cfg.validate();
  query_tokens.validate();
  require(query_tokens.d == cfg.d, "query: token width != config d");
  if (scene.config_hash != config_hash(cfg) || scene.seed != cfg.seed) {
    throw RunError("query: scene fingerprint does not match the model config");
  }
  require(static_cast<int>(scene.layers.size()) == cfg.layers,
          "query: scene layer count != config layers");

  const ModelWeights weights = build_model_weights(cfg);
  TokenGrid tokens = query_tokens;
  for (int layer = 0; layer < cfg.layers; ++layer) {
    tokens = frame_self_attention(tokens, weights.frame_attn[layer]);
    TttBlockOut block =
        ttt_block(tokens.tokens, tokens.grid_shape(), tokens.special_mask,
                  weights.global[layer], TttMode::frozen_query, &scene.layers[layer]);
    tokens.tokens = std::move(block.tokens);
  }
  return tokens;
}

Matrix linear_probe(const Matrix& tokens, std::uint64_t seed) {
  Rng rng(seed);
  const Matrix w = scaled_normal(rng, tokens.cols, 3, 1.0 / std::sqrt(tokens.cols));
  return matmul(tokens, w);
}

}  // namespace vgt3
