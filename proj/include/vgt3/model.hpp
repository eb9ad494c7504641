#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vgt3/attention.hpp"
#include "vgt3/ttt.hpp"

namespace vgt3 {

// Token sequence for a set of frames: frame-major, specials (camera then
// register) first within each frame, then patch tokens row-major.
struct TokenGrid {
  int n_frames = 0;
  int grid_h = 0;
  int grid_w = 0;
  int d = 0;
  int specials_per_frame = 2;
  Matrix tokens;
  std::vector<std::uint8_t> special_mask;

  int patches_per_frame() const { return grid_h * grid_w; }
  int rows_per_frame() const { return patches_per_frame() + specials_per_frame; }
  int total_rows() const { return n_frames * rows_per_frame(); }
  GridShape grid_shape() const { return GridShape{n_frames, grid_h, grid_w}; }
  void validate() const;
};

enum class GlobalMode { softmax_reference, ttt };

struct ModelConfig {
  int layers = 4;  // pairs of (frame self-attention, global layer)
  int d = 128;
  int heads = 4;
  int expansion = 4;
  GlobalMode global_mode = GlobalMode::ttt;
  TttConfig ttt_cfg;
  EntropyScaleConfig entropy_cfg;
  std::uint64_t seed = 42;

  int hidden() const { return expansion * d; }
  void validate() const;
};

// Per-layer fast weights after mapping: the compressed scene.
struct SceneState {
  std::vector<FastWeights> layers;
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  std::uint32_t n_frames = 0;

  bool empty() const { return layers.empty(); }
};

// Stable hash of every config field except the seed (which is stored next
// to it in the scene fingerprint).
std::uint64_t config_hash(const ModelConfig& cfg);

// Deterministic slow weights, fast-weight initializations and conv kernels
// derived from cfg.seed. forward() and query() call this internally; it is
// exposed so tests can inject modified weights.
struct ModelWeights {
  std::vector<AttentionParams> frame_attn;  // one per layer pair
  std::vector<TttLayerParams> global;       // attention params shared by both modes
};

ModelWeights build_model_weights(const ModelConfig& cfg);

// Deterministic pseudo-scene: patch tokens share a per-scene latent plus a
// per-frame offset so frames are correlated; specials are independent.
TokenGrid tokenize_synthetic(int n_frames, int grid_h, int grid_w, int d, std::uint64_t seed);

// Attention restricted to each frame's rows (block-diagonal over frames).
TokenGrid frame_self_attention(const TokenGrid& tokens, const AttentionParams& params);

struct ForwardOut {
  TokenGrid tokens;
  SceneState scene;  // empty in softmax_reference mode
};

// layers repetitions of [frame self-attention -> global layer]. The update
// hook, when set, replaces plain ttt_update inside each global layer.
ForwardOut forward(const ModelConfig& cfg, const TokenGrid& tokens, const UpdateFn& update = {});
ForwardOut forward_with_weights(const ModelConfig& cfg, const ModelWeights& weights,
                                const TokenGrid& tokens, const UpdateFn& update = {});

// Same stack with every global layer in frozen-query mode using the stored
// fast weights. Refuses to run when the scene fingerprint does not match.
TokenGrid query(const ModelConfig& cfg, const SceneState& scene, const TokenGrid& query_tokens);

// Scene file format (little-endian):
//   "VGT3" | u32 version=1 | u32 layer_count | u32 d | u32 m |
//   u64 config_hash | u64 seed | u32 n_frames |
//   per layer: w1, w3, w2 as f32, row-major.
void save_scene(const SceneState& scene, const std::string& path);
SceneState load_scene(const std::string& path);

// d -> 3 pseudo-coordinate readout for end-to-end smoke tests; stands in
// for the prediction heads.
Matrix linear_probe(const Matrix& tokens, std::uint64_t seed);

}  // namespace vgt3
