#include <cstring>
#include <fstream>

#include "vgt3/model.hpp"

namespace vgt3 {

namespace {

constexpr char kMagic[4] = {'V', 'G', 'T', '3'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f32(std::string& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  put_u32(out, bits);
}

struct Reader {
  const std::string& buf;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > buf.size()) throw IoError("scene file truncated");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    }
    pos += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    }
    pos += 8;
    return v;
  }
  float f32() {
    const std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
  }
};

void put_matrix(std::string& out, const Matrix& m) {
  for (const double v : m.data) put_f32(out, static_cast<float>(v));
}

Matrix read_matrix(Reader& r, int rows, int cols) {
  Matrix m(rows, cols);
  for (auto& v : m.data) v = static_cast<double>(r.f32());
  return m;
}

}  // namespace

void save_scene(const SceneState& scene, const std::string& path) {
  require(!scene.layers.empty(), "save_scene: scene has no fast weights");
  const int d = scene.layers.front().dim();
  const int m = scene.layers.front().hidden();
  for (const FastWeights& layer : scene.layers) {
    require(layer.dim() == d && layer.hidden() == m, "save_scene: layer shapes differ");
  }

  std::string out;
  out.append(kMagic, sizeof kMagic);
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(scene.layers.size()));
  put_u32(out, static_cast<std::uint32_t>(d));
  put_u32(out, static_cast<std::uint32_t>(m));
  put_u64(out, scene.config_hash);
  put_u64(out, scene.seed);
  put_u32(out, scene.n_frames);
  for (const FastWeights& layer : scene.layers) {
    put_matrix(out, layer.w1);
    put_matrix(out, layer.w3);
    put_matrix(out, layer.w2);
  }

  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw IoError("save_scene: cannot open " + path);
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) throw IoError("save_scene: write failed for " + path);
}

SceneState load_scene(const std::string& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw IoError("load_scene: cannot open " + path);
  std::string buf((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());

  Reader r{buf};
  r.need(4);
  if (std::memcmp(buf.data(), kMagic, sizeof kMagic) != 0) {
    throw IoError("load_scene: bad magic, not a scene file");
  }
  r.pos = 4;
  const std::uint32_t version = r.u32();
  if (version != kVersion) {
    throw IoError("load_scene: unknown version " + std::to_string(version));
  }
  const std::uint32_t layer_count = r.u32();
  const std::uint32_t d = r.u32();
  const std::uint32_t m = r.u32();

  SceneState scene;
  scene.config_hash = r.u64();
  scene.seed = r.u64();
  scene.n_frames = r.u32();
  scene.layers.reserve(layer_count);
  for (std::uint32_t i = 0; i < layer_count; ++i) {
    FastWeights layer;
    layer.w1 = read_matrix(r, static_cast<int>(d), static_cast<int>(m));
    layer.w3 = read_matrix(r, static_cast<int>(d), static_cast<int>(m));
    layer.w2 = read_matrix(r, static_cast<int>(m), static_cast<int>(d));
    scene.layers.push_back(std::move(layer));
  }
  if (r.pos != buf.size()) throw IoError("load_scene: trailing bytes after payload");
  return scene;
}

}  // namespace vgt3
