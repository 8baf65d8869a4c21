#pragma once

// Model container, little-endian throughout:
//   "SSNN" | u16 version | 32-byte schema hash | u32 dim count | u32 dims...
//   then per affine layer: weights (out×in, row-major), bias, and for hidden
//   layers γ, β, running mean, running variance, all as f32
//   then a trailer: u32 epochs_run | f64 best_val_loss | u64 seed

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

#include "sentinel/core/error.hpp"
#include "sentinel/neural/model.hpp"

namespace sentinel::neural {

inline constexpr std::string_view kModelMagic = "SSNN";
inline constexpr std::uint16_t kModelFormatVersion = 1;
inline constexpr std::uint32_t kMaxLayerWidth = 1u << 20;

namespace detail {

class Writer {
 public:
  template <typename U>
  void put(U v) {
    static_assert(std::is_unsigned_v<U>);
    for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void put_f32(float f) { put(std::bit_cast<std::uint32_t>(f)); }
  void put_f64(double d) { put(std::bit_cast<std::uint64_t>(d)); }
  void put_bytes(std::string_view s) { out.append(s); }

  std::string out;
};

class Reader {
 public:
  explicit Reader(std::string_view s) : s_(s) {}

  template <typename U>
  U get(const char* what) {
    need(sizeof(U), what);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<unsigned char>(s_[pos_ + i])) << (8 * i);
    pos_ += sizeof(U);
    return v;
  }
  float get_f32(const char* what) { return std::bit_cast<float>(get<std::uint32_t>(what)); }
  double get_f64(const char* what) { return std::bit_cast<double>(get<std::uint64_t>(what)); }
  std::string_view get_bytes(std::size_t n, const char* what) {
    need(n, what);
    auto v = s_.substr(pos_, n);
    pos_ += n;
    return v;
  }
  void read_f32(std::vector<float>& dst, const char* what) {
    need(dst.size() * 4, what);
    for (auto& f : dst) f = get_f32(what);
  }
  std::size_t remaining() const { return s_.size() - pos_; }

 private:
  void need(std::size_t n, const char* what) const {
    if (s_.size() - pos_ < n) throw TruncatedFile(std::string("model file truncated in ") + what);
  }

  std::string_view s_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string serialize_model(const ModelBundle& m) {
  detail::Writer w;
  w.put_bytes(kModelMagic);
  w.put<std::uint16_t>(kModelFormatVersion);
  w.put_bytes(std::string_view(reinterpret_cast<const char*>(m.schema_hash.data()), m.schema_hash.size()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(m.layer_dims.size()));
  for (auto d : m.layer_dims) w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
  auto put_all = [&](const std::vector<float>& v) {
    for (float f : v) w.put_f32(f);
  };
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    put_all(m.layers[l].weights);
    put_all(m.layers[l].bias);
    if (l < m.norms.size()) {
      put_all(m.norms[l].gamma);
      put_all(m.norms[l].beta);
      put_all(m.norms[l].running_mean);
      put_all(m.norms[l].running_var);
    }
  }
  w.put<std::uint32_t>(m.meta.epochs_run);
  w.put_f64(m.meta.best_val_loss);
  w.put<std::uint64_t>(m.meta.seed);
  return std::move(w.out);
}

inline ModelBundle deserialize_model(std::string_view bytes) {
  detail::Reader r(bytes);
  if (r.remaining() < kModelMagic.size() || r.get_bytes(kModelMagic.size(), "magic") != kModelMagic)
    throw BadMagic("not a model file");
  const auto version = r.get<std::uint16_t>("version");
  if (version != kModelFormatVersion) throw VersionUnsupported("model format version " + std::to_string(version));
  Sha256 hash{};
  std::memcpy(hash.data(), r.get_bytes(hash.size(), "schema hash").data(), hash.size());
  const auto count = r.get<std::uint32_t>("layer count");
  if (count < 2 || count > 64) throw DimMismatch("implausible layer count " + std::to_string(count));
  std::vector<std::size_t> dims;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto d = r.get<std::uint32_t>("layer dims");
    if (d == 0 || d > kMaxLayerWidth) throw DimMismatch("invalid layer width " + std::to_string(d));
    dims.push_back(d);
  }
  if (dims.back() != 1) throw DimMismatch("output layer must have width 1");

  ModelBundle m = make_model<float>(dims, hash);
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    r.read_f32(m.layers[l].weights, "weights");
    r.read_f32(m.layers[l].bias, "bias");
    if (l < m.norms.size()) {
      r.read_f32(m.norms[l].gamma, "batch-norm scale");
      r.read_f32(m.norms[l].beta, "batch-norm shift");
      r.read_f32(m.norms[l].running_mean, "running mean");
      r.read_f32(m.norms[l].running_var, "running variance");
      for (float v : m.norms[l].running_var)
        if (!(v > 0.0f)) throw Error("running variance must be > 0");
    }
  }
  m.meta.epochs_run = r.get<std::uint32_t>("trailer");
  m.meta.best_val_loss = r.get_f64("trailer");
  m.meta.seed = r.get<std::uint64_t>("trailer");
  if (r.remaining() != 0) throw DimMismatch("trailing bytes after model tensors");
  return m;
}

inline void save_model(const ModelBundle& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path);
  const auto bytes = serialize_model(m);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for " + path);
}

inline ModelBundle load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_model(bytes);
}

}  // namespace sentinel::neural
