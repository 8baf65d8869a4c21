#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "sentinel/core/digest.hpp"
#include "sentinel/core/error.hpp"

namespace sentinel::neural {

/// 90 inputs (78 flow + 12 HTTP), four hidden layers, one sigmoid output.
inline constexpr std::array<std::size_t, 6> kLayerDims = {90, 256, 128, 64, 32, 1};

template <typename T>
struct DenseLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<T> weights;  // out × in, row-major
  std::vector<T> bias;     // out

  bool operator==(const DenseLayer&) const = default;
};

template <typename T>
struct BatchNorm {
  std::vector<T> gamma;
  std::vector<T> beta;
  std::vector<T> running_mean;
  std::vector<T> running_var;

  bool operator==(const BatchNorm&) const = default;
};

struct TrainingMeta {
  std::uint32_t epochs_run = 0;
  double best_val_loss = std::numeric_limits<double>::quiet_NaN();
  std::uint64_t seed = 0;

  bool operator==(const TrainingMeta& o) const {
    return epochs_run == o.epochs_run && seed == o.seed &&
           (best_val_loss == o.best_val_loss || (std::isnan(best_val_loss) && std::isnan(o.best_val_loss)));
  }
};

/// Weights, batch-norm state and training metadata of one detector network.
/// Hidden layer i is followed by norms[i]; the last layer has no norm.
template <typename T>
struct BasicModel {
  std::vector<std::size_t> layer_dims;
  std::vector<DenseLayer<T>> layers;
  std::vector<BatchNorm<T>> norms;
  Sha256 schema_hash{};
  TrainingMeta meta;

  std::size_t input_dims() const { return layer_dims.front(); }
  std::size_t hidden_count() const { return norms.size(); }

  /// Trainable tensors in canonical order: W, b, then γ, β for hidden layers.
  std::vector<std::span<T>> trainable() {
    std::vector<std::span<T>> out;
    for (std::size_t l = 0; l < layers.size(); ++l) {
      out.emplace_back(layers[l].weights);
      out.emplace_back(layers[l].bias);
      if (l < norms.size()) {
        out.emplace_back(norms[l].gamma);
        out.emplace_back(norms[l].beta);
      }
    }
    return out;
  }
  std::vector<std::span<const T>> trainable() const {
    std::vector<std::span<const T>> out;
    for (auto s : const_cast<BasicModel*>(this)->trainable()) out.emplace_back(s);
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (auto s : trainable()) n += s.size();
    return n;
  }

  template <typename U>
  BasicModel<U> cast() const {
    auto conv = [](const std::vector<T>& v) { return std::vector<U>(v.begin(), v.end()); };
    BasicModel<U> m;
    m.layer_dims = layer_dims;
    m.schema_hash = schema_hash;
    m.meta = meta;
    for (const auto& l : layers) m.layers.push_back({l.in, l.out, conv(l.weights), conv(l.bias)});
    for (const auto& n : norms)
      m.norms.push_back({conv(n.gamma), conv(n.beta), conv(n.running_mean), conv(n.running_var)});
    return m;
  }

  bool operator==(const BasicModel&) const = default;
};

using ModelBundle = BasicModel<float>;

namespace detail {

// Uniform in [0, 1) from the top 53 bits; independent of the standard
// library's distribution implementations.
inline double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace detail

/// Zero-initialised model with the given shape (biases 0, γ 1, β 0, running
/// mean 0, running variance 1).
template <typename T = float>
BasicModel<T> make_model(std::span<const std::size_t> dims, const Sha256& schema_hash) {
  if (dims.size() < 2) throw DimMismatch("a model needs at least input and output dims");
  BasicModel<T> m;
  m.layer_dims.assign(dims.begin(), dims.end());
  m.schema_hash = schema_hash;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    if (dims[l] == 0 || dims[l + 1] == 0) throw DimMismatch("zero-width layer");
    m.layers.push_back({dims[l], dims[l + 1], std::vector<T>(dims[l] * dims[l + 1], T(0)), std::vector<T>(dims[l + 1], T(0))});
    if (l + 2 < dims.size()) {
      const auto w = dims[l + 1];
      m.norms.push_back({std::vector<T>(w, T(1)), std::vector<T>(w, T(0)), std::vector<T>(w, T(0)), std::vector<T>(w, T(1))});
    }
  }
  return m;
}

/// He-uniform weights, deterministic in `seed`.
template <typename T = float>
BasicModel<T> init_model(const Sha256& schema_hash, std::uint64_t seed,
                         std::span<const std::size_t> dims = kLayerDims) {
  auto m = make_model<T>(dims, schema_hash);
  std::mt19937_64 rng(seed);
  for (auto& layer : m.layers) {
    const double limit = std::sqrt(6.0 / static_cast<double>(layer.in));
    for (auto& w : layer.weights) w = static_cast<T>((2.0 * detail::unit_uniform(rng) - 1.0) * limit);
  }
  m.meta.seed = seed;
  return m;
}

}  // namespace sentinel::neural
