#pragma once

// Batched forward/backward passes for the detector network:
//   hidden layer: affine -> batch-norm -> ReLU -> (inverted) dropout
//   output:       affine -> sigmoid (applied by the caller on the logit)

#include <algorithm>
#include <cmath>
#include <random>
#include <span>
#include <vector>

#include "sentinel/core/error.hpp"
#include "sentinel/neural/model.hpp"

namespace sentinel::neural {

inline constexpr double kBatchNormEps = 1e-5;

/// Where batch-norm takes its statistics from: the current batch (training)
/// or the stored running estimates (inference, and frozen-statistics checks).
enum class NormStats { Batch, Running };

struct PassOptions {
  NormStats norm_stats = NormStats::Running;
  double dropout_rate = 0.0;
};

template <typename T>
using Gradients = std::vector<std::vector<T>>;

template <typename T>
Gradients<T> zero_gradients(const BasicModel<T>& m) {
  Gradients<T> g;
  for (auto s : m.trainable()) g.emplace_back(s.size(), T(0));
  return g;
}

template <typename T>
T sigmoid(T z) {
  if (z >= 0) return T(1) / (T(1) + std::exp(-z));
  const T e = std::exp(z);
  return e / (T(1) + e);
}

/// Binary cross-entropy on a logit, stable for large |z|.
template <typename T>
T bce_with_logits(T z, T y) {
  return std::max(z, T(0)) - z * y + std::log1p(std::exp(-std::abs(z)));
}

namespace detail {

template <typename T>
inline T dot(const T* __restrict a, const T* __restrict b, std::size_t n) {
  T acc[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    for (std::size_t k = 0; k < 8; ++k) acc[k] += a[i + k] * b[i + k];
  T s = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

template <typename T>
inline void axpy(T alpha, const T* __restrict x, T* __restrict y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

}  // namespace detail

/// Scratch space for passes over one model shape. Not thread-safe; the
/// model itself is only read.
template <typename T>
class Network {
 public:
  /// Forward over `batch` rows of `x` (batch × input_dims, row-major).
  /// Returns one logit per row.
  std::span<const T> forward(const BasicModel<T>& m, std::span<const T> x, std::size_t batch,
                             const PassOptions& opt = {}, std::mt19937_64* rng = nullptr) {
    const std::size_t L = m.layers.size();
    if (x.size() != batch * m.input_dims()) throw SchemaMismatch("input width does not match the model");
    if (opt.norm_stats == NormStats::Batch && batch < 2) throw Error("batch statistics need at least two rows");
    if (opt.dropout_rate > 0 && rng == nullptr) throw Error("dropout requires a random generator");
    resize(m, batch);
    stats_ = opt.norm_stats;
    dropout_ = opt.dropout_rate;
    std::copy(x.begin(), x.end(), acts_[0].begin());

    for (std::size_t l = 0; l < L; ++l) {
      const auto& layer = m.layers[l];
      const T* in = acts_[l].data();
      T* pre = pre_[l].data();
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t o = 0; o < layer.out; ++o)
          pre[b * layer.out + o] =
              layer.bias[o] + detail::dot(layer.weights.data() + o * layer.in, in + b * layer.in, layer.in);
      if (l + 1 == L) break;
      normalize_activate(m.norms[l], l, batch, layer.out, rng);
    }
    return {pre_[L - 1].data(), batch};
  }

  /// Accumulates parameter gradients of the loss into `grads` given dL/dlogit
  /// per row, for the pass most recently run by forward().
  void backward(const BasicModel<T>& m, std::span<const T> dlogits, Gradients<T>& grads) {
    const std::size_t L = m.layers.size();
    const std::size_t B = batch_;
    std::vector<T>& d = grad_a_;
    d.assign(dlogits.begin(), dlogits.end());

    std::size_t g = grads.size();  // walk gradient tensors from the back
    for (std::size_t li = L; li-- > 0;) {
      const auto& layer = m.layers[li];
      const std::size_t out = layer.out, in = layer.in;
      const bool hidden = li + 1 < L;
      if (hidden) {
        auto& dgamma = grads[g - 2];
        auto& dbeta = grads[g - 1];
        g -= 2;
        backward_norm(m.norms[li], li, B, out, d, dgamma, dbeta);
      }
      auto& dw = grads[g - 2];
      auto& db = grads[g - 1];
      g -= 2;
      const T* a = acts_[li].data();
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t o = 0; o < out; ++o) {
          const T dz = d[b * out + o];
          if (dz == T(0)) continue;
          db[o] += dz;
          detail::axpy(dz, a + b * in, dw.data() + o * in, in);
        }
      if (li == 0) break;
      grad_prev_.assign(B * in, T(0));
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t o = 0; o < out; ++o) {
          const T dz = d[b * out + o];
          if (dz == T(0)) continue;
          detail::axpy(dz, layer.weights.data() + o * in, grad_prev_.data() + b * in, in);
        }
      d.swap(grad_prev_);
    }
  }

  /// Folds the last forward's batch statistics into the running estimates:
  /// running = momentum · running + (1 − momentum) · batch.
  void update_running_stats(BasicModel<T>& m, double momentum) const {
    if (stats_ != NormStats::Batch) return;
    for (std::size_t l = 0; l < m.norms.size(); ++l) {
      auto& n = m.norms[l];
      for (std::size_t o = 0; o < n.running_mean.size(); ++o) {
        n.running_mean[o] = static_cast<T>(momentum * n.running_mean[o] + (1 - momentum) * batch_mean_[l][o]);
        n.running_var[o] = static_cast<T>(momentum * n.running_var[o] + (1 - momentum) * batch_var_[l][o]);
      }
    }
  }

 private:
  void resize(const BasicModel<T>& m, std::size_t batch) {
    const std::size_t L = m.layers.size();
    batch_ = batch;
    acts_.resize(L);
    pre_.resize(L);
    xhat_.resize(L - 1);
    norm_out_.resize(L - 1);
    mask_.resize(L - 1);
    inv_std_.resize(L - 1);
    batch_mean_.resize(L - 1);
    batch_var_.resize(L - 1);
    for (std::size_t l = 0; l < L; ++l) {
      acts_[l].resize(batch * m.layers[l].in);
      pre_[l].resize(batch * m.layers[l].out);
    }
    for (std::size_t l = 0; l + 1 < L; ++l) {
      const auto w = m.layers[l].out;
      xhat_[l].resize(batch * w);
      norm_out_[l].resize(batch * w);
      inv_std_[l].resize(w);
      batch_mean_[l].resize(w);
      batch_var_[l].resize(w);
    }
  }

  void normalize_activate(const BatchNorm<T>& n, std::size_t l, std::size_t B, std::size_t W, std::mt19937_64* rng) {
    const T* pre = pre_[l].data();
    auto& mean = batch_mean_[l];
    auto& var = batch_var_[l];
    if (stats_ == NormStats::Batch) {
      for (std::size_t o = 0; o < W; ++o) {
        T s = 0;
        for (std::size_t b = 0; b < B; ++b) s += pre[b * W + o];
        mean[o] = s / static_cast<T>(B);
        T v = 0;
        for (std::size_t b = 0; b < B; ++b) {
          const T c = pre[b * W + o] - mean[o];
          v += c * c;
        }
        var[o] = v / static_cast<T>(B);
      }
    } else {
      std::copy(n.running_mean.begin(), n.running_mean.end(), mean.begin());
      std::copy(n.running_var.begin(), n.running_var.end(), var.begin());
    }
    for (std::size_t o = 0; o < W; ++o) inv_std_[l][o] = T(1) / std::sqrt(var[o] + static_cast<T>(kBatchNormEps));

    T* xhat = xhat_[l].data();
    T* y = norm_out_[l].data();
    T* next = acts_[l + 1].data();
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t o = 0; o < W; ++o) {
        const std::size_t k = b * W + o;
        xhat[k] = (pre[k] - mean[o]) * inv_std_[l][o];
        y[k] = n.gamma[o] * xhat[k] + n.beta[o];
        next[k] = y[k] > T(0) ? y[k] : T(0);
      }

    auto& mask = mask_[l];
    if (dropout_ > 0) {
      mask.resize(B * W);
      const T keep_scale = static_cast<T>(1.0 / (1.0 - dropout_));
      for (std::size_t k = 0; k < B * W; ++k) {
        mask[k] = detail::unit_uniform(*rng) < dropout_ ? T(0) : keep_scale;
        next[k] *= mask[k];
      }
    } else {
      mask.clear();
    }
  }

  void backward_norm(const BatchNorm<T>& n, std::size_t l, std::size_t B, std::size_t W, std::vector<T>& d,
                     std::vector<T>& dgamma, std::vector<T>& dbeta) {
    const auto& mask = mask_[l];
    const T* y = norm_out_[l].data();
    const T* xhat = xhat_[l].data();
    // d: dL/d(layer output) -> dL/d(y) -> dL/d(xhat), stored back into d
    for (std::size_t k = 0; k < B * W; ++k) {
      T v = d[k];
      if (!mask.empty()) v *= mask[k];
      if (!(y[k] > T(0))) v = T(0);
      d[k] = v;
    }
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t o = 0; o < W; ++o) {
        const std::size_t k = b * W + o;
        dgamma[o] += d[k] * xhat[k];
        dbeta[o] += d[k];
        d[k] *= n.gamma[o];
      }
    const auto& inv_std = inv_std_[l];
    if (stats_ == NormStats::Running) {
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t o = 0; o < W; ++o) d[b * W + o] *= inv_std[o];
      return;
    }
    // Batch statistics: dz = inv_std / B · (B·dxhat − Σ dxhat − xhat · Σ dxhat·xhat)
    sum_d_.assign(W, T(0));
    sum_dx_.assign(W, T(0));
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t o = 0; o < W; ++o) {
        sum_d_[o] += d[b * W + o];
        sum_dx_[o] += d[b * W + o] * xhat[b * W + o];
      }
    const T nb = static_cast<T>(B);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t o = 0; o < W; ++o) {
        const std::size_t k = b * W + o;
        d[k] = inv_std[o] / nb * (nb * d[k] - sum_d_[o] - xhat[k] * sum_dx_[o]);
      }
  }

  std::size_t batch_ = 0;
  NormStats stats_ = NormStats::Running;
  double dropout_ = 0.0;
  std::vector<std::vector<T>> acts_, pre_, xhat_, norm_out_, mask_, inv_std_, batch_mean_, batch_var_;
  std::vector<T> grad_a_, grad_prev_, sum_d_, sum_dx_;
};

enum class Mode { Train, Infer };

/// Detector confidence for one input. Infer mode uses running batch-norm
/// statistics and no dropout, so it is a pure function of (model, x). Train
/// mode normalises with the statistics of this single row and applies
/// dropout drawn from `rng`.
template <typename T>
double forward(const BasicModel<T>& m, std::span<const double> x, Mode mode = Mode::Infer,
               std::mt19937_64* rng = nullptr, double dropout_rate = 0.0) {
  if (x.size() != m.input_dims()) throw SchemaMismatch("input width does not match the model");
  std::vector<T> xs(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i])) throw NonFiniteInput("non-finite feature at index " + std::to_string(i));
    xs[i] = static_cast<T>(x[i]);
  }
  Network<T> net;
  if (mode == Mode::Infer) return sigmoid(static_cast<double>(net.forward(m, xs, 1)[0]));
  // A single row has zero batch variance; duplicate it so the statistics are
  // defined (the row normalises to xhat = 0).
  xs.insert(xs.end(), xs.begin(), xs.end());
  return sigmoid(static_cast<double>(net.forward(m, xs, 2, {NormStats::Batch, dropout_rate}, rng)[0]));
}

}  // namespace sentinel::neural
