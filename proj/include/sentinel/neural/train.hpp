#pragma once

// Mini-batch training with binary cross-entropy, Adam and early stopping on
// validation loss.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "sentinel/core/error.hpp"
#include "sentinel/neural/model.hpp"
#include "sentinel/neural/network.hpp"

namespace sentinel::neural {

struct TrainingConfig {
  std::size_t batch_size = 32;
  double learning_rate = 0.001;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double dropout_rate = 0.3;
  int early_stop_patience = 10;
  int max_epochs = 200;
  double bn_momentum = 0.9;
  double validation_fraction = 0.2;
  std::uint64_t seed = 0;
};

/// Row-major features with one binary label per row.
struct Dataset {
  std::size_t dims = 0;
  std::vector<float> features;
  std::vector<float> labels;

  std::size_t size() const { return labels.size(); }
  std::span<const float> row(std::size_t i) const { return {features.data() + i * dims, dims}; }

  void add(std::span<const double> x, int label) {
    if (dims == 0) dims = x.size();
    if (x.size() != dims) throw DimMismatch("dataset row width differs");
    features.insert(features.end(), x.begin(), x.end());
    labels.push_back(static_cast<float>(label));
  }
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0;
  double val_loss = 0;

  bool operator==(const EpochRecord&) const = default;
};

struct TrainingResult {
  ModelBundle model;  // best-validation snapshot
  std::vector<EpochRecord> history;  // history[0] is the untrained model
  int best_epoch = 0;
  bool early_stopped = false;
};

/// Stops once `patience` consecutive epochs fail to improve on the best loss.
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience) : patience_(patience) {
    if (patience < 1) throw Error("early-stop patience must be ≥ 1");
  }

  /// Records one epoch's loss; returns true when it is a new best.
  bool observe(double loss) {
    if (loss < best_) {
      best_ = loss;
      stale_ = 0;
      return true;
    }
    ++stale_;
    return false;
  }

  bool should_stop() const { return stale_ >= patience_; }
  double best() const { return best_; }

 private:
  int patience_;
  int stale_ = 0;
  double best_ = std::numeric_limits<double>::infinity();
};

namespace detail {

inline std::size_t bounded(std::mt19937_64& rng, std::size_t n) {
  return static_cast<std::size_t>(unit_uniform(rng) * static_cast<double>(n));
}

inline void shuffle(std::vector<std::size_t>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[bounded(rng, i)]);
}

struct Adam {
  std::vector<std::vector<float>> m, v;
  std::uint64_t t = 0;

  explicit Adam(const ModelBundle& model) {
    for (auto s : model.trainable()) {
      m.emplace_back(s.size(), 0.0f);
      v.emplace_back(s.size(), 0.0f);
    }
  }

  void step(ModelBundle& model, const Gradients<float>& g, const TrainingConfig& cfg) {
    ++t;
    const double c1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(t));
    const auto b1 = static_cast<float>(cfg.adam_beta1), b2 = static_cast<float>(cfg.adam_beta2);
    const auto lr = static_cast<float>(cfg.learning_rate * std::sqrt(c2) / c1);
    const auto eps = static_cast<float>(cfg.adam_epsilon * std::sqrt(c2));
    auto params = model.trainable();
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto p = params[k];
      auto& mk = m[k];
      auto& vk = v[k];
      const auto& gk = g[k];
      for (std::size_t i = 0; i < p.size(); ++i) {
        mk[i] = b1 * mk[i] + (1 - b1) * gk[i];
        vk[i] = b2 * vk[i] + (1 - b2) * gk[i] * gk[i];
        p[i] -= lr * mk[i] / (std::sqrt(vk[i]) + eps);
      }
    }
  }
};

}  // namespace detail

/// Mean BCE over `rows` in inference mode.
inline double evaluate_loss(const ModelBundle& model, const Dataset& data, std::span<const std::size_t> rows) {
  if (rows.empty()) return 0.0;
  Network<float> net;
  std::vector<float> x;
  double total = 0;
  constexpr std::size_t kChunk = 256;
  for (std::size_t start = 0; start < rows.size(); start += kChunk) {
    const std::size_t n = std::min(kChunk, rows.size() - start);
    x.resize(n * data.dims);
    for (std::size_t r = 0; r < n; ++r) std::ranges::copy(data.row(rows[start + r]), x.begin() + r * data.dims);
    auto logits = net.forward(model, x, n);
    for (std::size_t r = 0; r < n; ++r)
      total += bce_with_logits(static_cast<double>(logits[r]), static_cast<double>(data.labels[rows[start + r]]));
  }
  return total / static_cast<double>(rows.size());
}

/// Predicted probabilities for `rows` in inference mode.
inline std::vector<double> predict(const ModelBundle& model, const Dataset& data, std::span<const std::size_t> rows) {
  Network<float> net;
  std::vector<double> out;
  out.reserve(rows.size());
  std::vector<float> x(data.dims);
  for (auto r : rows) {
    std::ranges::copy(data.row(r), x.begin());
    out.push_back(sigmoid(static_cast<double>(net.forward(model, x, 1)[0])));
  }
  return out;
}

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
};

/// Seeded split that keeps each label's share in both parts.
inline Split stratified_split(const Dataset& data, double validation_fraction, std::mt19937_64& rng) {
  Split s;
  for (float cls : {0.0f, 1.0f}) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < data.size(); ++i)
      if (data.labels[i] == cls) idx.push_back(i);
    detail::shuffle(idx, rng);
    const auto n_val = static_cast<std::size_t>(std::llround(validation_fraction * static_cast<double>(idx.size())));
    s.validation.insert(s.validation.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
    s.train.insert(s.train.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
  }
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.validation.begin(), s.validation.end());
  return s;
}

inline TrainingResult train(ModelBundle model, const Dataset& data, const TrainingConfig& cfg) {
  if (!(cfg.dropout_rate >= 0.0 && cfg.dropout_rate < 1.0)) throw Error("dropout_rate must be in [0, 1)");
  if (cfg.batch_size < 2) throw Error("batch_size must be ≥ 2 for batch normalisation");
  if (data.dims != model.input_dims()) throw SchemaMismatch("dataset width does not match the model");
  // ReLU as max(0, x) swallows NaN, so bad rows would otherwise train silently
  for (std::size_t i = 0; i < data.features.size(); ++i)
    if (!std::isfinite(data.features[i]))
      throw NonFiniteInput("non-finite feature in row " + std::to_string(i / data.dims));
  std::size_t positives = 0;
  for (float y : data.labels) {
    if (y != 0.0f && y != 1.0f) throw DegenerateDataset("labels must be 0 or 1");
    positives += y == 1.0f;
  }
  if (positives == 0 || positives == data.size()) throw DegenerateDataset("training data has a single class");

  std::mt19937_64 rng(cfg.seed);
  Split split = stratified_split(data, cfg.validation_fraction, rng);
  if (split.validation.empty() || split.train.size() < 2) throw DegenerateDataset("too few rows to split");

  TrainingResult result;
  EarlyStopping stopper(cfg.early_stop_patience);
  const double val0 = evaluate_loss(model, data, split.validation);
  if (!std::isfinite(val0)) throw NonFiniteLoss("non-finite validation loss before training");
  result.history.push_back({0, evaluate_loss(model, data, split.train), val0});
  stopper.observe(val0);
  result.model = model;

  Network<float> net;
  detail::Adam adam(model);
  Gradients<float> grads = zero_gradients(model);
  std::vector<std::size_t> order = split.train;
  std::vector<float> x, dlogits;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    detail::shuffle(order, rng);
    double loss_sum = 0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t n = std::min(cfg.batch_size, order.size() - start);
      if (n < 2) continue;  // batch statistics are undefined for one row
      x.resize(n * data.dims);
      for (std::size_t r = 0; r < n; ++r) std::ranges::copy(data.row(order[start + r]), x.begin() + r * data.dims);
      auto logits = net.forward(model, x, n, {NormStats::Batch, cfg.dropout_rate}, &rng);
      dlogits.resize(n);
      for (std::size_t r = 0; r < n; ++r) {
        const float y = data.labels[order[start + r]];
        loss_sum += bce_with_logits(static_cast<double>(logits[r]), static_cast<double>(y));
        dlogits[r] = (sigmoid(logits[r]) - y) / static_cast<float>(n);
      }
      seen += n;
      for (auto& g : grads) std::fill(g.begin(), g.end(), 0.0f);
      net.backward(model, dlogits, grads);
      net.update_running_stats(model, cfg.bn_momentum);
      adam.step(model, grads, cfg);
    }
    const double train_loss = seen ? loss_sum / static_cast<double>(seen) : 0.0;
    const double val_loss = evaluate_loss(model, data, split.validation);
    if (!std::isfinite(train_loss) || !std::isfinite(val_loss))
      throw NonFiniteLoss("non-finite loss at epoch " + std::to_string(epoch));
    result.history.push_back({epoch, train_loss, val_loss});
    if (stopper.observe(val_loss)) {
      result.model = model;
      result.best_epoch = epoch;
    }
    if (stopper.should_stop()) {
      result.early_stopped = true;
      break;
    }
  }
  result.model.meta.epochs_run = static_cast<std::uint32_t>(result.history.size() - 1);
  result.model.meta.best_val_loss = stopper.best();
  result.model.meta.seed = cfg.seed;
  return result;
}

struct BinaryMetrics {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

  double precision() const { return tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0; }
  double recall() const { return tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0; }
  double f1() const {
    const double p = precision(), r = recall();
    return p + r > 0 ? 2 * p * r / (p + r) : 0.0;
  }
};

inline BinaryMetrics evaluate_binary(const ModelBundle& model, const Dataset& data, std::span<const std::size_t> rows,
                                     double threshold = 0.5) {
  BinaryMetrics m;
  auto probs = predict(model, data, rows);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const bool pred = probs[i] >= threshold;
    const bool truth = data.labels[rows[i]] == 1.0f;
    if (pred && truth) ++m.tp;
    else if (pred) ++m.fp;
    else if (truth) ++m.fn;
    else ++m.tn;
  }
  return m;
}

}  // namespace sentinel::neural
