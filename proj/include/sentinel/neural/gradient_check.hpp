#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "sentinel/neural/model.hpp"
#include "sentinel/neural/network.hpp"

namespace sentinel::neural {

struct GradientCheckEntry {
  std::size_t tensor = 0;
  std::size_t index = 0;
  double analytic = 0;
  double numeric = 0;
  double relative_error = 0;
};

struct GradientCheckReport {
  double max_relative_error = 0;
  std::vector<GradientCheckEntry> entries;
};

/// Floor on the relative-error denominator so parameters with (near) zero
/// gradient compare on absolute difference.
inline constexpr double kGradientCheckFloor = 1e-7;

/// Single-row BCE loss with frozen (running) batch-norm statistics and no
/// dropout.
inline double frozen_loss(const BasicModel<double>& m, std::span<const double> x, double y, Network<double>& net) {
  return bce_with_logits(net.forward(m, x, 1)[0], y);
}

/// Compares backprop gradients with central differences (step `h`) on
/// `samples` parameters drawn uniformly from all trainable tensors. Runs in
/// double precision on a copy of the model.
template <typename T>
GradientCheckReport gradient_check(const BasicModel<T>& model, std::span<const double> x, double y, std::uint64_t seed,
                                   std::size_t samples = 200, double h = 1e-4) {
  BasicModel<double> m = model.template cast<double>();
  Network<double> net;
  auto grads = zero_gradients(m);
  const double z = net.forward(m, x, 1)[0];
  const double dz = sigmoid(z) - y;
  net.backward(m, std::span<const double>(&dz, 1), grads);

  auto tensors = m.trainable();
  std::vector<std::size_t> offsets{0};
  for (auto t : tensors) offsets.push_back(offsets.back() + t.size());

  std::mt19937_64 rng(seed);
  GradientCheckReport report;
  for (std::size_t s = 0; s < samples; ++s) {
    const auto flat = static_cast<std::size_t>(detail::unit_uniform(rng) * static_cast<double>(offsets.back()));
    const auto t = static_cast<std::size_t>(std::upper_bound(offsets.begin(), offsets.end(), flat) - offsets.begin() - 1);
    const std::size_t i = flat - offsets[t];
    double& p = tensors[t][i];
    const double saved = p;
    p = saved + h;
    const double up = frozen_loss(m, x, y, net);
    p = saved - h;
    const double down = frozen_loss(m, x, y, net);
    p = saved;
    const double numeric = (up - down) / (2 * h);
    const double analytic = grads[t][i];
    const double rel =
        std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), kGradientCheckFloor});
    report.entries.push_back({t, i, analytic, numeric, rel});
    report.max_relative_error = std::max(report.max_relative_error, rel);
  }
  return report;
}

}  // namespace sentinel::neural
