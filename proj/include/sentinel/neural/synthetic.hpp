#pragma once

// Seeded linearly separable dataset: standard-normal points labelled by the
// side of a random hyperplane through the origin, each pushed `margin` away
// from it along the normal.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "sentinel/neural/train.hpp"

namespace sentinel::neural {

inline Dataset make_separable_dataset(std::size_t rows, std::size_t dims, std::uint64_t seed, double margin = 0.5) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> w(dims);
  double norm = 0;
  for (auto& v : w) {
    v = n(rng);
    norm += v * v;
  }
  norm = std::sqrt(norm);
  for (auto& v : w) v /= norm;

  Dataset data;
  std::vector<double> x(dims);
  for (std::size_t r = 0; r < rows; ++r) {
    double dot = 0;
    for (std::size_t i = 0; i < dims; ++i) {
      x[i] = n(rng);
      dot += x[i] * w[i];
    }
    const double side = dot >= 0 ? 1.0 : -1.0;
    for (std::size_t i = 0; i < dims; ++i) x[i] += side * margin * w[i];
    data.add(x, side > 0 ? 1 : 0);
  }
  return data;
}

}  // namespace sentinel::neural
