#pragma once

#include <cmath>

#include "sentinel/core/types.hpp"

namespace sentinel {

/// Lower edges of the YELLOW and RED bands. Each band is closed below and
/// open above: GREEN [0, yellow), YELLOW [yellow, red), RED [red, 100].
struct BandThresholds {
  double yellow = 30.0;
  double red = 70.0;
};

inline Band map_band(double score, const BandThresholds& t = {}) noexcept {
  if (score >= t.red) return Band::Red;
  if (score >= t.yellow) return Band::Yellow;
  return Band::Green;
}

}  // namespace sentinel
