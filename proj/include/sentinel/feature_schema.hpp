#pragma once

// Ordered 90-wide model input: 78 flow slots followed by 12 HTTP slots. The
// manifest (and therefore the schema hash a model is bound to) covers the
// feature names, the flow-section input transform and the ruleset content.

#include <array>
#include <cmath>
#include <cstdio>
#include <span>
#include <string>

#include "sentinel/core/digest.hpp"
#include "sentinel/core/wire.hpp"
#include "sentinel/flow_features.hpp"
#include "sentinel/http_features.hpp"

namespace sentinel {

inline constexpr std::size_t kInputDims = flow::kFlowDims + http::kHttpDims;

using ModelInput = std::array<double, kInputDims>;

class FeatureSchema {
 public:
  explicit FeatureSchema(const http::Ruleset& ruleset = http::Ruleset::builtin())
      : ruleset_version_(ruleset.version()), ruleset_hash_(ruleset.content_hash()) {
    hash_ = sha256(manifest().dump());
  }

  /// Ordered feature list with section tags; reserved flow slots are listed
  /// with `"populated": false`.
  Json manifest() const {
    Json features = Json::array();
    for (std::size_t i = 0; i < flow::kFlowDims; ++i) {
      std::string name;
      if (i < flow::kNamedFlowDims) {
        name = flow::kFlowFeatureNames[i];
      } else {
        char buf[32];
        std::snprintf(buf, sizeof buf, "flow_reserved_%02zu", i - flow::kNamedFlowDims);
        name = buf;
      }
      features.push_back({{"name", name}, {"section", "flow"}, {"populated", i < flow::kNamedFlowDims}});
    }
    for (auto name : http::kHttpFeatureNames)
      features.push_back({{"name", std::string(name)}, {"section", "http"}, {"populated", true}});
    return Json{{"format", "sentinel-feature-schema"},
                {"version", 1},
                {"input_dims", kInputDims},
                {"flow_transform", "log1p"},
                {"features", std::move(features)},
                {"ruleset", {{"version", ruleset_version_}, {"sha256", to_hex(ruleset_hash_)}}}};
  }

  const Sha256& hash() const { return hash_; }

 private:
  int ruleset_version_;
  Sha256 ruleset_hash_;
  Sha256 hash_{};
};

/// Concatenates the two sections in schema order. Flow statistics span many
/// orders of magnitude (bytes/s next to flag counts) so they enter the model
/// as log1p of their non-negative value; HTTP features are already in [0,1].
inline ModelInput assemble_input(const flow::FlowSection& flow_section, const http::HttpFeatureVector& http_vec) {
  ModelInput x{};
  for (std::size_t i = 0; i < flow::kFlowDims; ++i) x[i] = std::log1p(std::max(flow_section[i], 0.0));
  auto h = http_vec.to_array();
  for (std::size_t i = 0; i < http::kHttpDims; ++i) x[flow::kFlowDims + i] = h[i];
  return x;
}

}  // namespace sentinel
