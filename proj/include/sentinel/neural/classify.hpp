#pragma once

#include <chrono>
#include <cmath>
#include <deque>
#include <unordered_map>
#include <vector>

#include "sentinel/core/error.hpp"
#include "sentinel/core/types.hpp"
#include "sentinel/feature_schema.hpp"
#include "sentinel/neural/model.hpp"
#include "sentinel/neural/network.hpp"

namespace sentinel::neural {

/// Per-event context the classifier needs beyond the feature vector.
struct RequestContext {
  std::uint64_t event_id = 0;
  Timestamp timestamp{};
  IpAddress source_ip;
  bool repeated_auth_failures = false;
};

/// Category for a scored event. Anomalous events take the first set flag in
/// SQLi, XSS, traversal order, then brute force from context, else a generic
/// network anomaly.
inline AttackType attack_type_for(bool anomalous, const http::HttpFeatureVector& h, const RequestContext& ctx) {
  if (!anomalous) return AttackType::Benign;
  if (h.sqli_flag != 0) return AttackType::SqlInjection;
  if (h.xss_flag != 0) return AttackType::Xss;
  if (h.traversal_flag != 0) return AttackType::PathTraversal;
  if (ctx.repeated_auth_failures) return AttackType::BruteForce;
  return AttackType::NetworkAnomaly;
}

/// Inference wrapper binding a model to the feature schema it was trained on.
/// The bundle is immutable; the scratch buffers make one Detector
/// single-threaded, so give each worker its own.
class Detector {
 public:
  Detector(ModelBundle model, const FeatureSchema& schema, double threshold = kDefaultDecisionThreshold)
      : model_(std::move(model)), threshold_(threshold) {
    if (model_.schema_hash != schema.hash()) throw SchemaMismatch("model was trained against a different feature schema");
    if (model_.input_dims() != kInputDims) throw SchemaMismatch("model input width is not " + std::to_string(kInputDims));
    if (!(threshold_ >= 0.0 && threshold_ <= 1.0)) throw Error("decision threshold must be in [0,1]");
    x_.resize(kInputDims);
  }

  double confidence(const ModelInput& input) {
    for (std::size_t i = 0; i < kInputDims; ++i) {
      if (!std::isfinite(input[i])) throw NonFiniteInput("non-finite feature at index " + std::to_string(i));
      x_[i] = static_cast<float>(input[i]);
    }
    return sigmoid(static_cast<double>(net_.forward(model_, x_, 1)[0]));
  }

  AnomalyVerdict classify(const flow::FlowSection& flow_vec, const http::HttpFeatureVector& http_vec,
                          const RequestContext& ctx) {
    AnomalyVerdict v;
    v.event_id = ctx.event_id;
    v.timestamp = ctx.timestamp;
    v.source_ip = ctx.source_ip;
    v.confidence = confidence(assemble_input(flow_vec, http_vec));
    v.is_anomalous = v.confidence >= threshold_;
    v.attack_type = attack_type_for(v.is_anomalous, http_vec, ctx);
    return v;
  }

  const ModelBundle& model() const { return model_; }
  double threshold() const { return threshold_; }

 private:
  ModelBundle model_;
  double threshold_;
  Network<float> net_;
  std::vector<float> x_;
};

/// Sliding count of 401/403 responses per client; marks a client once it
/// reaches `threshold` failures inside `window`.
class AuthFailureTracker {
 public:
  explicit AuthFailureTracker(std::chrono::microseconds window = std::chrono::seconds{60}, std::size_t threshold = 5)
      : window_(window), threshold_(threshold) {}

  /// Records the request and returns whether its client is in a burst of
  /// authentication failures.
  bool observe(const HttpRequestRecord& req) {
    auto& times = failures_[req.client_ip];
    while (!times.empty() && req.timestamp - times.front() > window_) times.pop_front();
    if (req.status && (*req.status == 401 || *req.status == 403)) times.push_back(req.timestamp);
    const bool burst = times.size() >= threshold_;
    if (times.empty()) failures_.erase(req.client_ip);
    return burst;
  }

 private:
  std::chrono::microseconds window_;
  std::size_t threshold_;
  std::unordered_map<IpAddress, std::deque<Timestamp>> failures_;
};

}  // namespace sentinel::neural
