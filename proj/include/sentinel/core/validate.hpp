#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "sentinel/core/bands.hpp"
#include "sentinel/core/types.hpp"

namespace sentinel {

/// Outcome of checking a value against its invariants. Each failure is the
/// name of the violated invariant.
struct ValidationResult {
  std::vector<std::string> failures;

  bool ok() const noexcept { return failures.empty(); }
  explicit operator bool() const noexcept { return ok(); }

  void require(bool condition, std::string invariant) {
    if (!condition) failures.push_back(std::move(invariant));
  }
};

namespace detail {

inline bool is_token_char(unsigned char c) {
  // RFC 9110 tchar
  if (std::isalnum(c)) return true;
  constexpr std::string_view extra = "!#$%&'*+-.^_`|~";
  return extra.find(static_cast<char>(c)) != std::string_view::npos;
}

inline bool is_token(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return is_token_char(static_cast<unsigned char>(c)); });
}

inline bool in_closed(double v, double lo, double hi) { return std::isfinite(v) && v >= lo && v <= hi; }

}  // namespace detail

inline ValidationResult validate(const RawLogRecord& r) {
  ValidationResult v;
  v.require(!r.raw_line.empty(), "raw_line non-empty");
  return v;
}

/// Checks the per-source monotone `received_at` invariant over a replay session.
inline ValidationResult validate_sequence(std::span<const RawLogRecord> records) {
  ValidationResult v;
  std::map<std::string, Timestamp, std::less<>> last;
  bool monotone = true;
  for (const auto& r : records) {
    auto vr = validate(r);
    v.failures.insert(v.failures.end(), vr.failures.begin(), vr.failures.end());
    auto [it, inserted] = last.try_emplace(r.source_id, r.received_at);
    if (!inserted) {
      if (r.received_at < it->second) monotone = false;
      it->second = r.received_at;
    }
  }
  v.require(monotone, "received_at monotone non-decreasing per source_id");
  return v;
}

inline ValidationResult validate(const HttpRequestRecord& r) {
  ValidationResult v;
  v.require(detail::is_token(r.method), "method is a non-empty token");
  v.require(!r.path.empty() && r.path.front() == '/', "path begins with /");
  v.require(r.body_length >= 0, "body_length ≥ 0");
  v.require(!r.status || (*r.status >= 100 && *r.status <= 599), "status in 100–599");
  return v;
}

inline ValidationResult validate(const PacketRecord& p) {
  ValidationResult v;
  v.require(p.src_port >= 0 && p.src_port <= 65535, "src_port in 0–65535");
  v.require(p.dst_port >= 0 && p.dst_port <= 65535, "dst_port in 0–65535");
  v.require(p.length_bytes >= 0, "length_bytes ≥ 0");
  v.require(p.protocol == Protocol::Tcp || p.tcp_flags.empty(), "tcp_flags empty unless protocol = TCP");
  return v;
}

inline ValidationResult validate(const AnomalyVerdict& a, double threshold = kDefaultDecisionThreshold) {
  ValidationResult v;
  const bool in_range = detail::in_closed(a.confidence, 0.0, 1.0);
  v.require(in_range, "confidence in [0,1]");
  if (in_range) v.require(a.is_anomalous == (a.confidence >= threshold), "is_anomalous ⇔ confidence ≥ threshold");
  v.require((a.attack_type == AttackType::Benign) == !a.is_anomalous, "attack_type = BENIGN ⇔ not anomalous");
  v.require(static_cast<std::size_t>(a.attack_type) < kAttackTypeCount, "attack_type in taxonomy");
  return v;
}

inline double factor_product(const FactorBreakdown& f) noexcept {
  return f.base_score * f.frequency_multiplier * f.cluster_factor * f.ip_factor * f.diversity_factor;
}

inline ValidationResult validate(const FactorBreakdown& f) {
  ValidationResult v;
  v.require(detail::in_closed(f.base_score, 0.0, 100.0), "base_score in [0,100]");
  v.require(std::isfinite(f.frequency_multiplier) && f.frequency_multiplier >= 1.0, "frequency_multiplier ≥ 1");
  v.require(std::isfinite(f.cluster_factor) && f.cluster_factor >= 1.0, "cluster_factor ≥ 1");
  v.require(detail::in_closed(f.ip_factor, 0.5, 2.0), "ip_factor in [0.5,2.0]");
  v.require(std::isfinite(f.diversity_factor) && f.diversity_factor >= 1.0, "diversity_factor ≥ 1");
  return v;
}

/// Factor ranges plus the capped-product identity against `final_score`.
inline ValidationResult validate(const FactorBreakdown& f, double final_score) {
  ValidationResult v = validate(f);
  v.require(std::min(100.0, factor_product(f)) == final_score, "min(100, product of factors) = final_score");
  return v;
}

inline ValidationResult validate(const ThreatAssessment& t, const BandThresholds& bands = {}) {
  ValidationResult v = validate(t.factors, t.final_score);
  v.require(detail::in_closed(t.final_score, 0.0, 100.0), "final_score in [0,100]");
  v.require(t.band == map_band(t.final_score, bands), "band consistent with final_score");
  v.require(t.window_event_count >= 0, "window_event_count ≥ 0");
  return v;
}

}  // namespace sentinel
