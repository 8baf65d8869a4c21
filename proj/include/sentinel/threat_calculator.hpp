#pragma once

// Traffic Light threat scoring:
//   final = min(100, base × frequency × cluster × ip × diversity)
// with sliding-window context kept per calculator instance.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <deque>
#include <optional>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "sentinel/core/bands.hpp"
#include "sentinel/core/error.hpp"
#include "sentinel/core/types.hpp"
#include "sentinel/core/validate.hpp"
#include "sentinel/core/wire.hpp"

namespace sentinel::threat {

struct CalculatorConfig {
  std::chrono::microseconds window_span = std::chrono::seconds{60};
  double freq_baseline = 10.0;
  double freq_cap = 3.0;
  double cluster_step = 0.1;
  double cluster_cap = 2.0;
  double ip_step = 0.1;
  double ip_floor = 0.5;
  double ip_cap = 2.0;
  double diversity_step = 0.15;
  double diversity_cap = 1.6;
  std::chrono::microseconds offense_decay = std::chrono::hours{1};
  BandThresholds bands;
  std::unordered_set<IpAddress> allow_list;
};

/// Reads the calculator keys; absent keys keep their defaults.
inline CalculatorConfig calculator_config_from_json(const Json& j) {
  CalculatorConfig c;
  auto seconds = [](double s) { return std::chrono::microseconds{static_cast<std::int64_t>(std::llround(s * 1e6))}; };
  if (j.contains("window_span_s")) c.window_span = seconds(j.at("window_span_s").get<double>());
  c.freq_baseline = j.value("freq_baseline", c.freq_baseline);
  c.cluster_step = j.value("cluster_step", c.cluster_step);
  c.ip_step = j.value("ip_step", c.ip_step);
  c.diversity_step = j.value("diversity_step", c.diversity_step);
  if (j.contains("offense_decay_s")) c.offense_decay = seconds(j.at("offense_decay_s").get<double>());
  if (auto b = j.find("bands"); b != j.end()) {
    c.bands.yellow = b->value("yellow", c.bands.yellow);
    c.bands.red = b->value("red", c.bands.red);
  }
  if (auto a = j.find("allow_list"); a != j.end())
    for (const auto& ip : *a) c.allow_list.insert(ip.get<IpAddress>());
  if (c.window_span.count() <= 0 || !(c.freq_baseline > 0) || c.cluster_step < 0 || c.ip_step < 0 ||
      c.diversity_step < 0 || c.offense_decay.count() <= 0 || !(c.bands.yellow > 0) || !(c.bands.red > c.bands.yellow) ||
      c.bands.red > 100)
    throw BadConfig("calculator configuration out of range");
  return c;
}

// ---- the five factors --------------------------------------------------

inline double compute_base_score(double confidence) {
  if (!(confidence >= 0.0 && confidence <= 1.0)) throw OutOfRange("confidence must be in [0,1]");
  return 100.0 * confidence;
}

/// min(cap, 1 + log2(1 + n / baseline)); `n` counts the other anomalous
/// verdicts currently in the window.
inline double compute_frequency_multiplier(std::size_t n_window, const CalculatorConfig& cfg = {}) {
  return std::min(cfg.freq_cap, 1.0 + std::log2(1.0 + static_cast<double>(n_window) / cfg.freq_baseline));
}

/// min(cap, 1 + step · (largest same-subnet cluster − 1)).
inline double compute_cluster_factor(std::size_t max_subnet_cluster, const CalculatorConfig& cfg = {}) {
  const double extra = max_subnet_cluster > 1 ? static_cast<double>(max_subnet_cluster - 1) : 0.0;
  return std::min(cfg.cluster_cap, 1.0 + cfg.cluster_step * extra);
}

struct IpReputationEntry {
  IpAddress ip;
  double factor = 1.0;
  std::uint64_t offense_count = 0;
  Timestamp last_seen{};
};

/// Absent history is neutral (1.0); allow-listed sources pin the floor.
inline double compute_ip_factor(const IpReputationEntry* entry, bool allow_listed = false,
                                const CalculatorConfig& cfg = {}) {
  if (allow_listed) return cfg.ip_floor;
  if (entry == nullptr) return 1.0;
  return std::clamp(1.0 + cfg.ip_step * static_cast<double>(entry->offense_count), cfg.ip_floor, cfg.ip_cap);
}

inline double compute_diversity_factor(std::size_t distinct_types, const CalculatorConfig& cfg = {}) {
  const double extra = distinct_types > 1 ? static_cast<double>(distinct_types - 1) : 0.0;
  return std::min(cfg.diversity_cap, 1.0 + cfg.diversity_step * extra);
}

/// Product in base, frequency, cluster, ip, diversity order, capped at 100.
inline double compute_final_score(const FactorBreakdown& f) { return std::min(100.0, factor_product(f)); }

// ---- window state --------------------------------------------------------

struct WindowEntry {
  Timestamp timestamp{};
  std::uint64_t subnet = 0;
  AttackType attack_type = AttackType::Benign;
};

/// Anomalous verdicts with timestamp > now − span, plus incremental
/// per-subnet and per-type counts over them.
class WindowState {
 public:
  explicit WindowState(std::chrono::microseconds span = std::chrono::seconds{60}) : span_(span) {}

  void advance(Timestamp t) {
    if (!started_ || t > now_) now_ = t;
    started_ = true;
    evict();
  }

  void insert(const AnomalyVerdict& v) {
    WindowEntry e{v.timestamp, v.source_ip.subnet_key(), v.attack_type};
    auto pos = std::upper_bound(ring_.begin(), ring_.end(), e.timestamp,
                                [](Timestamp t, const WindowEntry& x) { return t < x.timestamp; });
    ring_.insert(pos, e);
    count_up(e);
  }

  void evict() {
    while (!ring_.empty() && ring_.front().timestamp <= now_ - span_) {
      count_down(ring_.front());
      ring_.pop_front();
    }
  }

  std::size_t size() const { return ring_.size(); }
  std::size_t max_subnet_cluster() const { return max_cluster_; }
  std::size_t distinct_types() const { return distinct_; }
  Timestamp now() const { return now_; }
  const std::deque<WindowEntry>& entries() const { return ring_; }

  /// Recounts from the ring and compares with the incremental counters.
  bool consistent() const {
    std::unordered_map<std::uint64_t, std::size_t> clusters;
    std::array<std::size_t, kAttackTypeCount> types{};
    for (const auto& e : ring_) {
      if (e.timestamp <= now_ - span_) return false;
      ++clusters[e.subnet];
      ++types[static_cast<std::size_t>(e.attack_type)];
    }
    std::size_t max_c = 0;
    for (const auto& [k, c] : clusters) max_c = std::max(max_c, c);
    std::size_t distinct = static_cast<std::size_t>(std::count_if(types.begin(), types.end(), [](auto c) { return c > 0; }));
    if (clusters.size() != subnet_counts_.size()) return false;
    for (const auto& [k, c] : clusters) {
      auto it = subnet_counts_.find(k);
      if (it == subnet_counts_.end() || it->second != c) return false;
    }
    return types == type_counts_ && max_c == max_cluster_ && distinct == distinct_;
  }

 private:
  void count_up(const WindowEntry& e) {
    auto& c = subnet_counts_[e.subnet];
    if (c > 0) --clusters_of_size_[c];
    ++c;
    if (clusters_of_size_.size() <= c) clusters_of_size_.resize(c + 1, 0);
    ++clusters_of_size_[c];
    max_cluster_ = std::max(max_cluster_, c);
    if (type_counts_[static_cast<std::size_t>(e.attack_type)]++ == 0) ++distinct_;
  }

  void count_down(const WindowEntry& e) {
    auto it = subnet_counts_.find(e.subnet);
    auto& c = it->second;
    --clusters_of_size_[c];
    if (c == max_cluster_ && clusters_of_size_[c] == 0) --max_cluster_;
    --c;
    if (c > 0) ++clusters_of_size_[c];
    else subnet_counts_.erase(it);
    if (--type_counts_[static_cast<std::size_t>(e.attack_type)] == 0) --distinct_;
  }

  std::chrono::microseconds span_;
  Timestamp now_{};
  bool started_ = false;
  std::deque<WindowEntry> ring_;
  std::unordered_map<std::uint64_t, std::size_t> subnet_counts_;
  std::vector<std::size_t> clusters_of_size_{0};
  std::size_t max_cluster_ = 0;
  std::array<std::size_t, kAttackTypeCount> type_counts_{};
  std::size_t distinct_ = 0;
};

// ---- calculator ----------------------------------------------------------

/// Single-writer scoring state machine. Benign verdicts only move the window
/// clock; each anomalous verdict is recorded and scored. Frequency counts the
/// other anomalous verdicts in the window and the IP factor reflects the
/// source's reputation before this verdict, so a first-ever verdict scores
/// with every multiplier at 1.
class ThreatCalculator {
 public:
  explicit ThreatCalculator(CalculatorConfig cfg = {}) : cfg_(std::move(cfg)), window_(cfg_.window_span) {}

  std::optional<ThreatAssessment> process_verdict(const AnomalyVerdict& v) {
    window_.advance(v.timestamp);
    sweep_reputation(v.timestamp);
    if (!v.is_anomalous) return std::nullopt;

    window_.insert(v);
    FactorBreakdown f;
    f.base_score = compute_base_score(v.confidence);
    f.frequency_multiplier = compute_frequency_multiplier(window_.size() - 1, cfg_);
    f.cluster_factor = compute_cluster_factor(window_.max_subnet_cluster(), cfg_);
    auto prior = reputation_at(v.source_ip, v.timestamp);
    f.ip_factor = compute_ip_factor(prior ? &*prior : nullptr, cfg_.allow_list.contains(v.source_ip), cfg_);
    f.diversity_factor = compute_diversity_factor(window_.distinct_types(), cfg_);

    ThreatAssessment a;
    a.timestamp = v.timestamp;
    a.factors = f;
    a.final_score = compute_final_score(f);
    a.band = map_band(a.final_score, cfg_.bands);
    a.window_event_count = static_cast<std::int64_t>(window_.size());

    record_offense(v.source_ip, v.timestamp);
    window_.evict();  // drops the verdict again if it arrived already stale
    return a;
  }

  /// Reputation of `ip` as seen at time `t` (offense decay applied).
  std::optional<IpReputationEntry> reputation_at(const IpAddress& ip, Timestamp t) const {
    auto it = reputation_.find(ip);
    if (it == reputation_.end()) return std::nullopt;
    IpReputationEntry e = it->second;
    e.offense_count = decayed_count(e, t);
    e.factor = compute_ip_factor(&e, false, cfg_);
    return e;
  }

  const WindowState& window() const { return window_; }
  const CalculatorConfig& config() const { return cfg_; }
  std::size_t reputation_size() const { return reputation_.size(); }

 private:
  std::uint64_t decayed_count(const IpReputationEntry& e, Timestamp t) const {
    if (t <= e.last_seen) return e.offense_count;
    const auto periods = static_cast<std::uint64_t>((t - e.last_seen) / cfg_.offense_decay);
    return periods >= e.offense_count ? 0 : e.offense_count - periods;
  }

  void record_offense(const IpAddress& ip, Timestamp t) {
    auto [it, inserted] = reputation_.try_emplace(ip, IpReputationEntry{ip, 1.0, 0, t});
    auto& e = it->second;
    e.offense_count = decayed_count(e, t) + 1;
    e.last_seen = std::max(e.last_seen, t);
    e.factor = compute_ip_factor(&e, false, cfg_);
  }

  // Drops sources whose offenses have fully decayed, at most once per decay
  // period of event time.
  void sweep_reputation(Timestamp t) {
    if (t - last_sweep_ < cfg_.offense_decay) return;
    last_sweep_ = t;
    std::erase_if(reputation_, [&](const auto& kv) { return decayed_count(kv.second, t) == 0; });
  }

  CalculatorConfig cfg_;
  WindowState window_;
  std::unordered_map<IpAddress, IpReputationEntry> reputation_;
  Timestamp last_sweep_{};
};

}  // namespace sentinel::threat
