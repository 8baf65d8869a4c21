#pragma once

// Dashboard state: the latest assessment, rolling counters, the most recent
// verdicts and a per-minute event histogram. One writer applies events;
// readers take point-in-time copies.

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdint>
#include <deque>
#include <mutex>
#include <optional>
#include <vector>

#include "sentinel/core/types.hpp"
#include "sentinel/core/wire.hpp"

namespace sentinel::service {

inline constexpr std::size_t kDefaultRecentVerdicts = 100;
inline constexpr std::size_t kHistogramMinutes = 60;

enum class EventSource : std::uint8_t { Log, Flow };

struct Counters {
  std::uint64_t logs_assessed = 0;
  std::uint64_t network_events_processed = 0;
  std::uint64_t anomalies = 0;
  std::array<std::uint64_t, kAttackTypeCount> by_attack_type{};

  bool operator==(const Counters&) const = default;
};

struct HistogramBucket {
  std::int64_t minute_start_us = 0;
  std::uint64_t events = 0;
  std::uint64_t anomalous = 0;

  bool operator==(const HistogramBucket&) const = default;
};

struct DashboardSnapshot {
  std::optional<ThreatAssessment> current;
  std::optional<Timestamp> updated_at;  // wall clock when `current` was applied
  Counters counters;
  std::deque<AnomalyVerdict> recent;    // newest last
  std::deque<HistogramBucket> histogram;  // ascending minutes
};

inline Json status_json(const DashboardSnapshot& s) {
  if (!s.current)
    return Json{{"final_score", 0.0}, {"band", Band::Green}, {"factors", nullptr}, {"updated_at", nullptr},
                {"timestamp", nullptr}, {"window_event_count", 0}};
  Json j = *s.current;
  j["updated_at"] = s.updated_at ? Json(to_micros(*s.updated_at)) : Json(nullptr);
  return j;
}

inline Json metrics_json(const DashboardSnapshot& s) {
  Json types = Json::object();
  for (std::size_t i = 0; i < kAttackTypeCount; ++i)
    types[std::string(kAttackTypeNames[i])] = s.counters.by_attack_type[i];
  Json hist = Json::array();
  for (const auto& b : s.histogram)
    hist.push_back({{"minute", b.minute_start_us}, {"events", b.events}, {"anomalous", b.anomalous}});
  return Json{{"logs_assessed", s.counters.logs_assessed},
              {"network_events_processed", s.counters.network_events_processed},
              {"anomalies", s.counters.anomalies},
              {"by_attack_type", std::move(types)},
              {"histogram", std::move(hist)}};
}

/// Newest `limit` verdicts, oldest first.
inline Json events_json(const DashboardSnapshot& s, std::size_t limit) {
  Json out = Json::array();
  const std::size_t n = std::min(limit, s.recent.size());
  for (auto it = s.recent.end() - static_cast<std::ptrdiff_t>(n); it != s.recent.end(); ++it) out.push_back(*it);
  return out;
}

class SnapshotStore {
 public:
  explicit SnapshotStore(std::size_t recent_capacity = kDefaultRecentVerdicts) : recent_capacity_(recent_capacity) {}

  /// Every verdict counts as a processed network event; verdicts on log
  /// records also count as assessed logs.
  void apply(const AnomalyVerdict& v, EventSource source) {
    std::lock_guard lk(mu_);
    auto& c = state_.counters;
    if (source == EventSource::Log) ++c.logs_assessed;
    ++c.network_events_processed;
    if (v.is_anomalous) ++c.anomalies;
    ++c.by_attack_type[static_cast<std::size_t>(v.attack_type)];
    if (recent_capacity_ > 0) {
      if (state_.recent.size() == recent_capacity_) state_.recent.pop_front();
      state_.recent.push_back(v);
    }
    bump_histogram(v);
  }

  void apply(const ThreatAssessment& a) {
    std::lock_guard lk(mu_);
    state_.current = a;
    state_.updated_at = std::chrono::time_point_cast<std::chrono::microseconds>(std::chrono::system_clock::now());
  }

  DashboardSnapshot snapshot() const {
    std::lock_guard lk(mu_);
    return state_;
  }

  Counters counters() const {
    std::lock_guard lk(mu_);
    return state_.counters;
  }

  std::size_t recent_capacity() const { return recent_capacity_; }

 private:
  void bump_histogram(const AnomalyVerdict& v) {
    constexpr std::int64_t kMinute = 60'000'000;
    const std::int64_t t = to_micros(v.timestamp);
    const std::int64_t minute = (t >= 0 ? t : t - kMinute + 1) / kMinute * kMinute;
    auto& h = state_.histogram;
    if (!h.empty() && minute < h.front().minute_start_us && h.size() == kHistogramMinutes) return;
    auto it = std::lower_bound(h.begin(), h.end(), minute,
                               [](const HistogramBucket& b, std::int64_t m) { return b.minute_start_us < m; });
    if (it == h.end() || it->minute_start_us != minute) it = h.insert(it, HistogramBucket{minute, 0, 0});
    ++it->events;
    if (v.is_anomalous) ++it->anomalous;
    // keep only the newest minutes
    while (h.size() > kHistogramMinutes) h.pop_front();
  }

  mutable std::mutex mu_;
  std::size_t recent_capacity_;
  DashboardSnapshot state_;
};

}  // namespace sentinel::service
