#pragma once

// Bidirectional 5-tuple flow aggregation and the flow section of the model
// input.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <tuple>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "sentinel/core/error.hpp"
#include "sentinel/core/types.hpp"

namespace sentinel::flow {

inline constexpr std::size_t kFlowDims = 78;
inline constexpr std::size_t kNamedFlowDims = 22;

/// Names of the populated flow dimensions, in vector order. The remaining
/// kFlowDims - kNamedFlowDims slots are reserved and always zero.
inline constexpr std::array<std::string_view, kNamedFlowDims> kFlowFeatureNames = {
    "duration_s",       "fwd_packets",      "bwd_packets",      "pkt_len_mean",
    "pkt_len_max",      "pkt_len_min",      "pkt_len_std",      "bytes_per_s",
    "packets_per_s",    "fin_count",        "syn_count",        "rst_count",
    "psh_count",        "ack_count",        "urg_count",        "ece_count",
    "cwr_count",        "fwd_pkt_len_mean", "fwd_pkt_len_std",  "bwd_pkt_len_mean",
    "bwd_pkt_len_std",  "total_bytes",
};

using FlowSection = std::array<double, kFlowDims>;

inline constexpr double kMinRateDurationS = 0.001;

enum class Endpoint : std::uint8_t { A, B };

/// Canonical bidirectional flow identity: (ip_a, port_a) ≤ (ip_b, port_b).
/// Equality and hashing ignore `initiator`.
struct FlowKey {
  IpAddress ip_a;
  std::int32_t port_a = 0;
  IpAddress ip_b;
  std::int32_t port_b = 0;
  Protocol protocol = Protocol::Tcp;
  Endpoint initiator = Endpoint::A;

  static FlowKey from_packet(const PacketRecord& p) {
    FlowKey k;
    k.protocol = p.protocol;
    if (std::tie(p.src_ip, p.src_port) <= std::tie(p.dst_ip, p.dst_port)) {
      k.ip_a = p.src_ip, k.port_a = p.src_port, k.ip_b = p.dst_ip, k.port_b = p.dst_port;
      k.initiator = Endpoint::A;
    } else {
      k.ip_a = p.dst_ip, k.port_a = p.dst_port, k.ip_b = p.src_ip, k.port_b = p.src_port;
      k.initiator = Endpoint::B;
    }
    return k;
  }

  const IpAddress& initiator_ip() const { return initiator == Endpoint::A ? ip_a : ip_b; }
  std::int32_t initiator_port() const { return initiator == Endpoint::A ? port_a : port_b; }

  bool operator==(const FlowKey& o) const {
    return ip_a == o.ip_a && port_a == o.port_a && ip_b == o.ip_b && port_b == o.port_b && protocol == o.protocol;
  }
};

struct FlowKeyHash {
  std::size_t operator()(const FlowKey& k) const noexcept {
    std::hash<IpAddress> h;
    std::size_t s = h(k.ip_a) * 31 + h(k.ip_b);
    s = s * 131 + static_cast<std::size_t>(k.port_a) * 65537 + static_cast<std::size_t>(k.port_b);
    return s * 7 + static_cast<std::size_t>(k.protocol);
  }
};

/// Running length aggregates over integer byte counts. Sum and sum of squares
/// are kept exactly so the variance numerator n·Σx² − (Σx)² has no rounding.
struct LengthStats {
  std::uint64_t count = 0;
  std::uint64_t sum = 0;
  unsigned __int128 sum_sq = 0;
  std::int64_t min = std::numeric_limits<std::int64_t>::max();
  std::int64_t max = std::numeric_limits<std::int64_t>::min();

  void add(std::int64_t len) {
    auto u = static_cast<std::uint64_t>(len);
    ++count;
    sum += u;
    sum_sq += static_cast<unsigned __int128>(u) * u;
    min = std::min(min, len);
    max = std::max(max, len);
  }

  double mean() const { return count ? static_cast<double>(sum) / static_cast<double>(count) : 0.0; }

  /// Population standard deviation (divides by n).
  double stddev() const {
    if (count < 2) return 0.0;
    const auto n = static_cast<unsigned __int128>(count);
    const auto s = static_cast<unsigned __int128>(sum);
    const unsigned __int128 numerator = n * sum_sq - s * s;
    const double nn = static_cast<double>(count);
    return std::sqrt(static_cast<double>(numerator) / (nn * nn));
  }
};

struct FlowState {
  FlowKey key;
  Timestamp first_ts{};
  Timestamp last_ts{};
  std::uint64_t fwd_packets = 0;
  std::uint64_t bwd_packets = 0;
  LengthStats fwd_lengths;
  LengthStats bwd_lengths;
  LengthStats lengths;
  std::array<std::uint64_t, 8> flag_counts{};
  std::uint64_t total_bytes = 0;

  std::uint64_t packets() const { return fwd_packets + bwd_packets; }
};

inline bool is_forward(const FlowKey& key, const PacketRecord& p) {
  return p.src_ip == key.initiator_ip() && p.src_port == key.initiator_port();
}

/// Folds one packet into its flow; `state` absent starts a new flow whose
/// initiator is this packet's sender.
inline FlowState update_flow(std::optional<FlowState> state, const PacketRecord& pkt) {
  FlowState s;
  if (state) {
    if (!(FlowKey::from_packet(pkt) == state->key)) throw KeyMismatch("packet does not belong to this flow");
    s = std::move(*state);
    s.first_ts = std::min(s.first_ts, pkt.timestamp);
    s.last_ts = std::max(s.last_ts, pkt.timestamp);
  } else {
    s.key = FlowKey::from_packet(pkt);
    s.first_ts = s.last_ts = pkt.timestamp;
  }

  const auto len = std::max<std::int64_t>(pkt.length_bytes, 0);
  if (is_forward(s.key, pkt)) {
    ++s.fwd_packets;
    s.fwd_lengths.add(len);
  } else {
    ++s.bwd_packets;
    s.bwd_lengths.add(len);
  }
  s.lengths.add(len);
  s.total_bytes += static_cast<std::uint64_t>(len);
  for (std::size_t i = 0; i < kAllTcpFlags.size(); ++i)
    if (pkt.tcp_flags.test(kAllTcpFlags[i])) ++s.flag_counts[i];
  return s;
}

/// Flow section of the model input. Rates use max(duration, 1 ms).
inline FlowSection finalize_flow(const FlowState& s) {
  if (s.packets() == 0) throw EmptyFlow("flow has no packets");
  FlowSection v{};
  const double duration = std::chrono::duration<double>(s.last_ts - s.first_ts).count();
  const double effective = std::max(duration, kMinRateDurationS);
  v[0] = duration;
  v[1] = static_cast<double>(s.fwd_packets);
  v[2] = static_cast<double>(s.bwd_packets);
  v[3] = s.lengths.mean();
  v[4] = static_cast<double>(s.lengths.max);
  v[5] = static_cast<double>(s.lengths.min);
  v[6] = s.lengths.stddev();
  v[7] = static_cast<double>(s.total_bytes) / effective;
  v[8] = static_cast<double>(s.packets()) / effective;
  for (std::size_t i = 0; i < 8; ++i) v[9 + i] = static_cast<double>(s.flag_counts[i]);
  v[17] = s.fwd_lengths.mean();
  v[18] = s.fwd_lengths.stddev();
  v[19] = s.bwd_lengths.mean();
  v[20] = s.bwd_lengths.stddev();
  v[21] = static_cast<double>(s.total_bytes);
  return v;
}

struct FinalizedFlow {
  FlowKey key;
  Timestamp first_ts{};
  Timestamp last_ts{};
  FlowSection features{};
};

/// Single-writer flow table with an idle timeout and no active timeout.
class FlowTable {
 public:
  explicit FlowTable(std::chrono::microseconds idle_timeout = std::chrono::seconds{120})
      : idle_timeout_(idle_timeout) {}

  void add(const PacketRecord& pkt) {
    auto key = FlowKey::from_packet(pkt);
    auto it = flows_.find(key);
    if (it == flows_.end()) {
      flows_.emplace(key, update_flow(std::nullopt, pkt));
    } else {
      it->second = update_flow(std::move(it->second), pkt);
    }
  }

  /// Finalizes and removes flows idle for strictly longer than the timeout.
  std::vector<FinalizedFlow> expire_flows(Timestamp now) {
    std::vector<FinalizedFlow> out;
    for (auto it = flows_.begin(); it != flows_.end();) {
      if (now - it->second.last_ts > idle_timeout_) {
        out.push_back(finalize(it->second));
        it = flows_.erase(it);
      } else {
        ++it;
      }
    }
    sort_by_start(out);
    return out;
  }

  std::vector<FinalizedFlow> flush() {
    std::vector<FinalizedFlow> out;
    out.reserve(flows_.size());
    for (const auto& [k, s] : flows_) out.push_back(finalize(s));
    flows_.clear();
    sort_by_start(out);
    return out;
  }

  std::size_t size() const { return flows_.size(); }
  const FlowState* find(const FlowKey& k) const {
    auto it = flows_.find(k);
    return it == flows_.end() ? nullptr : &it->second;
  }

 private:
  static FinalizedFlow finalize(const FlowState& s) { return {s.key, s.first_ts, s.last_ts, finalize_flow(s)}; }

  // Hash order is not deterministic across builds; emit in start order.
  static void sort_by_start(std::vector<FinalizedFlow>& v) {
    std::sort(v.begin(), v.end(), [](const FinalizedFlow& a, const FinalizedFlow& b) {
      return std::tie(a.first_ts, a.key.ip_a, a.key.port_a, a.key.ip_b, a.key.port_b) <
             std::tie(b.first_ts, b.key.ip_a, b.key.port_a, b.key.ip_b, b.key.port_b);
    });
  }

  std::chrono::microseconds idle_timeout_;
  std::unordered_map<FlowKey, FlowState, FlowKeyHash> flows_;
};

}  // namespace sentinel::flow
