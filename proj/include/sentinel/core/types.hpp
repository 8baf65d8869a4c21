#pragma once

// Shared domain values. Every type here is an immutable-by-convention value:
// construct, validate, then pass by value or const reference across threads.

#include <arpa/inet.h>

#include <array>
#include <chrono>
#include <compare>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace sentinel {

/// UTC, microseconds since the Unix epoch.
using Timestamp = std::chrono::sys_time<std::chrono::microseconds>;

inline std::int64_t to_micros(Timestamp t) noexcept { return t.time_since_epoch().count(); }
inline Timestamp from_micros(std::int64_t us) noexcept {
  return Timestamp{std::chrono::microseconds{us}};
}

/// IPv4 or IPv6 address held in network byte order.
class IpAddress {
 public:
  IpAddress() = default;

  static std::optional<IpAddress> parse(std::string_view text) {
    if (text.empty() || text.size() > 45) return std::nullopt;
    std::string buf(text);
    IpAddress ip;
    if (::inet_pton(AF_INET, buf.c_str(), ip.bytes_.data()) == 1) return ip;
    if (::inet_pton(AF_INET6, buf.c_str(), ip.bytes_.data()) == 1) {
      ip.v6_ = true;
      return ip;
    }
    return std::nullopt;
  }

  static IpAddress v4(std::uint8_t a, std::uint8_t b, std::uint8_t c, std::uint8_t d) {
    IpAddress ip;
    ip.bytes_[0] = a;
    ip.bytes_[1] = b;
    ip.bytes_[2] = c;
    ip.bytes_[3] = d;
    return ip;
  }

  bool is_v6() const noexcept { return v6_; }

  std::span<const std::uint8_t> bytes() const noexcept {
    return {bytes_.data(), v6_ ? std::size_t{16} : std::size_t{4}};
  }

  std::string to_string() const {
    char buf[INET6_ADDRSTRLEN] = {};
    ::inet_ntop(v6_ ? AF_INET6 : AF_INET, bytes_.data(), buf, sizeof buf);
    return buf;
  }

  /// Clustering key: the /24 for IPv4, the /48 for IPv6.
  std::uint64_t subnet_key() const noexcept {
    std::uint64_t key = v6_ ? (std::uint64_t{1} << 63) : 0;
    const std::size_t prefix_bytes = v6_ ? 6 : 3;
    for (std::size_t i = 0; i < prefix_bytes; ++i) key |= std::uint64_t{bytes_[i]} << (8 * i);
    return key;
  }

  // IPv4 orders before IPv6, then bytewise.
  auto operator<=>(const IpAddress& other) const noexcept {
    if (auto c = v6_ <=> other.v6_; c != 0) return c;
    return bytes_ <=> other.bytes_;
  }
  bool operator==(const IpAddress&) const noexcept = default;

 private:
  std::array<std::uint8_t, 16> bytes_{};
  bool v6_ = false;
};

enum class Protocol : std::uint8_t { Tcp, Udp, Other };

enum class TcpFlag : std::uint8_t {
  Fin = 1u << 0,
  Syn = 1u << 1,
  Rst = 1u << 2,
  Psh = 1u << 3,
  Ack = 1u << 4,
  Urg = 1u << 5,
  Ece = 1u << 6,
  Cwr = 1u << 7,
};

inline constexpr std::array<TcpFlag, 8> kAllTcpFlags = {TcpFlag::Fin, TcpFlag::Syn, TcpFlag::Rst,
                                                        TcpFlag::Psh, TcpFlag::Ack, TcpFlag::Urg,
                                                        TcpFlag::Ece, TcpFlag::Cwr};

/// 8-bit TCP flag set.
class TcpFlags {
 public:
  constexpr TcpFlags() = default;
  constexpr explicit TcpFlags(std::uint8_t bits) : bits_(bits) {}
  constexpr TcpFlags(std::initializer_list<TcpFlag> flags) {
    for (auto f : flags) set(f);
  }

  constexpr bool test(TcpFlag f) const noexcept { return (bits_ & static_cast<std::uint8_t>(f)) != 0; }
  constexpr void set(TcpFlag f) noexcept { bits_ |= static_cast<std::uint8_t>(f); }
  constexpr bool empty() const noexcept { return bits_ == 0; }
  constexpr std::uint8_t bits() const noexcept { return bits_; }
  constexpr bool operator==(const TcpFlags&) const noexcept = default;

 private:
  std::uint8_t bits_ = 0;
};

enum class AttackType : std::uint8_t {
  Benign,
  SqlInjection,
  Xss,
  PathTraversal,
  BruteForce,
  Ddos,
  PortScan,
  NetworkAnomaly,
};
inline constexpr std::size_t kAttackTypeCount = 8;

enum class Band : std::uint8_t { Green, Yellow, Red };

inline constexpr double kDefaultDecisionThreshold = 0.5;

struct RawLogRecord {
  std::string source_id;
  Timestamp received_at{};
  std::string raw_line;

  bool operator==(const RawLogRecord&) const = default;
};

struct HttpRequestRecord {
  std::uint64_t event_id = 0;
  Timestamp timestamp{};
  IpAddress client_ip;
  std::string method;
  std::string path;
  std::string query;
  std::vector<std::pair<std::string, std::string>> headers;
  std::int64_t body_length = 0;
  std::optional<int> status;
  std::optional<std::string> user_agent;
  // Leading bytes of the request body, when the source carries them.
  std::optional<std::string> body;

  bool operator==(const HttpRequestRecord&) const = default;
};

struct PacketRecord {
  Timestamp timestamp{};
  IpAddress src_ip;
  std::int32_t src_port = 0;
  IpAddress dst_ip;
  std::int32_t dst_port = 0;
  Protocol protocol = Protocol::Tcp;
  std::int64_t length_bytes = 0;
  TcpFlags tcp_flags;

  bool operator==(const PacketRecord&) const = default;
};

using RawEvent = std::variant<HttpRequestRecord, PacketRecord>;

struct AnomalyVerdict {
  std::uint64_t event_id = 0;
  Timestamp timestamp{};
  double confidence = 0.0;
  bool is_anomalous = false;
  AttackType attack_type = AttackType::Benign;
  IpAddress source_ip;

  bool operator==(const AnomalyVerdict&) const = default;
};

struct FactorBreakdown {
  double base_score = 0.0;
  double frequency_multiplier = 1.0;
  double cluster_factor = 1.0;
  double ip_factor = 1.0;
  double diversity_factor = 1.0;

  bool operator==(const FactorBreakdown&) const = default;
};

struct ThreatAssessment {
  Timestamp timestamp{};
  double final_score = 0.0;
  Band band = Band::Green;
  FactorBreakdown factors;
  std::int64_t window_event_count = 0;

  bool operator==(const ThreatAssessment&) const = default;
};

// ---- enum names (wire spelling) ----

inline constexpr std::array<std::string_view, kAttackTypeCount> kAttackTypeNames = {
    "BENIGN", "SQL_INJECTION", "XSS", "PATH_TRAVERSAL",
    "BRUTE_FORCE", "DDOS", "PORT_SCAN", "NETWORK_ANOMALY"};

inline std::string_view to_string(AttackType t) { return kAttackTypeNames[static_cast<std::size_t>(t)]; }

inline std::optional<AttackType> parse_attack_type(std::string_view s) {
  for (std::size_t i = 0; i < kAttackTypeNames.size(); ++i)
    if (kAttackTypeNames[i] == s) return static_cast<AttackType>(i);
  return std::nullopt;
}

inline std::string_view to_string(Band b) {
  switch (b) {
    case Band::Green: return "GREEN";
    case Band::Yellow: return "YELLOW";
    case Band::Red: return "RED";
  }
  return "GREEN";
}

inline std::optional<Band> parse_band(std::string_view s) {
  if (s == "GREEN") return Band::Green;
  if (s == "YELLOW") return Band::Yellow;
  if (s == "RED") return Band::Red;
  return std::nullopt;
}

inline std::string_view to_string(Protocol p) {
  switch (p) {
    case Protocol::Tcp: return "TCP";
    case Protocol::Udp: return "UDP";
    case Protocol::Other: return "OTHER";
  }
  return "OTHER";
}

inline std::optional<Protocol> parse_protocol(std::string_view s) {
  if (s == "TCP") return Protocol::Tcp;
  if (s == "UDP") return Protocol::Udp;
  if (s == "OTHER") return Protocol::Other;
  return std::nullopt;
}

inline std::string_view to_string(TcpFlag f) {
  switch (f) {
    case TcpFlag::Fin: return "FIN";
    case TcpFlag::Syn: return "SYN";
    case TcpFlag::Rst: return "RST";
    case TcpFlag::Psh: return "PSH";
    case TcpFlag::Ack: return "ACK";
    case TcpFlag::Urg: return "URG";
    case TcpFlag::Ece: return "ECE";
    case TcpFlag::Cwr: return "CWR";
  }
  return "";
}

inline std::optional<TcpFlag> parse_tcp_flag(std::string_view s) {
  for (auto f : kAllTcpFlags)
    if (to_string(f) == s) return f;
  return std::nullopt;
}

}  // namespace sentinel

template <>
struct std::hash<sentinel::IpAddress> {
  std::size_t operator()(const sentinel::IpAddress& ip) const noexcept {
    std::size_t h = ip.is_v6() ? 0x9e3779b97f4a7c15ull : 0;
    for (auto b : ip.bytes()) h = (h ^ b) * 0x100000001b3ull;
    return h;
  }
};
