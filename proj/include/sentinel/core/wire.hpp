#pragma once

// Canonical JSON encoding shared by the bus boundary, the HTTP API and JSONL
// files: snake_case keys, timestamps as integer microseconds.

#include <json.hpp>

#include <string>
#include <string_view>

#include "sentinel/core/digest.hpp"
#include "sentinel/core/error.hpp"
#include "sentinel/core/types.hpp"

namespace sentinel {

using Json = nlohmann::json;

namespace detail {

inline bool is_valid_utf8(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size()) {
    auto c = static_cast<unsigned char>(s[i]);
    std::size_t len = c < 0x80 ? 1 : (c >> 5) == 0x6 ? 2 : (c >> 4) == 0xe ? 3 : (c >> 3) == 0x1e ? 4 : 0;
    if (len == 0 || i + len > s.size()) return false;
    for (std::size_t k = 1; k < len; ++k)
      if ((static_cast<unsigned char>(s[i + k]) >> 6) != 0x2) return false;
    i += len;
  }
  return true;
}

inline IpAddress ip_from_json(const Json& j) {
  auto ip = IpAddress::parse(j.get<std::string>());
  if (!ip) throw Error("invalid ip address: " + j.get<std::string>());
  return *ip;
}

template <typename Enum, typename Parser>
Enum enum_from_json(const Json& j, Parser parse, std::string_view what) {
  auto v = parse(j.get<std::string>());
  if (!v) throw Error("invalid " + std::string(what) + ": " + j.get<std::string>());
  return *v;
}

}  // namespace detail

inline void to_json(Json& j, const IpAddress& ip) { j = ip.to_string(); }
inline void from_json(const Json& j, IpAddress& ip) { ip = detail::ip_from_json(j); }

inline void to_json(Json& j, AttackType t) { j = std::string(to_string(t)); }
inline void from_json(const Json& j, AttackType& t) {
  t = detail::enum_from_json<AttackType>(j, parse_attack_type, "attack_type");
}
inline void to_json(Json& j, Band b) { j = std::string(to_string(b)); }
inline void from_json(const Json& j, Band& b) { b = detail::enum_from_json<Band>(j, parse_band, "band"); }
inline void to_json(Json& j, Protocol p) { j = std::string(to_string(p)); }
inline void from_json(const Json& j, Protocol& p) {
  p = detail::enum_from_json<Protocol>(j, parse_protocol, "protocol");
}

inline void to_json(Json& j, const TcpFlags& flags) {
  j = Json::array();
  for (auto f : kAllTcpFlags)
    if (flags.test(f)) j.push_back(std::string(to_string(f)));
}
inline void from_json(const Json& j, TcpFlags& flags) {
  flags = {};
  for (const auto& item : j) flags.set(detail::enum_from_json<TcpFlag>(item, parse_tcp_flag, "tcp flag"));
}

// raw_line is a byte string; bytes that are not UTF-8 travel as base64.
inline void to_json(Json& j, const RawLogRecord& r) {
  j = Json{{"source_id", r.source_id}, {"received_at", to_micros(r.received_at)}};
  if (detail::is_valid_utf8(r.raw_line))
    j["raw_line"] = r.raw_line;
  else
    j["raw_line_base64"] = base64_encode(r.raw_line);
}
inline void from_json(const Json& j, RawLogRecord& r) {
  r.source_id = j.at("source_id").get<std::string>();
  r.received_at = from_micros(j.at("received_at").get<std::int64_t>());
  if (j.contains("raw_line_base64")) {
    auto bytes = base64_decode(j.at("raw_line_base64").get<std::string>());
    if (!bytes) throw Error("raw_line_base64 is not valid base64");
    r.raw_line = std::move(*bytes);
  } else {
    r.raw_line = j.at("raw_line").get<std::string>();
  }
}

inline void to_json(Json& j, const HttpRequestRecord& r) {
  Json headers = Json::array();
  for (const auto& [name, value] : r.headers) headers.push_back(Json::array({name, value}));
  j = Json{{"kind", "http"},
           {"event_id", r.event_id},
           {"timestamp", to_micros(r.timestamp)},
           {"client_ip", r.client_ip},
           {"method", r.method},
           {"path", r.path},
           {"query", r.query},
           {"headers", std::move(headers)},
           {"body_length", r.body_length},
           {"status", r.status ? Json(*r.status) : Json(nullptr)},
           {"user_agent", r.user_agent ? Json(*r.user_agent) : Json(nullptr)}};
  if (r.body) j["body"] = *r.body;
}
inline void from_json(const Json& j, HttpRequestRecord& r) {
  r.event_id = j.value("event_id", std::uint64_t{0});
  r.timestamp = from_micros(j.at("timestamp").get<std::int64_t>());
  r.client_ip = j.at("client_ip").get<IpAddress>();
  r.method = j.at("method").get<std::string>();
  r.path = j.at("path").get<std::string>();
  r.query = j.value("query", std::string{});
  r.headers.clear();
  if (auto it = j.find("headers"); it != j.end()) {
    for (const auto& h : *it) r.headers.emplace_back(h.at(0).get<std::string>(), h.at(1).get<std::string>());
  }
  r.body_length = j.value("body_length", std::int64_t{0});
  auto opt_int = j.find("status");
  r.status = (opt_int == j.end() || opt_int->is_null()) ? std::nullopt : std::optional<int>(opt_int->get<int>());
  auto ua = j.find("user_agent");
  r.user_agent = (ua == j.end() || ua->is_null()) ? std::nullopt : std::optional<std::string>(ua->get<std::string>());
  auto body = j.find("body");
  r.body = (body == j.end() || body->is_null()) ? std::nullopt : std::optional<std::string>(body->get<std::string>());
}

inline void to_json(Json& j, const PacketRecord& p) {
  j = Json{{"kind", "packet"},
           {"timestamp", to_micros(p.timestamp)},
           {"src_ip", p.src_ip},
           {"src_port", p.src_port},
           {"dst_ip", p.dst_ip},
           {"dst_port", p.dst_port},
           {"protocol", p.protocol},
           {"length_bytes", p.length_bytes},
           {"tcp_flags", p.tcp_flags}};
}
inline void from_json(const Json& j, PacketRecord& p) {
  p.timestamp = from_micros(j.at("timestamp").get<std::int64_t>());
  p.src_ip = j.at("src_ip").get<IpAddress>();
  p.src_port = j.at("src_port").get<std::int32_t>();
  p.dst_ip = j.at("dst_ip").get<IpAddress>();
  p.dst_port = j.at("dst_port").get<std::int32_t>();
  p.protocol = j.at("protocol").get<Protocol>();
  p.length_bytes = j.at("length_bytes").get<std::int64_t>();
  p.tcp_flags = j.contains("tcp_flags") ? j.at("tcp_flags").get<TcpFlags>() : TcpFlags{};
}

inline void to_json(Json& j, const AnomalyVerdict& v) {
  j = Json{{"event_id", v.event_id},
           {"timestamp", to_micros(v.timestamp)},
           {"confidence", v.confidence},
           {"is_anomalous", v.is_anomalous},
           {"attack_type", v.attack_type},
           {"source_ip", v.source_ip}};
}
inline void from_json(const Json& j, AnomalyVerdict& v) {
  v.event_id = j.at("event_id").get<std::uint64_t>();
  v.timestamp = from_micros(j.at("timestamp").get<std::int64_t>());
  v.confidence = j.at("confidence").get<double>();
  v.is_anomalous = j.at("is_anomalous").get<bool>();
  v.attack_type = j.at("attack_type").get<AttackType>();
  v.source_ip = j.at("source_ip").get<IpAddress>();
}

inline void to_json(Json& j, const FactorBreakdown& f) {
  j = Json{{"base_score", f.base_score},
           {"frequency_multiplier", f.frequency_multiplier},
           {"cluster_factor", f.cluster_factor},
           {"ip_factor", f.ip_factor},
           {"diversity_factor", f.diversity_factor}};
}
inline void from_json(const Json& j, FactorBreakdown& f) {
  f.base_score = j.at("base_score").get<double>();
  f.frequency_multiplier = j.at("frequency_multiplier").get<double>();
  f.cluster_factor = j.at("cluster_factor").get<double>();
  f.ip_factor = j.at("ip_factor").get<double>();
  f.diversity_factor = j.at("diversity_factor").get<double>();
}

inline void to_json(Json& j, const ThreatAssessment& t) {
  j = Json{{"timestamp", to_micros(t.timestamp)},
           {"final_score", t.final_score},
           {"band", t.band},
           {"factors", t.factors},
           {"window_event_count", t.window_event_count}};
}
inline void from_json(const Json& j, ThreatAssessment& t) {
  t.timestamp = from_micros(j.at("timestamp").get<std::int64_t>());
  t.final_score = j.at("final_score").get<double>();
  t.band = j.at("band").get<Band>();
  t.factors = j.at("factors").get<FactorBreakdown>();
  t.window_event_count = j.at("window_event_count").get<std::int64_t>();
}

inline Json to_json(const RawEvent& e) {
  return std::visit([](const auto& rec) { return Json(rec); }, e);
}

/// Compact single-line encoding, as written to JSONL files and the stream.
template <typename T>
std::string to_wire(const T& value) {
  return Json(value).dump();
}

template <typename T>
T from_wire(std::string_view text) {
  return Json::parse(text).get<T>();
}

}  // namespace sentinel
