#pragma once

// Log ingestion: Apache Common/Combined Log Format and JSONL event files, plus
// paced or batch replay into a publisher.

#include <chrono>
#include <cstdint>
#include <fstream>
#include <stop_token>
#include <string>
#include <string_view>
#include <thread>
#include <variant>

#include "sentinel/core/error.hpp"
#include "sentinel/core/types.hpp"
#include "sentinel/core/wire.hpp"

namespace sentinel::ingest {

namespace detail {

class Cursor {
 public:
  explicit Cursor(std::string_view s) : s_(s) {}

  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ >= s_.size(); }

  [[noreturn]] void fail(std::string reason) const { throw MalformedLine(pos_, std::move(reason)); }

  void expect(char c, const char* what) {
    if (done() || s_[pos_] != c) fail(std::string("expected ") + what);
    ++pos_;
  }

  std::string_view token() {
    std::size_t start = pos_;
    while (!done() && s_[pos_] != ' ') ++pos_;
    if (pos_ == start) fail("empty field");
    return s_.substr(start, pos_ - start);
  }

  std::string_view until(char c, const char* what) {
    std::size_t end = s_.find(c, pos_);
    if (end == std::string_view::npos) fail(std::string("unterminated ") + what);
    auto out = s_.substr(pos_, end - pos_);
    pos_ = end + 1;
    return out;
  }

  // Double-quoted field with backslash escapes.
  std::string quoted(const char* what) {
    expect('"', what);
    std::string out;
    while (true) {
      if (done()) fail(std::string("unterminated ") + what);
      char c = s_[pos_++];
      if (c == '"') return out;
      if (c == '\\' && !done()) c = s_[pos_++];
      out.push_back(c);
    }
  }

  void spaces() {
    if (done() || s_[pos_] != ' ') fail("expected space");
    while (!done() && s_[pos_] == ' ') ++pos_;
  }

  void skip_trailing_space() {
    while (!done() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
  }

 private:
  std::string_view s_;
  std::size_t pos_ = 0;
};

inline int parse_fixed_int(std::string_view s, std::size_t pos, std::size_t len, const Cursor& at) {
  if (pos + len > s.size()) at.fail("short timestamp");
  int v = 0;
  for (std::size_t i = pos; i < pos + len; ++i) {
    if (s[i] < '0' || s[i] > '9') at.fail("non-digit in timestamp");
    v = v * 10 + (s[i] - '0');
  }
  return v;
}

// `10/Oct/2025:13:55:36 +0000` -> UTC.
inline Timestamp parse_clf_time(std::string_view t, const Cursor& at) {
  static constexpr std::string_view kMonths = "JanFebMarAprMayJunJulAugSepOctNovDec";
  if (t.size() != 26 || t[2] != '/' || t[6] != '/' || t[11] != ':' || t[14] != ':' || t[17] != ':' ||
      t[20] != ' ' || (t[21] != '+' && t[21] != '-'))
    at.fail("bad timestamp layout");
  int day = parse_fixed_int(t, 0, 2, at);
  auto month_pos = kMonths.find(t.substr(3, 3));
  if (month_pos == std::string_view::npos || month_pos % 3 != 0) at.fail("bad month");
  int year = parse_fixed_int(t, 7, 4, at);
  int hh = parse_fixed_int(t, 12, 2, at), mm = parse_fixed_int(t, 15, 2, at), ss = parse_fixed_int(t, 18, 2, at);
  int off_h = parse_fixed_int(t, 22, 2, at), off_m = parse_fixed_int(t, 24, 2, at);
  if (hh > 23 || mm > 59 || ss > 60 || off_m > 59) at.fail("time field out of range");

  using namespace std::chrono;
  year_month_day ymd{std::chrono::year{year}, month{static_cast<unsigned>(month_pos / 3 + 1)},
                     std::chrono::day{static_cast<unsigned>(day)}};
  if (!ymd.ok()) at.fail("invalid date");
  auto local = sys_days{ymd} + hours{hh} + minutes{mm} + seconds{ss};
  auto offset = hours{off_h} + minutes{off_m};
  auto utc = t[21] == '+' ? local - offset : local + offset;
  return time_point_cast<microseconds>(utc);
}

inline bool all_digits(std::string_view s) {
  return !s.empty() && s.find_first_not_of("0123456789") == std::string_view::npos;
}

}  // namespace detail

/// Parses one Common or Combined Log Format line. `-` fields map to absent
/// (or 0 for the byte count). The query is kept verbatim, without decoding.
inline HttpRequestRecord parse_apache_line(std::string_view line, std::uint64_t event_id = 0) {
  detail::Cursor cur(line);
  HttpRequestRecord rec;
  rec.event_id = event_id;

  auto host = cur.token();
  auto ip = IpAddress::parse(host);
  if (!ip) cur.fail("host is not an IP address");
  rec.client_ip = *ip;
  cur.spaces();
  cur.token();  // ident
  cur.spaces();
  cur.token();  // authuser
  cur.spaces();
  cur.expect('[', "'['");
  rec.timestamp = detail::parse_clf_time(cur.until(']', "timestamp"), cur);
  cur.spaces();

  std::size_t request_pos = cur.pos();
  std::string request = cur.quoted("request line");
  auto sp1 = request.find(' ');
  if (sp1 == std::string::npos || sp1 == 0) throw MalformedLine(request_pos, "request line has no method");
  rec.method = request.substr(0, sp1);
  auto rest = std::string_view(request).substr(sp1 + 1);
  auto sp2 = rest.rfind(' ');
  std::string_view target = rest;
  if (sp2 != std::string_view::npos && rest.substr(sp2 + 1).starts_with("HTTP/")) target = rest.substr(0, sp2);
  if (target.empty()) throw MalformedLine(request_pos, "empty request target");
  // absolute-form target: keep only the path onwards
  if (auto scheme = target.find("://"); scheme != std::string_view::npos && scheme < target.find('/')) {
    auto slash = target.find('/', scheme + 3);
    target = slash == std::string_view::npos ? std::string_view("/") : target.substr(slash);
  }
  auto q = target.find('?');
  std::string path(target.substr(0, q));
  rec.query = q == std::string_view::npos ? std::string() : std::string(target.substr(q + 1));
  if (path.empty() || path.front() != '/') path.insert(path.begin(), '/');
  rec.path = std::move(path);
  cur.spaces();

  auto status = cur.token();
  if (status != "-") {
    if (!detail::all_digits(status) || status.size() != 3) cur.fail("bad status");
    rec.status = std::stoi(std::string(status));
  }
  cur.spaces();
  auto bytes = cur.token();
  if (bytes != "-") {
    if (!detail::all_digits(bytes) || bytes.size() > 18) cur.fail("bad byte count");
    rec.body_length = std::stoll(std::string(bytes));
  }

  cur.skip_trailing_space();
  if (!cur.done()) {
    auto referer = cur.quoted("referer");
    cur.spaces();
    auto agent = cur.quoted("user agent");
    cur.skip_trailing_space();
    if (!cur.done()) cur.fail("trailing characters");
    if (referer != "-") rec.headers.emplace_back("Referer", referer);
    if (agent != "-") {
      rec.headers.emplace_back("User-Agent", agent);
      rec.user_agent = std::move(agent);
    }
  }
  return rec;
}

/// Parses a JSONL event object discriminated by `kind` ("http" | "packet").
inline RawEvent parse_jsonl_record(std::string_view line) {
  Json j;
  try {
    j = Json::parse(line);
  } catch (const Json::parse_error& e) {
    throw MalformedLine(e.byte > 0 ? e.byte - 1 : 0, "invalid JSON");
  }
  if (!j.is_object()) throw MalformedLine(0, "not a JSON object");
  auto kind = j.find("kind");
  if (kind == j.end() || !kind->is_string()) throw UnknownKind("missing kind");
  try {
    if (*kind == "http") return j.get<HttpRequestRecord>();
    if (*kind == "packet") {
      auto p = j.get<PacketRecord>();
      if (p.src_port < 0 || p.src_port > 65535 || p.dst_port < 0 || p.dst_port > 65535)
        throw MalformedLine(0, "port out of range");
      return p;
    }
  } catch (const Json::exception& e) {
    throw MalformedLine(0, e.what());
  } catch (const MalformedLine&) {
    throw;
  } catch (const Error& e) {
    throw MalformedLine(0, e.what());
  }
  throw UnknownKind("unknown kind: " + kind->get<std::string>());
}

/// Dispatches on the first non-blank character: `{` selects JSONL, anything
/// else the Apache grammar.
inline RawEvent parse_line(std::string_view line, std::uint64_t event_id = 0) {
  auto first = line.find_first_not_of(" \t");
  if (first != std::string_view::npos && line[first] == '{') {
    auto ev = parse_jsonl_record(line);
    if (auto* http = std::get_if<HttpRequestRecord>(&ev); http && http->event_id == 0) http->event_id = event_id;
    return ev;
  }
  return parse_apache_line(line, event_id);
}

struct Steady {
  double rate = 1.0;  // events per second
};
struct Batch {};

struct ReplayPlan {
  std::string source_path;
  std::variant<Steady, Batch> mode = Batch{};
  int loop_count = 1;
};

struct ReplayReport {
  std::uint64_t lines = 0;
  std::uint64_t parsed = 0;
  std::uint64_t skipped = 0;
  double wall_time_s = 0.0;
};

inline void to_json(Json& j, const ReplayReport& r) {
  j = Json{{"lines", r.lines}, {"parsed", r.parsed}, {"skipped", r.skipped}, {"wall_time_s", r.wall_time_s}};
}

/// Reads the source `loop_count` times and hands every parsed event to
/// `sink`, in file order. Lines that fail to parse are counted and skipped.
/// STEADY mode paces emissions on an absolute schedule so the long-run rate
/// does not drift; BATCH emits as fast as `sink` returns.
template <typename Sink>
ReplayReport replay(const ReplayPlan& plan, Sink&& sink, std::stop_token stop = {}) {
  if (plan.loop_count < 1) throw Error("loop_count must be ≥ 1");
  const Steady* steady = std::get_if<Steady>(&plan.mode);
  if (steady && !(steady->rate > 0.0)) throw Error("STEADY rate must be > 0");
  {
    std::ifstream probe(plan.source_path);
    if (!probe) throw SourceUnreadable("cannot open " + plan.source_path);
  }

  using Clock = std::chrono::steady_clock;
  ReplayReport report;
  const auto start = Clock::now();
  std::uint64_t emitted = 0;
  std::string line;
  for (int loop = 0; loop < plan.loop_count && !stop.stop_requested(); ++loop) {
    std::ifstream in(plan.source_path, std::ios::binary);
    if (!in) throw SourceUnreadable("cannot open " + plan.source_path);
    while (std::getline(in, line)) {
      if (stop.stop_requested()) break;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      ++report.lines;
      RawEvent event;
      try {
        event = parse_line(line, emitted + 1);
      } catch (const Error&) {
        ++report.skipped;
        continue;
      }
      ++report.parsed;
      if (steady) {
        auto due = start + std::chrono::duration_cast<Clock::duration>(
                               std::chrono::duration<double>(static_cast<double>(emitted) / steady->rate));
        std::this_thread::sleep_until(due);
      }
      sink(std::move(event));
      ++emitted;
    }
  }
  report.wall_time_s = std::chrono::duration<double>(Clock::now() - start).count();
  return report;
}

}  // namespace sentinel::ingest
