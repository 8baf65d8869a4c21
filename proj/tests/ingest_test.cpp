#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <regex>
#include <string>
#include <vector>

#include "sentinel/core/validate.hpp"
#include "sentinel/ingest.hpp"

using namespace sentinel;
using namespace sentinel::ingest;

namespace {

std::filesystem::path temp_file(const std::string& name, const std::vector<std::string>& lines) {
  auto p = std::filesystem::temp_directory_path() / ("sentinel_ingest_" + name);
  std::ofstream out(p);
  for (const auto& l : lines) out << l << '\n';
  return p;
}

// Independent reading of the Combined Log Format, written from the grammar
// rather than from the production cursor parser.
struct OracleClf {
  std::string host, time, method, target, proto, status, bytes, referer, agent;
};

std::optional<OracleClf> oracle_parse(const std::string& line) {
  static const std::regex re(
      R"re(^(\S+) (\S+) (\S+) \[([^\]]+)\] "(\S+) (\S+) (\S+)" (\d{3}|-) (\d+|-)(?: "([^"]*)" "([^"]*)")?$)re");
  std::smatch m;
  if (!std::regex_match(line, m, re)) return std::nullopt;
  return OracleClf{m[1], m[4], m[5], m[6], m[7], m[8], m[9], m[10], m[11]};
}

const std::string kCurlLine =
    R"(9.9.9.9 - - [10/Oct/2025:13:55:36 +0000] "GET /a?id=1%20UNION%20SELECT HTTP/1.1" 200 10 "-" "curl")";

}  // namespace

TEST(ApacheParser, CommonLogFormat) {
  auto r = parse_apache_line(R"(1.2.3.4 - - [10/Oct/2025:13:55:36 +0000] "GET /index.html HTTP/1.1" 200 2326)");
  EXPECT_EQ(r.method, "GET");
  EXPECT_EQ(r.path, "/index.html");
  EXPECT_EQ(r.query, "");
  ASSERT_TRUE(r.status);
  EXPECT_EQ(*r.status, 200);
  EXPECT_EQ(r.body_length, 2326);
  EXPECT_EQ(r.client_ip.to_string(), "1.2.3.4");
  EXPECT_FALSE(r.user_agent);
  EXPECT_TRUE(validate(r).ok());
}

TEST(ApacheParser, CombinedFormatAgreesWithRegexOracle) {
  auto r = parse_apache_line(kCurlLine);
  auto o = oracle_parse(kCurlLine);
  ASSERT_TRUE(o);
  const auto q = o->target.find('?');
  EXPECT_EQ(r.method, o->method);
  EXPECT_EQ(r.path, o->target.substr(0, q));
  EXPECT_EQ(r.query, o->target.substr(q + 1));
  EXPECT_EQ(r.query, "id=1%20UNION%20SELECT");
  EXPECT_EQ(std::to_string(*r.status), o->status);
  EXPECT_EQ(std::to_string(r.body_length), o->bytes);
  ASSERT_TRUE(r.user_agent);
  EXPECT_EQ(*r.user_agent, o->agent);
  EXPECT_EQ(*r.user_agent, "curl");
  EXPECT_EQ(r.client_ip.to_string(), o->host);
}

TEST(ApacheParser, OracleAgreementOnVariants) {
  const std::vector<std::string> lines = {
      R"x(10.0.0.1 - frank [01/Jan/2024:00:00:00 +0000] "POST /login HTTP/1.0" 401 - "-" "Mozilla/5.0 (X11)")x",
      R"(10.0.0.2 - - [29/Feb/2024:23:59:59 +0000] "HEAD /a/b/c?x=1&y=2&z HTTP/2.0" 304 0)",
      R"(2001:db8::7 - - [15/Mar/2025:08:30:00 +0000] "DELETE /item/9 HTTP/1.1" 204 0 "https://r.example/" "ua")",
  };
  for (const auto& line : lines) {
    SCOPED_TRACE(line);
    auto r = parse_apache_line(line);
    auto o = oracle_parse(line);
    ASSERT_TRUE(o);
    const auto q = o->target.find('?');
    EXPECT_EQ(r.method, o->method);
    EXPECT_EQ(r.path, o->target.substr(0, q));
    EXPECT_EQ(r.query, q == std::string::npos ? "" : o->target.substr(q + 1));
    EXPECT_EQ(r.body_length, o->bytes == "-" ? 0 : std::stoll(o->bytes));
    EXPECT_EQ(r.client_ip, *IpAddress::parse(o->host));
  }
}

TEST(ApacheParser, DashStatusIsAbsent) {
  auto r = parse_apache_line(R"(1.2.3.4 - - [10/Oct/2025:13:55:36 +0000] "GET / HTTP/1.1" - -)");
  EXPECT_FALSE(r.status);
  EXPECT_EQ(r.body_length, 0);
}

TEST(ApacheParser, TimezoneOffsetConvertsToUtc) {
  auto utc = parse_apache_line(R"(1.2.3.4 - - [10/Oct/2025:13:55:36 +0000] "GET / HTTP/1.1" 200 1)");
  auto east = parse_apache_line(R"(1.2.3.4 - - [10/Oct/2025:15:55:36 +0200] "GET / HTTP/1.1" 200 1)");
  auto west = parse_apache_line(R"(1.2.3.4 - - [10/Oct/2025:08:25:36 -0530] "GET / HTTP/1.1" 200 1)");
  EXPECT_EQ(utc.timestamp, east.timestamp);
  EXPECT_EQ(utc.timestamp, west.timestamp);
  // 2025-10-10T13:55:36Z
  EXPECT_EQ(to_micros(utc.timestamp), 1'760'104'536'000'000);
}

TEST(ApacheParser, AbsoluteUriTarget) {
  auto r = parse_apache_line(R"(1.2.3.4 - - [10/Oct/2025:13:55:36 +0000] "GET http://h.example/x?y=1 HTTP/1.1" 200 1)");
  EXPECT_EQ(r.path, "/x");
  EXPECT_EQ(r.query, "y=1");
}

TEST(ApacheParser, GarbageIsMalformed) {
  EXPECT_THROW(parse_apache_line("garbage"), MalformedLine);
  EXPECT_THROW(parse_apache_line(R"(1.2.3.4 - - [10/Oct/2025:13:55:36 +0000] "GET / HTTP/1.1" 2x0 1)"), MalformedLine);
  EXPECT_THROW(parse_apache_line(R"(1.2.3.4 - - [99/Oct/2025:13:55:36 +0000] "GET / HTTP/1.1" 200 1)"), MalformedLine);
  EXPECT_THROW(parse_apache_line(R"(1.2.3.4 - - [10/Oct/2025:13:55:36 +0000] "GET / HTTP/1.1)"), MalformedLine);
  EXPECT_THROW(parse_apache_line(""), MalformedLine);
}

TEST(ApacheParser, MalformedCarriesPosition) {
  try {
    parse_apache_line("1.2.3.4 - - nope");
    FAIL();
  } catch (const MalformedLine& e) {
    EXPECT_GT(e.position(), 0u);
    EXPECT_FALSE(e.reason().empty());
  }
}

TEST(ApacheParser, DeterministicCanonicalBytes) {
  EXPECT_EQ(to_wire(parse_apache_line(kCurlLine, 3)), to_wire(parse_apache_line(kCurlLine, 3)));
}

TEST(JsonlParser, PacketRecord) {
  auto ev = parse_jsonl_record(
      R"({"kind":"packet","src_ip":"1.1.1.1","src_port":1,"dst_ip":"2.2.2.2","dst_port":80,"protocol":"TCP","length_bytes":60,"tcp_flags":["SYN"],"timestamp":0})");
  auto* p = std::get_if<PacketRecord>(&ev);
  ASSERT_TRUE(p);
  EXPECT_TRUE(p->tcp_flags.test(TcpFlag::Syn));
  EXPECT_FALSE(p->tcp_flags.test(TcpFlag::Ack));
  EXPECT_EQ(p->length_bytes, 60);
  EXPECT_EQ(p->dst_port, 80);
}

TEST(JsonlParser, MissingKindIsUnknownKind) {
  EXPECT_THROW(parse_jsonl_record(R"({"src_ip":"1.1.1.1"})"), UnknownKind);
  EXPECT_THROW(parse_jsonl_record(R"({"kind":"smoke"})"), UnknownKind);
}

TEST(JsonlParser, BadFieldsAreMalformed) {
  EXPECT_THROW(parse_jsonl_record("{not json"), MalformedLine);
  EXPECT_THROW(parse_jsonl_record(R"({"kind":"packet","src_ip":"1.1.1.1"})"), MalformedLine);
  EXPECT_THROW(
      parse_jsonl_record(
          R"({"kind":"packet","src_ip":"1.1.1.1","src_port":70000,"dst_ip":"2.2.2.2","dst_port":80,"protocol":"TCP","length_bytes":60,"tcp_flags":[],"timestamp":0})"),
      MalformedLine);
}

TEST(JsonlParser, HttpRoundTrip) {
  auto rec = parse_apache_line(kCurlLine, 11);
  auto ev = parse_jsonl_record(to_wire(rec));
  ASSERT_TRUE(std::holds_alternative<HttpRequestRecord>(ev));
  EXPECT_EQ(std::get<HttpRequestRecord>(ev), rec);
}

TEST(ParseLine, DispatchesOnBrace) {
  EXPECT_TRUE(std::holds_alternative<HttpRequestRecord>(parse_line(kCurlLine)));
  EXPECT_TRUE(std::holds_alternative<PacketRecord>(parse_line(
      R"(  {"kind":"packet","src_ip":"1.1.1.1","src_port":1,"dst_ip":"2.2.2.2","dst_port":80,"protocol":"UDP","length_bytes":60,"tcp_flags":[],"timestamp":0})")));
}

TEST(Replay, BatchConservesLineCount) {
  std::vector<std::string> lines;
  for (int i = 0; i < 1000; ++i)
    lines.push_back(i % 7 == 0 ? "garbage line " + std::to_string(i)
                               : R"(1.2.3.4 - - [10/Oct/2025:13:55:36 +0000] "GET /p)" + std::to_string(i) +
                                     R"( HTTP/1.1" 200 1)");
  auto path = temp_file("batch.log", lines);
  std::vector<RawEvent> out;
  auto report = replay({path.string(), Batch{}, 1}, [&](RawEvent e) { out.push_back(std::move(e)); });
  EXPECT_EQ(report.lines, 1000u);
  EXPECT_EQ(report.parsed + report.skipped, 1000u);
  EXPECT_EQ(report.skipped, 143u);
  ASSERT_EQ(out.size(), report.parsed);
  // file order and sequential ids
  EXPECT_EQ(std::get<HttpRequestRecord>(out[0]).path, "/p1");
  EXPECT_EQ(std::get<HttpRequestRecord>(out[1]).path, "/p2");
  for (std::size_t i = 0; i < out.size(); ++i) EXPECT_EQ(std::get<HttpRequestRecord>(out[i]).event_id, i + 1);
}

TEST(Replay, LoopMultiplies) {
  std::vector<std::string> lines(10, R"(1.2.3.4 - - [10/Oct/2025:13:55:36 +0000] "GET / HTTP/1.1" 200 1)");
  auto path = temp_file("loop.log", lines);
  std::size_t n = 0;
  auto report = replay({path.string(), Batch{}, 3}, [&](RawEvent) { ++n; });
  EXPECT_EQ(n, 30u);
  EXPECT_EQ(report.lines, 30u);
}

TEST(Replay, UnreadableSource) {
  EXPECT_THROW(replay({"/nonexistent/sentinel.log", Batch{}, 1}, [](RawEvent) {}), SourceUnreadable);
}

TEST(Replay, RejectsBadPlans) {
  auto path = temp_file("plan.log", {"x"});
  EXPECT_THROW(replay({path.string(), Steady{0.0}, 1}, [](RawEvent) {}), Error);
  EXPECT_THROW(replay({path.string(), Batch{}, 0}, [](RawEvent) {}), Error);
}

TEST(Replay, SteadyRateHoldsOverTenSeconds) {
  std::vector<std::string> lines(1000, R"(1.2.3.4 - - [10/Oct/2025:13:55:36 +0000] "GET / HTTP/1.1" 200 1)");
  auto path = temp_file("steady.log", lines);
  using Clock = std::chrono::steady_clock;
  std::vector<Clock::time_point> stamps;
  stamps.reserve(1000);
  auto report = replay({path.string(), Steady{100.0}, 1}, [&](RawEvent) { stamps.push_back(Clock::now()); });
  EXPECT_EQ(report.parsed, 1000u);
  EXPECT_NEAR(report.wall_time_s, 10.0, 0.5);
  // rate over the trailing 10 s window: 1000 emissions, ±5%
  const double span = std::chrono::duration<double>(stamps.back() - stamps.front()).count();
  EXPECT_NEAR(999.0 / span, 100.0, 5.0);
}

TEST(Replay, StopTokenEndsEarly) {
  std::vector<std::string> lines(100, R"(1.2.3.4 - - [10/Oct/2025:13:55:36 +0000] "GET / HTTP/1.1" 200 1)");
  auto path = temp_file("stop.log", lines);
  std::stop_source src;
  std::size_t n = 0;
  replay({path.string(), Batch{}, 1}, [&](RawEvent) {
    if (++n == 10) src.request_stop();
  }, src.get_token());
  EXPECT_EQ(n, 10u);
}
