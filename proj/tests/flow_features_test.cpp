#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "sentinel/flow_features.hpp"

using namespace sentinel;
using namespace sentinel::flow;

namespace {

PacketRecord packet(const char* src, int sport, const char* dst, int dport, std::int64_t len, std::int64_t t_us,
                    TcpFlags flags = {}) {
  PacketRecord p;
  p.src_ip = *IpAddress::parse(src);
  p.src_port = sport;
  p.dst_ip = *IpAddress::parse(dst);
  p.dst_port = dport;
  p.length_bytes = len;
  p.timestamp = from_micros(t_us);
  p.tcp_flags = flags;
  return p;
}

double rel_err(double a, double b) {
  if (a == b) return 0.0;
  return std::abs(a - b) / std::max(std::abs(a), std::abs(b));
}

// Two-pass reference statistics over a plain list of lengths.
struct TwoPass {
  double mean = 0, std = 0, min = 0, max = 0;
};

TwoPass two_pass(const std::vector<double>& xs) {
  TwoPass r;
  if (xs.empty()) return r;
  double s = 0;
  for (double x : xs) s += x;
  r.mean = s / static_cast<double>(xs.size());
  double ss = 0;
  for (double x : xs) ss += (x - r.mean) * (x - r.mean);
  r.std = std::sqrt(ss / static_cast<double>(xs.size()));
  r.min = *std::min_element(xs.begin(), xs.end());
  r.max = *std::max_element(xs.begin(), xs.end());
  return r;
}

}  // namespace

TEST(FlowUpdate, SingleSynPacket) {
  auto s = update_flow(std::nullopt, packet("10.0.0.1", 40000, "10.0.0.2", 80, 60, 0, {TcpFlag::Syn}));
  EXPECT_EQ(s.fwd_packets, 1u);
  EXPECT_EQ(s.bwd_packets, 0u);
  EXPECT_EQ(s.lengths.min, 60);
  EXPECT_EQ(s.lengths.max, 60);
  EXPECT_EQ(s.flag_counts[1], 1u);
}

TEST(FlowUpdate, ReplyIsBackward) {
  auto s = update_flow(std::nullopt, packet("10.0.0.1", 40000, "10.0.0.2", 80, 60, 0));
  s = update_flow(s, packet("10.0.0.2", 80, "10.0.0.1", 40000, 60, 10));
  EXPECT_EQ(s.fwd_packets, 1u);
  EXPECT_EQ(s.bwd_packets, 1u);
}

TEST(FlowUpdate, InitiatorIsFirstSenderEvenWhenCanonicallyLarger) {
  // 10.0.0.9 sorts after 10.0.0.2, so the canonical key puts it second
  auto s = update_flow(std::nullopt, packet("10.0.0.9", 5555, "10.0.0.2", 80, 60, 0));
  EXPECT_EQ(s.key.initiator_ip().to_string(), "10.0.0.9");
  s = update_flow(s, packet("10.0.0.9", 5555, "10.0.0.2", 80, 60, 1));
  s = update_flow(s, packet("10.0.0.2", 80, "10.0.0.9", 5555, 60, 2));
  EXPECT_EQ(s.fwd_packets, 2u);
  EXPECT_EQ(s.bwd_packets, 1u);
}

TEST(FlowUpdate, ExactSums) {
  auto s = update_flow(std::nullopt, packet("1.1.1.1", 1, "2.2.2.2", 2, 100, 0));
  s = update_flow(s, packet("1.1.1.1", 1, "2.2.2.2", 2, 300, 1));
  EXPECT_EQ(s.lengths.sum, 400u);
  EXPECT_EQ(static_cast<std::uint64_t>(s.lengths.sum_sq), 100'000u);
  EXPECT_EQ(s.lengths.min, 100);
  EXPECT_EQ(s.lengths.max, 300);
}

TEST(FlowUpdate, KeyMismatch) {
  auto s = update_flow(std::nullopt, packet("1.1.1.1", 1, "2.2.2.2", 2, 100, 0));
  EXPECT_THROW(update_flow(s, packet("1.1.1.1", 1, "3.3.3.3", 2, 100, 0)), KeyMismatch);
}

TEST(FlowFinalize, SinglePacketUsesRateFloor) {
  auto s = update_flow(std::nullopt, packet("1.1.1.1", 1, "2.2.2.2", 2, 100, 0));
  auto v = finalize_flow(s);
  EXPECT_EQ(v[0], 0.0);
  EXPECT_EQ(v[3], 100.0);
  EXPECT_EQ(v[6], 0.0);
  EXPECT_DOUBLE_EQ(v[7], 100'000.0);
}

TEST(FlowFinalize, TwoPacketPopulationStd) {
  auto s = update_flow(std::nullopt, packet("1.1.1.1", 1, "2.2.2.2", 2, 100, 0));
  s = update_flow(s, packet("1.1.1.1", 1, "2.2.2.2", 2, 300, 2'000'000));
  auto v = finalize_flow(s);
  EXPECT_EQ(v[0], 2.0);
  EXPECT_EQ(v[3], 200.0);
  EXPECT_EQ(v[6], 100.0);  // sample std would be 141.42
  EXPECT_EQ(v[7], 200.0);
  EXPECT_EQ(v[8], 1.0);
  EXPECT_EQ(v[21], 400.0);
}

TEST(FlowFinalize, IdenticalPacketsHaveZeroStd) {
  std::optional<FlowState> s;
  for (int i = 0; i < 10; ++i) s = update_flow(s, packet("1.1.1.1", 1, "2.2.2.2", 2, 512, i * 1000));
  EXPECT_EQ(finalize_flow(*s)[6], 0.0);
}

TEST(FlowFinalize, EmptyFlowThrows) { EXPECT_THROW(finalize_flow(FlowState{}), EmptyFlow); }

TEST(FlowFinalize, ReservedSlotsStayZero) {
  auto s = update_flow(std::nullopt, packet("1.1.1.1", 1, "2.2.2.2", 2, 100, 0, {TcpFlag::Syn, TcpFlag::Ack}));
  auto v = finalize_flow(s);
  for (std::size_t i = kNamedFlowDims; i < kFlowDims; ++i) EXPECT_EQ(v[i], 0.0) << i;
  EXPECT_EQ(v.size(), 78u);
}

TEST(FlowFinalize, StreamingMatchesTwoPassOnRandomFlows) {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> n_dist(1, 200);
  std::uniform_int_distribution<std::int64_t> len_dist(0, 65535);
  std::uniform_int_distribution<std::int64_t> gap_dist(0, 5'000'000);
  double worst = 0;
  for (int f = 0; f < 1000; ++f) {
    const int n = n_dist(rng);
    std::optional<FlowState> s;
    std::vector<double> all, fwd, bwd;
    std::int64_t t = 0, t0 = 0;
    for (int i = 0; i < n; ++i) {
      const bool forward = i == 0 || (rng() & 1);
      const auto len = len_dist(rng);
      t += gap_dist(rng);
      if (i == 0) t0 = t;
      auto p = forward ? packet("10.1.1.1", 1234, "10.2.2.2", 443, len, t)
                       : packet("10.2.2.2", 443, "10.1.1.1", 1234, len, t);
      s = update_flow(s, p);
      all.push_back(static_cast<double>(len));
      (forward ? fwd : bwd).push_back(static_cast<double>(len));
    }
    auto v = finalize_flow(*s);
    auto a = two_pass(all), fa = two_pass(fwd), ba = two_pass(bwd);
    double total = 0;
    for (double x : all) total += x;
    const double dur = static_cast<double>(t - t0) / 1e6;
    const double eff = std::max(dur, 0.001);
    const std::vector<std::pair<double, double>> pairs = {
        {v[0], dur},          {v[1], double(fwd.size())}, {v[2], double(bwd.size())}, {v[3], a.mean},
        {v[4], a.max},        {v[5], a.min},              {v[6], a.std},              {v[7], total / eff},
        {v[8], double(n) / eff}, {v[17], fa.mean},        {v[18], fa.std},            {v[19], ba.mean},
        {v[20], ba.std},      {v[21], total}};
    for (auto [got, want] : pairs) worst = std::max(worst, rel_err(got, want));
  }
  EXPECT_LT(worst, 1e-9);
}

TEST(FlowFinalize, DirectionStableUnderReorderingAfterFirst) {
  std::vector<PacketRecord> pkts = {packet("10.0.0.1", 1, "10.0.0.2", 2, 100, 0)};
  for (int i = 1; i < 20; ++i)
    pkts.push_back(i % 3 ? packet("10.0.0.2", 2, "10.0.0.1", 1, 50 + i, i) : packet("10.0.0.1", 1, "10.0.0.2", 2, 70 + i, i));
  auto run = [](const std::vector<PacketRecord>& ps) {
    std::optional<FlowState> s;
    for (const auto& p : ps) s = update_flow(s, p);
    return finalize_flow(*s);
  };
  auto base = run(pkts);
  std::mt19937_64 rng(5);
  for (int k = 0; k < 10; ++k) {
    std::shuffle(pkts.begin() + 1, pkts.end(), rng);
    auto v = run(pkts);
    EXPECT_EQ(v[1], base[1]);
    EXPECT_EQ(v[2], base[2]);
    EXPECT_EQ(v[17], base[17]);
    EXPECT_EQ(v[19], base[19]);
  }
}

TEST(FlowTable, ExpiryThreshold) {
  FlowTable table(std::chrono::seconds{120});
  EXPECT_TRUE(table.expire_flows(from_micros(0)).empty());
  table.add(packet("1.1.1.1", 1, "2.2.2.2", 2, 100, 0));
  EXPECT_TRUE(table.expire_flows(from_micros(119'000'000)).empty());
  EXPECT_TRUE(table.expire_flows(from_micros(120'000'000)).empty());
  auto out = table.expire_flows(from_micros(121'000'000));
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].features[3], 100.0);
  EXPECT_EQ(table.size(), 0u);
}

TEST(FlowTable, BidirectionalPacketsShareOneFlow) {
  FlowTable table;
  table.add(packet("1.1.1.1", 1, "2.2.2.2", 2, 100, 0));
  table.add(packet("2.2.2.2", 2, "1.1.1.1", 1, 100, 1));
  table.add(packet("1.1.1.1", 9, "2.2.2.2", 2, 100, 2));
  EXPECT_EQ(table.size(), 2u);
  auto out = table.flush();
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].features[1], 1.0);
  EXPECT_EQ(out[0].features[2], 1.0);
  EXPECT_EQ(table.size(), 0u);
}
