#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "sentinel/bench.hpp"
#include "sentinel/neural/serialize.hpp"

using namespace sentinel;
using namespace sentinel::bench;

namespace {

const neural::ModelBundle& default_model() {
  static const auto m = neural::load_model(std::string(SENTINEL_DATA_DIR) + "/default_model.ssnn");
  return m;
}

BenchReport report(std::string mode, std::uint64_t events, double wall, double mean_ms = 1.0, double mem = 10.0) {
  BenchReport r;
  r.mode = std::move(mode);
  r.events = events;
  r.wall_time_s = wall;
  r.per_event_ms = {mean_ms, mean_ms, mean_ms * 2};
  r.peak_memory_mb = mem;
  return r;
}

}  // namespace

TEST(Workload, DeterministicInSeed) {
  auto a = generate_workload({500, 9});
  auto b = generate_workload({500, 9});
  auto c = generate_workload({500, 10});
  EXPECT_EQ(a.lines, b.lines);
  EXPECT_EQ(a.kinds, b.kinds);
  EXPECT_NE(a.lines, c.lines);
}

TEST(Workload, EveryLineParsesInTimeOrder) {
  auto w = generate_workload({2000, 2});
  ASSERT_EQ(w.lines.size(), 2000u);
  Timestamp prev{};
  for (std::size_t i = 0; i < w.lines.size(); ++i) {
    auto r = ingest::parse_apache_line(w.lines[i], i + 1);
    EXPECT_GE(r.timestamp, prev) << w.lines[i];  // CLF has one-second resolution
    prev = r.timestamp;
  }
}

TEST(Workload, AttackShareAndKinds) {
  auto w = generate_workload({5000, 1});
  const double share = static_cast<double>(w.attacks()) / 5000.0;
  EXPECT_NEAR(share, 0.3, 0.03);
  std::set<EventKind> kinds(w.kinds.begin(), w.kinds.end());
  EXPECT_EQ(kinds.size(), 4u);
}

TEST(Workload, LabelsAgreeWithRuleFlags) {
  auto w = generate_workload({3000, 6});
  auto data = workload_dataset(w, http::Ruleset::builtin());
  ASSERT_EQ(data.size(), 3000u);
  EXPECT_EQ(data.dims, kInputDims);
  for (std::size_t i = 0; i < w.lines.size(); ++i) {
    auto h = http::extract_http_features(ingest::parse_apache_line(w.lines[i], i), http::Ruleset::builtin());
    const bool flagged = h.sqli_flag > 0 || h.xss_flag > 0 || h.traversal_flag > 0;
    EXPECT_EQ(flagged, w.kinds[i] != EventKind::Benign) << w.lines[i];
    EXPECT_EQ(data.labels[i], flagged ? 1.0f : 0.0f);
  }
}

TEST(Memory, RssIsReadable) {
  EXPECT_GT(current_rss_bytes(), 0u);
  EXPECT_GE(peak_rss_bytes(), current_rss_bytes());
  MemorySampler s(std::chrono::milliseconds(5));
  std::vector<char> block(32 << 20, 1);
  std::this_thread::sleep_for(std::chrono::milliseconds(30));
  EXPECT_GE(s.stop(), 32u << 20);
  EXPECT_EQ(block[12345], 1);
}

TEST(RunBench, BatchReportShape) {
  auto w = generate_workload({2000, 3});
  pipeline::Engine e(default_model());
  auto r = run_bench(e, w.lines, BatchLoad{2000});
  EXPECT_EQ(r.mode, "batch");
  EXPECT_EQ(r.events, 2000u);
  EXPECT_GT(r.wall_time_s, 0.0);
  EXPECT_GT(r.per_event_ms.mean, 0.0);
  EXPECT_LE(r.per_event_ms.p50, r.per_event_ms.p99);
  EXPECT_GT(r.peak_memory_mb, 0.0);
  EXPECT_EQ(r.engine_id, "primary");
  EXPECT_GT(r.assessments, 0u);

  Json j = r;
  for (const char* k : {"events", "wall_time_s", "per_event_ms", "peak_memory_mb"}) EXPECT_TRUE(j.contains(k)) << k;
  EXPECT_EQ(j.get<BenchReport>(), r);
}

TEST(RunBench, SteadyHoldsTheRate) {
  auto w = generate_workload({200, 3});
  pipeline::Engine e(default_model());
  auto r = run_bench(e, w.lines, SteadyLoad{200.0, 0.5});
  EXPECT_EQ(r.mode, "steady");
  EXPECT_EQ(r.events, 100u);
  EXPECT_NEAR(r.wall_time_s, 0.5, 0.1);
  EXPECT_LT(r.per_event_ms.p99, 50.0);
}

TEST(RunBench, WorkloadCyclesWhenShort) {
  auto w = generate_workload({10, 3});
  pipeline::Engine e(default_model());
  EXPECT_EQ(run_bench(e, w.lines, BatchLoad{35}).events, 35u);
  EXPECT_THROW(run_bench(e, {}, BatchLoad{1}), Error);
}

TEST(RunBench, ReferenceEngineIsExternal) {
  EXPECT_THROW(run_reference_bench(BatchLoad{10}), EngineUnavailable);
}

TEST(Report, InvalidJsonRejected) {
  Json j = report("batch", 10, 1.0);
  j["mode"] = "burst";
  EXPECT_THROW(j.get<BenchReport>(), BadConfig);
  j = report("batch", 10, 1.0);
  j["wall_time_s"] = 0.0;
  EXPECT_THROW(j.get<BenchReport>(), BadConfig);
  j = report("batch", 10, 1.0);
  j.erase("per_event_ms");
  EXPECT_THROW(j.get<BenchReport>(), Json::exception);
}

TEST(Compare, SpeedupIsReferenceOverPrimary) {
  EXPECT_DOUBLE_EQ(speedup(report("batch", 1000, 2.0), report("batch", 1000, 2.0)), 1.0);
  EXPECT_DOUBLE_EQ(speedup(report("batch", 1000, 2.0), report("batch", 1000, 10.0)), 5.0);
}

TEST(Compare, FourStandardRows) {
  const std::vector<BenchReport> prim = {report("steady", 5000, 10.0, 0.5, 20.0), report("batch", 1000, 0.2),
                                         report("batch", 100000, 20.0, 1.0, 40.0)};
  const std::vector<BenchReport> ref = {report("steady", 5000, 10.0, 2.5, 200.0), report("batch", 1000, 1.0),
                                        report("batch", 100000, 100.0, 1.0, 80.0)};
  auto rows = compare(prim, ref);
  ASSERT_EQ(rows.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(rows[i].metric, kComparisonRows[i]);
  EXPECT_EQ(rows[0].metric, "Steady-state latency (ms/event)");
  EXPECT_DOUBLE_EQ(*rows[0].speedup, 5.0);
  EXPECT_DOUBLE_EQ(*rows[1].speedup, 5.0);
  EXPECT_DOUBLE_EQ(*rows[2].speedup, 5.0);
  EXPECT_DOUBLE_EQ(*rows[3].primary, 40.0);
  EXPECT_DOUBLE_EQ(*rows[3].reference, 200.0);

  auto j = comparison_json(rows);
  ASSERT_EQ(j.size(), 4u);
  EXPECT_EQ(j[1]["metric"], "Batch processing (1K events, s)");
  EXPECT_DOUBLE_EQ(j[1]["speedup"].get<double>(), 5.0);

  const auto table = comparison_table(rows);
  for (auto name : kComparisonRows) EXPECT_NE(table.find(std::string(name)), std::string::npos) << name;
  EXPECT_NE(table.find("5.00x"), std::string::npos);
}

TEST(Compare, MissingSideHasNoSpeedup) {
  auto rows = compare({report("batch", 1000, 1.0)}, {});
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_DOUBLE_EQ(*rows[1].primary, 1.0);
  EXPECT_FALSE(rows[1].reference);
  EXPECT_FALSE(rows[1].speedup);
  EXPECT_FALSE(rows[0].primary);
  EXPECT_TRUE(comparison_json(rows)[1]["speedup"].is_null());
  EXPECT_NE(comparison_table(rows).find("n/a"), std::string::npos);
}
