#pragma once

// Benchmark harness: a seeded access-log workload, single-threaded timing of
// the analytic path, resident-memory sampling and report comparison.

#include <unistd.h>

#include <algorithm>
#include <array>
#include <atomic>
#include <cctype>
#include <chrono>
#include <condition_variable>
#include <ctime>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "sentinel/core/error.hpp"
#include "sentinel/core/wire.hpp"
#include "sentinel/feature_schema.hpp"
#include "sentinel/ingest.hpp"
#include "sentinel/neural/train.hpp"
#include "sentinel/pipeline.hpp"

namespace sentinel::bench {

// ---------------------------------------------------------------------------
// Workload

enum class EventKind : std::uint8_t { Benign, SqlInjection, Xss, PathTraversal };

struct WorkloadConfig {
  std::size_t events = 1000;
  std::uint64_t seed = 1;
  double attack_fraction = 0.3;
  std::int64_t start_us = 1'760'104'536'000'000;  // 2025-10-10T13:55:36Z
  std::int64_t spacing_us = 10'000;
};

struct Workload {
  std::vector<std::string> lines;  // Combined Log Format
  std::vector<EventKind> kinds;

  std::size_t attacks() const {
    return static_cast<std::size_t>(std::count_if(kinds.begin(), kinds.end(), [](EventKind k) { return k != EventKind::Benign; }));
  }
};

namespace detail {

inline bool unreserved(unsigned char c) {
  return std::isalnum(c) || c == '-' || c == '.' || c == '_' || c == '~';
}

/// Percent-encodes everything outside the unreserved set and `keep`.
inline std::string encode(std::string_view s, std::string_view keep = "") {
  static constexpr char kHex[] = "0123456789ABCDEF";
  std::string out;
  for (unsigned char c : s) {
    if (unreserved(c) || keep.find(static_cast<char>(c)) != std::string_view::npos) {
      out.push_back(static_cast<char>(c));
    } else {
      out.push_back('%');
      out.push_back(kHex[c >> 4]);
      out.push_back(kHex[c & 15]);
    }
  }
  return out;
}

/// Request-line-safe form of a payload at encoding depth 1, 2 or 3; depth 1
/// keeps URL punctuation readable, deeper levels re-encode the percent signs.
inline std::string encode_depth(std::string_view payload, int depth) {
  std::string s = encode(payload, "/=&'()*,;:!");
  for (int d = 1; d < depth; ++d) s = encode(s);
  return s;
}

template <typename T, std::size_t N>
const T& pick(std::mt19937_64& rng, const std::array<T, N>& xs) {
  return xs[rng() % N];
}

inline constexpr std::array<std::string_view, 14> kBenignPaths = {
    "/", "/index.html", "/about", "/contact", "/products", "/static/css/site.css", "/static/js/app.js",
    "/images/logo.png", "/favicon.ico", "/blog", "/docs/getting-started", "/pricing", "/robots.txt", "/account"};
inline constexpr std::array<std::string_view, 10> kWords = {"shoes", "red", "laptop", "garden", "books",
                                                            "coffee", "winter", "sale", "news", "music"};
inline constexpr std::array<std::string_view, 5> kAgents = {
    "Mozilla/5.0 (Windows NT 10.0; Win64; x64) AppleWebKit/537.36 (KHTML, like Gecko) Chrome/126.0 Safari/537.36",
    "Mozilla/5.0 (Macintosh; Intel Mac OS X 14_5) AppleWebKit/605.1.15 (KHTML, like Gecko) Version/17.5 Safari/605.1.15",
    "Mozilla/5.0 (X11; Linux x86_64; rv:128.0) Gecko/20100101 Firefox/128.0", "curl/8.5.0",
    "Mozilla/5.0 (iPhone; CPU iPhone OS 17_5 like Mac OS X) AppleWebKit/605.1.15 Mobile/15E148"};
inline constexpr std::array<std::string_view, 8> kSqli = {
    "1' OR 1=1--", "1 UNION SELECT username,password FROM users", "1 union all select null,null,version()",
    "1'; DROP TABLE users;--", "1 AND SLEEP(5)", "x' or '1'='1", "1 AND BENCHMARK(1000000,MD5(1))",
    "-1 UNION/**/SELECT 1,2,3"};
inline constexpr std::array<std::string_view, 6> kXss = {
    "<script>alert(1)</script>", "<img src=x onerror=alert(document.cookie)>", "javascript:alert(1)",
    "<svg onload=alert(1)>", "\"><script src=//evil.example/x.js></script>", "<body onload=steal()>"};
inline constexpr std::array<std::string_view, 5> kTraversal = {
    "../../../../etc/passwd", "..\\..\\..\\windows\\system32\\drivers\\etc\\hosts", "../../../etc/shadow",
    "....//....//....//etc/passwd", "/var/www/../../etc/passwd"};
inline constexpr std::array<std::string_view, 4> kParams = {"id", "q", "page", "item"};

inline std::string format_clf_time(std::int64_t us) {
  const std::time_t secs = static_cast<std::time_t>(us / 1'000'000);
  std::tm tm{};
  ::gmtime_r(&secs, &tm);
  char buf[40];
  std::strftime(buf, sizeof buf, "%d/%b/%Y:%H:%M:%S +0000", &tm);
  return buf;
}

}  // namespace detail

/// Same config, same lines. Benign clients come from 16 /24s, attackers
/// from 3, so attacks also build subnet clusters.
inline Workload generate_workload(const WorkloadConfig& cfg) {
  using namespace detail;
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Workload w;
  w.lines.reserve(cfg.events);
  w.kinds.reserve(cfg.events);
  for (std::size_t i = 0; i < cfg.events; ++i) {
    const bool attack = u(rng) < cfg.attack_fraction;
    EventKind kind = EventKind::Benign;
    if (attack) kind = static_cast<EventKind>(1 + rng() % 3);

    std::string ip;
    if (attack)
      ip = "203.0." + std::to_string(113 + rng() % 3) + "." + std::to_string(1 + rng() % 20);
    else
      ip = "10." + std::to_string(rng() % 4) + "." + std::to_string(rng() % 4) + "." + std::to_string(1 + rng() % 250);

    std::string method = "GET", target;
    int status = 200;
    std::int64_t bytes = 0;
    const int depth = 1 + static_cast<int>(rng() % 3) / 2;  // depth 2 one time in three
    switch (kind) {
      case EventKind::Benign: {
        const double r = u(rng);
        if (r < 0.55) {
          target = std::string(pick(rng, kBenignPaths));
        } else if (r < 0.75) {
          target = "/search?q=" + std::string(pick(rng, kWords)) + "+" + std::string(pick(rng, kWords));
        } else if (r < 0.9) {
          target = "/products/" + std::to_string(rng() % 5000) + "?page=" + std::to_string(1 + rng() % 9) + "&sort=price";
        } else {
          method = "POST";
          target = rng() % 2 ? "/login" : "/cart/add";
        }
        const double s = u(rng);
        status = s < 0.8 ? 200 : s < 0.88 ? 304 : s < 0.96 ? 404 : 301;
        bytes = status == 304 ? 0 : static_cast<std::int64_t>(200 + rng() % 40'000);
        break;
      }
      case EventKind::SqlInjection:
        target = "/" + std::string(rng() % 2 ? "products" : "item") + "?" + std::string(pick(rng, kParams)) + "=" +
                 encode_depth(pick(rng, kSqli), depth);
        status = rng() % 2 ? 500 : 200;
        bytes = static_cast<std::int64_t>(100 + rng() % 3000);
        break;
      case EventKind::Xss:
        target = "/search?q=" + encode_depth(pick(rng, kXss), depth);
        status = 200;
        bytes = static_cast<std::int64_t>(500 + rng() % 8000);
        break;
      case EventKind::PathTraversal:
        if (rng() % 2)
          target = "/download?file=" + encode_depth(pick(rng, kTraversal), depth);
        else
          target = "/static/" + encode_depth(pick(rng, kTraversal), depth);
        status = rng() % 2 ? 403 : 404;
        bytes = static_cast<std::int64_t>(rng() % 600);
        break;
    }
    const std::int64_t t = cfg.start_us + static_cast<std::int64_t>(i) * cfg.spacing_us;
    std::string line = ip + " - - [" + format_clf_time(t) + "] \"" + method + " " + target + " HTTP/1.1\" " +
                       std::to_string(status) + " " + std::to_string(bytes) + " \"-\" \"" +
                       std::string(pick(rng, kAgents)) + "\"";
    w.lines.push_back(std::move(line));
    w.kinds.push_back(kind);
  }
  return w;
}

inline void write_lines(const std::vector<std::string>& lines, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path);
  for (const auto& l : lines) out << l << '\n';
  if (!out) throw Error("write failed for " + path);
}

/// Model inputs and labels for the workload, as the detector would see them.
inline neural::Dataset workload_dataset(const Workload& w, const http::Ruleset& rules = http::Ruleset::builtin()) {
  neural::Dataset data;
  for (std::size_t i = 0; i < w.lines.size(); ++i) {
    auto req = ingest::parse_apache_line(w.lines[i], i + 1);
    auto x = assemble_input(pipeline::request_flow(req), http::extract_http_features(req, rules));
    data.add(x, w.kinds[i] == EventKind::Benign ? 0 : 1);
  }
  return data;
}

// ---------------------------------------------------------------------------
// Memory

/// Resident set size in bytes, from /proc/self/statm.
inline std::size_t current_rss_bytes() {
  std::ifstream in("/proc/self/statm");
  std::size_t pages_total = 0, pages_resident = 0;
  if (!(in >> pages_total >> pages_resident)) return 0;
  return pages_resident * static_cast<std::size_t>(::sysconf(_SC_PAGESIZE));
}

/// VmHWM in bytes, or 0 when unavailable.
inline std::size_t peak_rss_bytes() {
  std::ifstream in("/proc/self/status");
  std::string key;
  while (in >> key) {
    if (key == "VmHWM:") {
      std::size_t kb = 0;
      in >> kb;
      return kb * 1024;
    }
    std::getline(in, key);
  }
  return 0;
}

/// Resets VmHWM to the current RSS; false if the kernel refused.
inline bool reset_peak_rss() {
  std::ofstream out("/proc/self/clear_refs");
  if (!out) return false;
  out << "5";
  out.flush();
  return static_cast<bool>(out);
}

/// Samples RSS every `interval` on a background thread. The peak also takes
/// the kernel high-water mark into account when it could be reset at start.
class MemorySampler {
 public:
  explicit MemorySampler(std::chrono::milliseconds interval = std::chrono::milliseconds{100})
      : hwm_reset_(reset_peak_rss()), peak_(current_rss_bytes()) {
    thread_ = std::jthread([this, interval](std::stop_token st) {
      std::mutex m;
      std::condition_variable_any cv;
      std::unique_lock lk(m);
      while (!st.stop_requested()) {
        bump(current_rss_bytes());
        cv.wait_for(lk, st, interval, [] { return false; });
      }
    });
  }

  ~MemorySampler() { stop(); }

  /// Stops sampling and returns the peak in bytes.
  std::size_t stop() {
    if (thread_.joinable()) {
      thread_.request_stop();
      thread_.join();
      bump(current_rss_bytes());
      if (hwm_reset_) bump(peak_rss_bytes());
    }
    return peak_.load();
  }

  std::size_t peak_bytes() const { return peak_.load(); }

 private:
  void bump(std::size_t v) {
    auto cur = peak_.load();
    while (v > cur && !peak_.compare_exchange_weak(cur, v)) {
    }
  }

  bool hwm_reset_;
  std::atomic<std::size_t> peak_;
  std::jthread thread_;
};

// ---------------------------------------------------------------------------
// Reports

struct SteadyLoad {
  double rate = 500.0;  // events per second
  double duration_s = 10.0;
};
struct BatchLoad {
  std::size_t events = 1000;
};
using BenchWorkload = std::variant<SteadyLoad, BatchLoad>;

struct PerEventMs {
  double mean = 0, p50 = 0, p99 = 0;
  bool operator==(const PerEventMs&) const = default;
};

struct BenchReport {
  std::string mode;  // "steady" | "batch"
  std::uint64_t events = 0;
  double wall_time_s = 0;
  PerEventMs per_event_ms;
  double peak_memory_mb = 0;
  std::string engine_id = "primary";
  std::uint64_t assessments = 0;

  bool operator==(const BenchReport&) const = default;
};

inline void to_json(Json& j, const BenchReport& r) {
  j = Json{{"mode", r.mode},
           {"events", r.events},
           {"wall_time_s", r.wall_time_s},
           {"per_event_ms", {{"mean", r.per_event_ms.mean}, {"p50", r.per_event_ms.p50}, {"p99", r.per_event_ms.p99}}},
           {"peak_memory_mb", r.peak_memory_mb},
           {"engine_id", r.engine_id},
           {"assessments", r.assessments}};
}

inline void from_json(const Json& j, BenchReport& r) {
  r.mode = j.at("mode").get<std::string>();
  r.events = j.at("events").get<std::uint64_t>();
  r.wall_time_s = j.at("wall_time_s").get<double>();
  const auto& p = j.at("per_event_ms");
  r.per_event_ms = {p.at("mean").get<double>(), p.at("p50").get<double>(), p.at("p99").get<double>()};
  r.peak_memory_mb = j.at("peak_memory_mb").get<double>();
  r.engine_id = j.value("engine_id", std::string("primary"));
  r.assessments = j.value("assessments", std::uint64_t{0});
  if (r.mode != "steady" && r.mode != "batch") throw BadConfig("report mode must be steady or batch");
  if (!(r.wall_time_s > 0)) throw BadConfig("report wall_time_s must be > 0");
}

/// Drives pre-materialized lines through `engine` on this thread. In steady
/// mode an event's latency runs from its scheduled time, so falling behind
/// the rate shows up as queueing delay.
inline BenchReport run_bench(pipeline::Engine& engine, const std::vector<std::string>& lines,
                             const BenchWorkload& workload) {
  using Clock = std::chrono::steady_clock;
  if (lines.empty()) throw Error("benchmark needs at least one event");
  const auto* steady = std::get_if<SteadyLoad>(&workload);
  std::size_t n = 0;
  if (steady) {
    if (!(steady->rate > 0) || !(steady->duration_s > 0)) throw Error("steady rate and duration must be > 0");
    n = static_cast<std::size_t>(std::llround(steady->rate * steady->duration_s));
  } else {
    n = std::get<BatchLoad>(workload).events;
  }
  if (n == 0) throw Error("benchmark needs at least one event");

  BenchReport report;
  report.mode = steady ? "steady" : "batch";
  report.events = n;
  std::vector<double> ms;
  ms.reserve(n);
  pipeline::Engine::Step step;
  MemorySampler memory;
  const auto start = Clock::now();
  for (std::size_t i = 0; i < n; ++i) {
    auto t0 = Clock::now();
    if (steady) {
      const auto due = start + std::chrono::duration_cast<Clock::duration>(
                                   std::chrono::duration<double>(static_cast<double>(i) / steady->rate));
      std::this_thread::sleep_until(due);
      t0 = due;
    }
    step.verdicts.clear();
    step.assessments.clear();
    try {
      engine.process(ingest::parse_line(lines[i % lines.size()], i + 1), step);
    } catch (const MalformedLine&) {
    }
    report.assessments += step.assessments.size();
    ms.push_back(std::chrono::duration<double, std::milli>(Clock::now() - t0).count());
  }
  report.wall_time_s = std::chrono::duration<double>(Clock::now() - start).count();
  report.peak_memory_mb = static_cast<double>(memory.stop()) / (1024.0 * 1024.0);

  double sum = 0;
  for (double x : ms) sum += x;
  std::sort(ms.begin(), ms.end());
  report.per_event_ms = {sum / static_cast<double>(n), pipeline::LatencyRecorder::percentile(ms, 0.50),
                         pipeline::LatencyRecorder::percentile(ms, 0.99)};
  return report;
}

/// The baseline engine lives outside this process.
inline BenchReport run_reference_bench(const BenchWorkload&) {
  throw EngineUnavailable("the reference engine is not built into this binary; run its own bench and pass the report to compare");
}

// ---------------------------------------------------------------------------
// Comparison

inline double speedup(const BenchReport& primary, const BenchReport& reference) {
  return reference.wall_time_s / primary.wall_time_s;
}

struct ComparisonRow {
  std::string metric;
  std::optional<double> reference;
  std::optional<double> primary;
  std::optional<double> speedup;
};

inline constexpr std::array<std::string_view, 4> kComparisonRows = {
    "Steady-state latency (ms/event)", "Batch processing (1K events, s)", "Batch processing (100K events, s)",
    "Memory usage (MB)"};

/// Lines up two report sets on the four standard rows; each speedup is
/// reference / primary. A row with a side missing has no speedup.
inline std::vector<ComparisonRow> compare(const std::vector<BenchReport>& primary,
                                          const std::vector<BenchReport>& reference) {
  auto find = [](const std::vector<BenchReport>& rs, std::string_view mode, std::optional<std::uint64_t> events)
      -> const BenchReport* {
    for (const auto& r : rs)
      if (r.mode == mode && (!events || r.events == *events)) return &r;
    return nullptr;
  };
  auto peak = [](const std::vector<BenchReport>& rs) -> std::optional<double> {
    if (rs.empty()) return std::nullopt;
    double m = 0;
    for (const auto& r : rs) m = std::max(m, r.peak_memory_mb);
    return m;
  };
  std::vector<ComparisonRow> rows;
  auto add = [&](std::string_view name, std::optional<double> ref, std::optional<double> prim) {
    ComparisonRow row{std::string(name), ref, prim, std::nullopt};
    if (ref && prim && *prim > 0) row.speedup = *ref / *prim;
    rows.push_back(std::move(row));
  };
  auto steady_ms = [&](const std::vector<BenchReport>& rs) -> std::optional<double> {
    if (auto* r = find(rs, "steady", std::nullopt)) return r->per_event_ms.mean;
    return std::nullopt;
  };
  auto batch_s = [&](const std::vector<BenchReport>& rs, std::uint64_t n) -> std::optional<double> {
    if (auto* r = find(rs, "batch", n)) return r->wall_time_s;
    return std::nullopt;
  };
  add(kComparisonRows[0], steady_ms(reference), steady_ms(primary));
  add(kComparisonRows[1], batch_s(reference, 1'000), batch_s(primary, 1'000));
  add(kComparisonRows[2], batch_s(reference, 100'000), batch_s(primary, 100'000));
  add(kComparisonRows[3], peak(reference), peak(primary));
  return rows;
}

inline Json comparison_json(const std::vector<ComparisonRow>& rows) {
  Json out = Json::array();
  auto opt = [](const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); };
  for (const auto& r : rows)
    out.push_back({{"metric", r.metric}, {"reference", opt(r.reference)}, {"primary", opt(r.primary)},
                   {"speedup", opt(r.speedup)}});
  return out;
}

inline std::string comparison_table(const std::vector<ComparisonRow>& rows) {
  std::ostringstream os;
  auto cell = [](const std::optional<double>& v, const char* suffix = "") {
    if (!v) return std::string("n/a");
    std::ostringstream c;
    c << std::fixed << std::setprecision(*v < 10 ? 2 : 1) << *v << suffix;
    return c.str();
  };
  os << std::left << std::setw(36) << "Metric" << std::right << std::setw(12) << "Reference" << std::setw(12)
     << "Primary" << std::setw(10) << "Speedup" << '\n';
  for (const auto& r : rows)
    os << std::left << std::setw(36) << r.metric << std::right << std::setw(12) << cell(r.reference) << std::setw(12)
       << cell(r.primary) << std::setw(10) << cell(r.speedup, "x") << '\n';
  return os.str();
}

}  // namespace sentinel::bench
