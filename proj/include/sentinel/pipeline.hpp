#pragma once

// Detection and scoring path, single-threaded (Engine) and as bus workers
// (Pipeline):
//
//   raw_events ─▶ detector ─▶ ad_events ─▶ calculator ─▶ threat_events
//                                  └──────────────┬──────────────┘
//                                         snapshot maintainer

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <stop_token>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "sentinel/core/types.hpp"
#include "sentinel/event_bus.hpp"
#include "sentinel/feature_schema.hpp"
#include "sentinel/flow_features.hpp"
#include "sentinel/http_features.hpp"
#include "sentinel/ingest.hpp"
#include "sentinel/neural/classify.hpp"
#include "sentinel/snapshot.hpp"
#include "sentinel/threat_calculator.hpp"

namespace sentinel::pipeline {

using service::EventSource;

struct Classified {
  AnomalyVerdict verdict;
  EventSource source = EventSource::Log;
};

struct DetectionOptions {
  double threshold = kDefaultDecisionThreshold;
  std::chrono::microseconds flow_idle_timeout = std::chrono::seconds{120};
  std::chrono::microseconds flow_sweep_interval = std::chrono::seconds{1};
  std::chrono::microseconds auth_window = std::chrono::seconds{60};
  std::size_t auth_threshold = 5;
};

/// Flow view of a single log record: one forward packet carrying the
/// response size, from the client to an unspecified server.
inline flow::FlowSection request_flow(const HttpRequestRecord& req) {
  PacketRecord p;
  p.timestamp = req.timestamp;
  p.src_ip = req.client_ip;
  p.dst_ip = req.client_ip.is_v6() ? *IpAddress::parse("::") : IpAddress::v4(0, 0, 0, 0);
  p.dst_port = 80;
  p.length_bytes = std::max<std::int64_t>(req.body_length, 0);
  return flow::finalize_flow(flow::update_flow(std::nullopt, p));
}

/// Flow verdicts get ids from their own space so they never collide with
/// line-numbered log events.
inline constexpr std::uint64_t kFlowEventIdBase = std::uint64_t{1} << 63;

/// Features plus classification. Log records are classified on arrival;
/// packets accumulate in a flow table and are classified when their flow
/// idles out or at flush(). Single-threaded.
class DetectionStage {
 public:
  DetectionStage(neural::ModelBundle model, http::Ruleset rules = http::Ruleset::builtin(), DetectionOptions opts = {})
      : rules_(std::move(rules)),
        detector_(std::move(model), FeatureSchema(rules_), opts.threshold),
        flows_(opts.flow_idle_timeout),
        auth_(opts.auth_window, opts.auth_threshold),
        opts_(opts) {}

  void process(const RawEvent& event, std::vector<Classified>& out) {
    if (const auto* req = std::get_if<HttpRequestRecord>(&event)) {
      out.push_back({classify(*req), EventSource::Log});
      return;
    }
    const auto& pkt = std::get<PacketRecord>(event);
    flows_.add(pkt);
    if (!swept_ || pkt.timestamp - last_sweep_ >= opts_.flow_sweep_interval) {
      swept_ = true;
      last_sweep_ = pkt.timestamp;
      for (const auto& f : flows_.expire_flows(pkt.timestamp)) out.push_back(classify(f));
    }
  }

  /// Classifies every open flow.
  void flush(std::vector<Classified>& out) {
    for (const auto& f : flows_.flush()) out.push_back(classify(f));
  }

  AnomalyVerdict classify(const HttpRequestRecord& req) {
    neural::RequestContext ctx{req.event_id, req.timestamp, req.client_ip, auth_.observe(req)};
    return detector_.classify(request_flow(req), http::extract_http_features(req, rules_), ctx);
  }

  std::size_t open_flows() const { return flows_.size(); }
  const http::Ruleset& rules() const { return rules_; }
  neural::Detector& detector() { return detector_; }

 private:
  Classified classify(const flow::FinalizedFlow& f) {
    neural::RequestContext ctx{kFlowEventIdBase | ++flow_ids_, f.last_ts, f.key.initiator_ip(), false};
    return {detector_.classify(f.features, http::HttpFeatureVector{}, ctx), EventSource::Flow};
  }

  http::Ruleset rules_;
  neural::Detector detector_;
  flow::FlowTable flows_;
  neural::AuthFailureTracker auth_;
  DetectionOptions opts_;
  Timestamp last_sweep_{};
  bool swept_ = false;
  std::uint64_t flow_ids_ = 0;
};

/// parse → features → classify → score on the calling thread.
class Engine {
 public:
  struct Step {
    std::vector<Classified> verdicts;
    std::vector<ThreatAssessment> assessments;
  };

  Engine(neural::ModelBundle model, http::Ruleset rules = http::Ruleset::builtin(), DetectionOptions det = {},
         threat::CalculatorConfig calc = {})
      : detection_(std::move(model), std::move(rules), det), calculator_(std::move(calc)) {}

  /// Appends to `step` rather than returning, so a caller can reuse buffers.
  void process(const RawEvent& event, Step& step) {
    const std::size_t first = step.verdicts.size();
    detection_.process(event, step.verdicts);
    score_from(first, step);
  }

  Step process(const RawEvent& event) {
    Step s;
    process(event, s);
    return s;
  }

  /// Throws MalformedLine on unparseable input.
  Step process_line(std::string_view line, std::uint64_t event_id = 0) {
    return process(ingest::parse_line(line, event_id));
  }

  void flush(Step& step) {
    const std::size_t first = step.verdicts.size();
    detection_.flush(step.verdicts);
    score_from(first, step);
  }

  DetectionStage& detection() { return detection_; }
  const threat::ThreatCalculator& calculator() const { return calculator_; }

 private:
  void score_from(std::size_t first, Step& step) {
    for (std::size_t i = first; i < step.verdicts.size(); ++i)
      if (auto a = calculator_.process_verdict(step.verdicts[i].verdict)) step.assessments.push_back(*a);
  }

  DetectionStage detection_;
  threat::ThreatCalculator calculator_;
};

// ---------------------------------------------------------------------------
// Bus wiring

using Clock = std::chrono::steady_clock;

struct EndOfStream {};

using Payload = std::variant<RawEvent, Classified, ThreatAssessment, EndOfStream>;

/// Bus message. `origin` is when the raw event entered the pipeline and is
/// carried through to the assessment it produced.
struct Envelope {
  Payload payload;
  Clock::time_point origin{};
};

struct Topics {
  std::string raw = "raw_events";
  std::string verdicts = "ad_events";
  std::string threats = "threat_events";
};

struct StreamEvent {
  enum class Kind { Verdict, Threat, Metrics } kind;
  Json data;
};

inline std::string_view to_string(StreamEvent::Kind k) {
  switch (k) {
    case StreamEvent::Kind::Verdict: return "verdict";
    case StreamEvent::Kind::Threat: return "threat";
    case StreamEvent::Kind::Metrics: return "metrics";
  }
  return "metrics";
}

struct PipelineConfig {
  Topics topics;
  std::size_t topic_capacity = bus::kDefaultTopicCapacity;
  DetectionOptions detection;
  threat::CalculatorConfig calculator;
  std::size_t recent_verdicts = service::kDefaultRecentVerdicts;
  std::chrono::milliseconds metrics_interval{1000};
  // Called on the snapshot thread after each state change; must not block
  // for long.
  std::function<void(const StreamEvent&)> on_stream;
};

/// Raw-event-to-threat-emission latencies, in seconds.
class LatencyRecorder {
 public:
  static constexpr std::size_t kMaxSamples = 1'000'000;

  void record(double seconds) {
    std::lock_guard lk(mu_);
    ++count_;
    if (samples_.size() < kMaxSamples) samples_.push_back(seconds);
  }

  struct Summary {
    std::size_t count = 0;
    double mean = 0, p50 = 0, p99 = 0, max = 0;
  };

  Summary summary() const {
    std::vector<double> s;
    Summary r;
    {
      std::lock_guard lk(mu_);
      s = samples_;
      r.count = count_;
    }
    if (s.empty()) return r;
    std::sort(s.begin(), s.end());
    double sum = 0;
    for (double x : s) sum += x;
    r.mean = sum / static_cast<double>(s.size());
    r.p50 = percentile(s, 0.50);
    r.p99 = percentile(s, 0.99);
    r.max = s.back();
    return r;
  }

  /// Nearest-rank percentile of sorted data.
  static double percentile(const std::vector<double>& sorted, double q) {
    if (sorted.empty()) return 0.0;
    auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(sorted.size())));
    return sorted[std::clamp<std::size_t>(rank, 1, sorted.size()) - 1];
  }

 private:
  mutable std::mutex mu_;
  std::vector<double> samples_;
  std::size_t count_ = 0;
};

/// Three workers over the bus. Events go in through publish_event() or
/// replay(); drain() pushes an end-of-stream marker through every stage,
/// joins the workers and closes the bus.
class Pipeline {
 public:
  Pipeline(neural::ModelBundle model, PipelineConfig cfg, http::Ruleset rules = http::Ruleset::builtin())
      : cfg_(std::move(cfg)), bus_(cfg_.topic_capacity), store_(cfg_.recent_verdicts) {
    bus_.create_topic(cfg_.topics.raw);
    bus_.create_topic(cfg_.topics.verdicts);
    bus_.create_topic(cfg_.topics.threats);
    // subscribe before any worker runs so nothing published early is missed
    auto raw_sub = bus_.subscribe(cfg_.topics.raw);
    auto ad_sub = bus_.subscribe(cfg_.topics.verdicts);
    const std::vector<std::string> both = {cfg_.topics.verdicts, cfg_.topics.threats};
    auto snap_sub = bus_.subscribe(both);
    auto stage = std::make_unique<DetectionStage>(std::move(model), std::move(rules), cfg_.detection);

    workers_.emplace_back([this, sub = std::move(raw_sub), stage = std::move(stage)]() mutable {
      detector_loop(sub, *stage);
    });
    workers_.emplace_back([this, sub = std::move(ad_sub)]() mutable { calculator_loop(sub); });
    workers_.emplace_back([this, sub = std::move(snap_sub)]() mutable { snapshot_loop(sub); });
  }

  Pipeline(const Pipeline&) = delete;
  Pipeline& operator=(const Pipeline&) = delete;

  ~Pipeline() {
    try {
      drain();
    } catch (...) {
      bus_.close();
      for (auto& w : workers_)
        if (w.joinable()) w.join();
    }
  }

  void publish_event(RawEvent event) {
    bus_.publish(cfg_.topics.raw, Envelope{std::move(event), Clock::now()});
  }

  /// Bypasses the detector, as if it had emitted `v`.
  void publish_verdict(const AnomalyVerdict& v, EventSource source = EventSource::Log) {
    bus_.publish(cfg_.topics.verdicts, Envelope{Classified{v, source}, Clock::now()});
  }

  ingest::ReplayReport replay(const ingest::ReplayPlan& plan, std::stop_token stop = {}) {
    return ingest::replay(plan, [this](RawEvent e) { publish_event(std::move(e)); }, stop);
  }

  /// Idempotent. Everything published before the call is processed first.
  void drain() {
    std::lock_guard lk(drain_mu_);
    if (drained_) return;
    drained_ = true;
    try {
      bus_.publish(cfg_.topics.raw, Envelope{EndOfStream{}, Clock::now()});
    } catch (const BusClosed&) {
      // a worker failed and closed the bus; its error is rethrown below
    }
    for (auto& w : workers_)
      if (w.joinable()) w.join();
    bus_.close();
    if (worker_error_) std::rethrow_exception(worker_error_);
  }

  /// Point-in-time copy of the dashboard state.
  service::DashboardSnapshot snapshot() const { return store_.snapshot(); }
  const service::SnapshotStore& store() const { return store_; }
  LatencyRecorder::Summary latency() const { return latency_.summary(); }
  std::uint64_t assessments_emitted() const { return assessments_.load(); }
  const PipelineConfig& config() const { return cfg_; }

 private:
  using Bus = bus::EventBus<Envelope>;

  template <typename Fn>
  void guarded(Fn&& fn) {
    try {
      fn();
    } catch (const BusClosed&) {
    } catch (...) {
      {
        std::lock_guard lk(error_mu_);
        if (!worker_error_) worker_error_ = std::current_exception();
      }
      bus_.close();
    }
  }

  void detector_loop(Bus::Subscription& sub, DetectionStage& stage) {
    guarded([&] {
      std::vector<Classified> out;
      while (auto d = sub.receive()) {
        auto& env = d->message;
        out.clear();
        if (std::holds_alternative<EndOfStream>(env.payload)) {
          stage.flush(out);
          for (auto& c : out) bus_.publish(cfg_.topics.verdicts, Envelope{c, env.origin});
          bus_.publish(cfg_.topics.verdicts, Envelope{EndOfStream{}, env.origin});
          return;
        }
        if (auto* raw = std::get_if<RawEvent>(&env.payload)) stage.process(*raw, out);
        for (auto& c : out) bus_.publish(cfg_.topics.verdicts, Envelope{c, env.origin});
      }
    });
  }

  void calculator_loop(Bus::Subscription& sub) {
    guarded([&] {
      threat::ThreatCalculator calc(cfg_.calculator);
      while (auto d = sub.receive()) {
        auto& env = d->message;
        if (std::holds_alternative<EndOfStream>(env.payload)) {
          bus_.publish(cfg_.topics.threats, Envelope{EndOfStream{}, env.origin});
          return;
        }
        if (auto* c = std::get_if<Classified>(&env.payload))
          if (auto a = calc.process_verdict(c->verdict)) bus_.publish(cfg_.topics.threats, Envelope{*a, env.origin});
      }
    });
  }

  void snapshot_loop(Bus::Subscription& sub) {
    guarded([&] {
      auto last_metrics = Clock::now();
      auto emit = [&](StreamEvent::Kind kind, Json data) {
        if (cfg_.on_stream) cfg_.on_stream(StreamEvent{kind, std::move(data)});
      };
      auto emit_metrics = [&] {
        last_metrics = Clock::now();
        if (cfg_.on_stream) emit(StreamEvent::Kind::Metrics, service::metrics_json(store_.snapshot()));
      };
      while (auto d = sub.receive()) {
        auto& env = d->message;
        const bool from_threats = d->topic == cfg_.topics.threats;
        if (std::holds_alternative<EndOfStream>(env.payload)) {
          if (from_threats) {
            emit_metrics();
            return;
          }
          continue;
        }
        if (auto* c = std::get_if<Classified>(&env.payload)) {
          store_.apply(c->verdict, c->source);
          emit(StreamEvent::Kind::Verdict, Json(c->verdict));
        } else if (auto* a = std::get_if<ThreatAssessment>(&env.payload)) {
          store_.apply(*a);
          ++assessments_;
          emit(StreamEvent::Kind::Threat, Json(*a));
          latency_.record(std::chrono::duration<double>(Clock::now() - env.origin).count());
        }
        if (Clock::now() - last_metrics >= cfg_.metrics_interval) emit_metrics();
      }
    });
  }

  PipelineConfig cfg_;
  Bus bus_;
  service::SnapshotStore store_;
  LatencyRecorder latency_;
  std::atomic<std::uint64_t> assessments_{0};
  std::vector<std::thread> workers_;
  std::mutex drain_mu_;
  bool drained_ = false;
  std::mutex error_mu_;
  std::exception_ptr worker_error_;
};

}  // namespace sentinel::pipeline
