#pragma once

// HTTP front end over the pipeline:
//   GET  /api/status            current assessment
//   GET  /api/events?limit=N    newest verdicts, N ≤ 1000
//   GET  /api/metrics           counters and per-minute histogram
//   GET  /api/stream            server-sent events: verdict, threat, metrics
//   POST /api/chat              NDJSON stream of an assistant answer

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <deque>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "sentinel/core/error.hpp"
#include "sentinel/core/wire.hpp"
#include "sentinel/ingest.hpp"
#include "sentinel/neural/serialize.hpp"
#include "sentinel/pipeline.hpp"
#include "sentinel/snapshot.hpp"
#include "sentinel/threat_calculator.hpp"

namespace sentinel::service {

inline constexpr std::size_t kMaxChatMessageBytes = 4096;
inline constexpr std::size_t kMaxEventsLimit = 1000;
inline constexpr std::size_t kDefaultEventsLimit = 100;

// ---------------------------------------------------------------------------
// Configuration

struct ChatConfig {
  std::string endpoint_url;  // empty: offline only
  std::string model;
  std::string api_key_env = "SS_CHAT_KEY";
  std::chrono::seconds timeout{20};
};

struct IngestConfig {
  ingest::ReplayPlan plan;
};

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  pipeline::Topics topics;
  std::size_t topic_capacity = bus::kDefaultTopicCapacity;
  std::string model_path;
  std::string ruleset_path;  // empty: built-in rules
  double decision_threshold = kDefaultDecisionThreshold;
  threat::CalculatorConfig calculator;
  ChatConfig chat;
  std::string knowledge_base_path;
  std::string static_dir;
  std::size_t recent_verdicts = kDefaultRecentVerdicts;
  std::chrono::milliseconds heartbeat{15'000};
  std::chrono::milliseconds metrics_interval{1'000};
  std::size_t stream_queue_limit = 10'000;
  std::optional<IngestConfig> ingest;
};

/// Relative paths are taken from `base_dir`.
inline ServiceConfig service_config_from_json(const Json& j, const std::filesystem::path& base_dir = ".") {
  if (!j.is_object()) throw BadConfig("service config must be a JSON object");
  auto path_of = [&](const Json& v) {
    std::filesystem::path p = v.get<std::string>();
    return (p.is_absolute() ? p : base_dir / p).lexically_normal().string();
  };
  ServiceConfig c;
  try {
    if (auto l = j.find("listen"); l != j.end()) {
      c.host = l->value("host", c.host);
      c.port = l->value("port", c.port);
    }
    if (auto t = j.find("topics"); t != j.end()) {
      c.topics.raw = t->value("raw", c.topics.raw);
      c.topics.verdicts = t->value("verdicts", c.topics.verdicts);
      c.topics.threats = t->value("threats", c.topics.threats);
    }
    c.topic_capacity = j.value("topic_capacity", c.topic_capacity);
    if (j.contains("model_path")) c.model_path = path_of(j.at("model_path"));
    if (j.contains("ruleset_path") && !j.at("ruleset_path").is_null()) c.ruleset_path = path_of(j.at("ruleset_path"));
    c.decision_threshold = j.value("decision_threshold", c.decision_threshold);
    if (j.contains("calculator")) c.calculator = threat::calculator_config_from_json(j.at("calculator"));
    if (auto ch = j.find("chat"); ch != j.end() && !ch->is_null()) {
      c.chat.endpoint_url = ch->value("endpoint_url", std::string());
      c.chat.model = ch->value("model", std::string());
      c.chat.api_key_env = ch->value("api_key_env", c.chat.api_key_env);
      c.chat.timeout = std::chrono::seconds{ch->value("timeout_s", 20)};
    }
    if (j.contains("knowledge_base_path")) c.knowledge_base_path = path_of(j.at("knowledge_base_path"));
    if (j.contains("static_dir") && !j.at("static_dir").is_null()) c.static_dir = path_of(j.at("static_dir"));
    c.recent_verdicts = j.value("recent_verdicts", c.recent_verdicts);
    if (j.contains("heartbeat_s"))
      c.heartbeat = std::chrono::milliseconds{std::llround(j.at("heartbeat_s").get<double>() * 1000)};
    if (auto in = j.find("ingest"); in != j.end() && !in->is_null()) {
      IngestConfig ic;
      ic.plan.source_path = path_of(in->at("path"));
      if (in->contains("rate"))
        ic.plan.mode = ingest::Steady{in->at("rate").get<double>()};
      else
        ic.plan.mode = ingest::Batch{};
      ic.plan.loop_count = in->value("loop", 1);
      c.ingest = ic;
    }
  } catch (const Json::exception& e) {
    throw BadConfig(std::string("service config: ") + e.what());
  }
  if (c.port < 0 || c.port > 65535) throw BadConfig("listen.port must be in [0, 65535]");
  if (c.model_path.empty()) throw BadConfig("model_path is required");
  if (!(c.decision_threshold >= 0 && c.decision_threshold <= 1)) throw BadConfig("decision_threshold must be in [0,1]");
  if (c.topic_capacity < 1) throw BadConfig("topic_capacity must be ≥ 1");
  if (c.recent_verdicts > kMaxEventsLimit) throw BadConfig("recent_verdicts must be ≤ 1000");
  if (c.heartbeat.count() <= 0) throw BadConfig("heartbeat_s must be > 0");
  if (c.ingest) {
    if (c.ingest->plan.loop_count < 1) throw BadConfig("ingest.loop must be ≥ 1");
    if (auto* s = std::get_if<ingest::Steady>(&c.ingest->plan.mode); s && !(s->rate > 0))
      throw BadConfig("ingest.rate must be > 0");
  }
  if (!c.chat.endpoint_url.empty() && !c.chat.endpoint_url.starts_with("http://") &&
      !c.chat.endpoint_url.starts_with("https://"))
    throw BadConfig("chat.endpoint_url must be an http(s) URL");
  return c;
}

inline ServiceConfig load_service_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw BadConfig("cannot open config " + path);
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::exception& e) {
    throw BadConfig("config " + path + ": " + e.what());
  }
  return service_config_from_json(j, std::filesystem::path(path).parent_path());
}

// ---------------------------------------------------------------------------
// Chat

/// Markdown Q&A entries: each `## Title` starts an entry; an optional
/// `keywords:` line lists comma-separated lookup terms.
class KnowledgeBase {
 public:
  struct Entry {
    std::string title;
    std::vector<std::string> keywords;
    std::string body;
  };

  static KnowledgeBase parse(std::string_view text) {
    KnowledgeBase kb;
    std::istringstream in{std::string(text)};
    std::string line;
    Entry* cur = nullptr;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.starts_with("## ")) {
        kb.entries_.push_back({trim(line.substr(3)), {}, {}});
        cur = &kb.entries_.back();
        continue;
      }
      if (!cur) continue;
      if (line.starts_with("keywords:")) {
        std::istringstream ks(line.substr(9));
        std::string k;
        while (std::getline(ks, k, ','))
          if (auto t = lower(trim(k)); !t.empty()) cur->keywords.push_back(t);
        continue;
      }
      cur->body += line;
      cur->body += '\n';
    }
    for (auto& e : kb.entries_) e.body = trim(e.body);
    return kb;
  }

  static KnowledgeBase load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw BadConfig("cannot open knowledge base " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
  }

  /// Entry with the most keyword hits in `message`; ties go to the earlier
  /// entry. Title words count as keywords.
  const Entry* lookup(std::string_view message) const {
    const std::string m = lower(std::string(message));
    const Entry* best = nullptr;
    std::size_t best_hits = 0;
    for (const auto& e : entries_) {
      std::size_t hits = 0;
      for (const auto& k : e.keywords) hits += m.find(k) != std::string::npos;
      if (hits == 0 && m.find(lower(e.title)) != std::string::npos) hits = 1;
      if (hits > best_hits) {
        best = &e;
        best_hits = hits;
      }
    }
    return best;
  }

  const std::vector<Entry>& entries() const { return entries_; }

 private:
  static std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\n");
    if (b == std::string::npos) return {};
    return s.substr(b, s.find_last_not_of(" \t\n") - b + 1);
  }
  static std::string lower(std::string s) {
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
  }

  std::vector<Entry> entries_;
};

struct ChatAnswer {
  std::string text;
  bool offline = true;
  std::string source;  // knowledge-base entry title, when offline
  std::string error;   // upstream failure that forced the offline answer
};

class UpstreamFailure : public Error {
 public:
  using Error::Error;
};

/// Sends the message to an OpenAI-style chat-completions endpoint, or
/// answers from the knowledge base when none is configured.
class ChatProxy {
 public:
  ChatProxy(ChatConfig cfg, KnowledgeBase kb) : cfg_(std::move(cfg)), kb_(std::move(kb)) {}

  bool configured() const { return !cfg_.endpoint_url.empty(); }

  ChatAnswer offline_answer(std::string_view message) const {
    ChatAnswer a;
    if (const auto* e = kb_.lookup(message)) {
      a.text = e->title + "\n\n" + e->body;
      a.source = e->title;
    } else {
      a.text = "No offline entry matches that question. Topics available:";
      for (const auto& e : kb_.entries()) a.text += "\n- " + e.title;
    }
    return a;
  }

  /// Throws UpstreamFailure when the endpoint errors or replies unusably.
  ChatAnswer ask_upstream(std::string_view message) const {
    const auto& url = cfg_.endpoint_url;
    const auto scheme_end = url.find("://");
    const auto path_start = url.find('/', scheme_end + 3);
    const std::string base = url.substr(0, path_start);
    const std::string path = path_start == std::string::npos ? "/" : url.substr(path_start);

    httplib::Client cli(base);
    cli.set_connection_timeout(cfg_.timeout);
    cli.set_read_timeout(cfg_.timeout);
    httplib::Headers headers;
    if (const char* key = std::getenv(cfg_.api_key_env.c_str()); key && *key)
      headers.emplace("Authorization", std::string("Bearer ") + key);
    const Json body{{"model", cfg_.model},
                    {"stream", false},
                    {"messages", Json::array({{{"role", "user"}, {"content", std::string(message)}}})}};
    auto res = cli.Post(path, headers, body.dump(), "application/json");
    if (!res) throw UpstreamFailure("chat endpoint unreachable: " + httplib::to_string(res.error()));
    if (res->status != 200) throw UpstreamFailure("chat endpoint returned HTTP " + std::to_string(res->status));
    try {
      auto j = Json::parse(res->body);
      ChatAnswer a;
      a.text = j.at("choices").at(0).at("message").at("content").get<std::string>();
      a.offline = false;
      return a;
    } catch (const Json::exception& e) {
      throw UpstreamFailure(std::string("chat endpoint reply unusable: ") + e.what());
    }
  }

 private:
  ChatConfig cfg_;
  KnowledgeBase kb_;
};

/// Splits text into chunks of about `size` bytes at spaces.
/// Pieces of at most `size` bytes, split after a space when one is in reach
/// and never inside a UTF-8 sequence.
inline std::vector<std::string> chunk_text(std::string_view text, std::size_t size = 48) {
  std::vector<std::string> out;
  size = std::max<std::size_t>(size, 4);
  while (!text.empty()) {
    std::size_t cut = text.size();
    if (cut > size) {
      const auto sp = text.rfind(' ', size - 1);
      if (sp != std::string_view::npos && sp > 0) {
        cut = sp + 1;
      } else {
        cut = size;
        while (cut > 0 && (static_cast<unsigned char>(text[cut]) & 0xC0) == 0x80) --cut;
      }
    }
    out.emplace_back(text.substr(0, cut));
    text.remove_prefix(cut);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Server-sent events

inline std::string sse_frame(std::string_view event, const Json& data) {
  return "event: " + std::string(event) + "\ndata: " + data.dump() + "\n\n";
}

/// Fan-out of stream events to connected clients. A client whose queue
/// overflows is disconnected rather than silently skipped.
class StreamHub {
 public:
  struct Client {
    std::mutex mu;
    std::condition_variable cv;
    std::deque<std::string> frames;
    bool closed = false;
  };

  explicit StreamHub(std::size_t queue_limit = 10'000) : limit_(queue_limit) {}

  std::shared_ptr<Client> connect() {
    auto c = std::make_shared<Client>();
    std::lock_guard lk(mu_);
    if (shut_) c->closed = true;
    clients_.insert(c);
    return c;
  }

  void disconnect(const std::shared_ptr<Client>& c) {
    {
      std::lock_guard lk(mu_);
      clients_.erase(c);
    }
    close(*c);
  }

  void broadcast(std::string_view event, const Json& data) {
    const std::string frame = sse_frame(event, data);
    std::lock_guard lk(mu_);
    for (const auto& c : clients_) {
      std::lock_guard cl(c->mu);
      if (c->closed) continue;
      if (c->frames.size() >= limit_) {
        c->closed = true;
      } else {
        c->frames.push_back(frame);
      }
      c->cv.notify_all();
    }
  }

  void close_all() {
    std::lock_guard lk(mu_);
    shut_ = true;
    for (const auto& c : clients_) close(*c);
  }

  std::size_t client_count() const {
    std::lock_guard lk(mu_);
    return clients_.size();
  }

 private:
  static void close(Client& c) {
    std::lock_guard cl(c.mu);
    c.closed = true;
    c.cv.notify_all();
  }

  mutable std::mutex mu_;
  std::set<std::shared_ptr<Client>> clients_;
  std::size_t limit_;
  bool shut_ = false;
};

// ---------------------------------------------------------------------------
// Service

class Service {
 public:
  explicit Service(ServiceConfig cfg) : Service(cfg, neural::load_model(cfg.model_path)) {}

  Service(ServiceConfig cfg, neural::ModelBundle model)
      : cfg_(std::move(cfg)),
        hub_(cfg_.stream_queue_limit),
        chat_(cfg_.chat, cfg_.knowledge_base_path.empty() ? KnowledgeBase{} : KnowledgeBase::load(cfg_.knowledge_base_path)) {
    pipeline::PipelineConfig pc;
    pc.topics = cfg_.topics;
    pc.topic_capacity = cfg_.topic_capacity;
    pc.detection.threshold = cfg_.decision_threshold;
    pc.calculator = cfg_.calculator;
    pc.recent_verdicts = cfg_.recent_verdicts;
    pc.metrics_interval = cfg_.metrics_interval;
    pc.on_stream = [this](const pipeline::StreamEvent& e) { hub_.broadcast(pipeline::to_string(e.kind), e.data); };
    auto rules = cfg_.ruleset_path.empty() ? http::Ruleset::builtin() : http::Ruleset::load(cfg_.ruleset_path);
    pipeline_ = std::make_unique<pipeline::Pipeline>(std::move(model), std::move(pc), std::move(rules));
    routes();
  }

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  ~Service() { stop(); }

  /// Binds, starts listening on a background thread and starts the
  /// configured ingest. Throws PortInUse when the address is taken.
  void start() {
    if (started_) return;
    if (cfg_.port == 0) {
      port_ = server_.bind_to_any_port(cfg_.host);
      if (port_ < 0) throw PortInUse("cannot bind " + cfg_.host);
    } else {
      if (!server_.bind_to_port(cfg_.host, cfg_.port))
        throw PortInUse("cannot bind " + cfg_.host + ":" + std::to_string(cfg_.port));
      port_ = cfg_.port;
    }
    started_ = true;
    listener_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    if (cfg_.ingest) {
      ingest_ = std::jthread([this](std::stop_token st) {
        try {
          auto report = pipeline_->replay(cfg_.ingest->plan, st);
          std::lock_guard lk(mu_);
          replay_report_ = report;
        } catch (const BusClosed&) {
        } catch (const Error& e) {
          std::lock_guard lk(mu_);
          ingest_error_ = e.what();
        }
        ingest_done_ = true;
      });
    }
  }

  /// Stops ingest, closes stream clients, stops the listener and drains the
  /// pipeline. Idempotent.
  void stop() {
    std::lock_guard lk(stop_mu_);
    if (stopped_) return;
    stopped_ = true;
    if (ingest_.joinable()) {
      ingest_.request_stop();
      ingest_.join();
    }
    hub_.close_all();
    if (started_) {
      server_.stop();
      if (listener_.joinable()) listener_.join();
    }
    pipeline_->drain();
  }

  int port() const { return port_; }
  pipeline::Pipeline& pipeline() { return *pipeline_; }
  const StreamHub& hub() const { return hub_; }
  const ServiceConfig& config() const { return cfg_; }
  bool ingest_done() const { return ingest_done_.load(); }
  std::optional<std::string> ingest_error() const {
    std::lock_guard lk(mu_);
    return ingest_error_;
  }
  std::optional<ingest::ReplayReport> replay_report() const {
    std::lock_guard lk(mu_);
    return replay_report_;
  }

 private:
  static void send_json(httplib::Response& res, const Json& j, int status = 200) {
    res.status = status;
    res.set_content(j.dump(), "application/json");
  }
  static void send_error(httplib::Response& res, int status, std::string_view msg) {
    send_json(res, Json{{"error", std::string(msg)}}, status);
  }

  void routes() {
    server_.set_payload_max_length(64 * 1024);
    // httplib also sets SO_REUSEPORT, which would let a second instance share the port
    server_.set_socket_options([](socket_t sock) {
      int yes = 1;
      ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
    });
    server_.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
      std::string what = "internal error";
      try {
        std::rethrow_exception(ep);
      } catch (const std::exception& e) {
        what = e.what();
      } catch (...) {
      }
      send_error(res, 500, what);
    });

    server_.Get("/api/status", [this](const httplib::Request&, httplib::Response& res) {
      send_json(res, status_json(pipeline_->snapshot()));
    });

    server_.Get("/api/events", [this](const httplib::Request& req, httplib::Response& res) {
      std::size_t limit = kDefaultEventsLimit;
      if (req.has_param("limit")) {
        const auto text = req.get_param_value("limit");
        std::size_t used = 0;
        long long v = -1;
        try {
          v = std::stoll(text, &used);
        } catch (const std::exception&) {
        }
        if (used != text.size() || v < 0 || v > static_cast<long long>(kMaxEventsLimit))
          return send_error(res, 400, "limit must be an integer in [0, 1000]");
        limit = static_cast<std::size_t>(v);
      }
      send_json(res, events_json(pipeline_->snapshot(), limit));
    });

    server_.Get("/api/metrics", [this](const httplib::Request&, httplib::Response& res) {
      send_json(res, metrics_json(pipeline_->snapshot()));
    });

    server_.Get("/api/stream", [this](const httplib::Request&, httplib::Response& res) {
      auto client = hub_.connect();
      // state at connect time, so a client never starts blank
      const auto snap = pipeline_->snapshot();
      {
        std::lock_guard lk(client->mu);
        client->frames.push_front(sse_frame("metrics", metrics_json(snap)));
        if (snap.current) client->frames.push_front(sse_frame("threat", Json(*snap.current)));
      }
      res.set_header("Cache-Control", "no-cache");
      const auto heartbeat = cfg_.heartbeat;
      res.set_chunked_content_provider(
          "text/event-stream",
          [client, heartbeat](std::size_t, httplib::DataSink& sink) {
            std::deque<std::string> batch;
            {
              std::unique_lock lk(client->mu);
              client->cv.wait_for(lk, heartbeat, [&] { return client->closed || !client->frames.empty(); });
              batch.swap(client->frames);
              if (batch.empty() && client->closed) {
                sink.done();
                return false;
              }
            }
            if (batch.empty()) batch.push_back(": heartbeat\n\n");
            for (const auto& f : batch)
              if (!sink.write(f.data(), f.size())) return false;
            return true;
          },
          [this, client](bool) { hub_.disconnect(client); });
    });

    server_.Post("/api/chat", [this](const httplib::Request& req, httplib::Response& res) {
      std::string message;
      try {
        auto j = Json::parse(req.body);
        message = j.at("message").get<std::string>();
      } catch (const Json::exception&) {
        return send_error(res, 400, "body must be a JSON object with a string \"message\"");
      }
      if (message.size() > kMaxChatMessageBytes) return send_error(res, 413, "message exceeds 4 KiB");
      if (message.find_first_not_of(" \t\r\n") == std::string::npos) return send_error(res, 400, "message is empty");

      ChatAnswer answer;
      int status = 200;
      if (chat_.configured()) {
        try {
          answer = chat_.ask_upstream(message);
        } catch (const UpstreamFailure& e) {
          answer = chat_.offline_answer(message);
          answer.error = e.what();
          status = 502;
        }
      } else {
        answer = chat_.offline_answer(message);
      }
      stream_answer(res, std::move(answer), status);
    });

    if (!cfg_.static_dir.empty() && std::filesystem::is_directory(cfg_.static_dir)) {
      server_.set_mount_point("/", cfg_.static_dir);
    } else {
      server_.Get("/", [](const httplib::Request&, httplib::Response& res) {
        res.set_content("sentinel: API under /api (status, events, metrics, stream, chat)\n", "text/plain");
      });
    }
  }

  // NDJSON: a meta line, the text in chunks, then a done line.
  static void stream_answer(httplib::Response& res, ChatAnswer answer, int status) {
    res.status = status;
    res.set_header("X-Sentinel-Offline", answer.offline ? "true" : "false");
    auto lines = std::make_shared<std::vector<std::string>>();
    Json meta{{"type", "meta"}, {"offline", answer.offline}};
    if (!answer.source.empty()) meta["source"] = answer.source;
    if (!answer.error.empty()) meta["error"] = answer.error;
    lines->push_back(meta.dump() + "\n");
    for (auto& c : chunk_text(answer.text)) lines->push_back(Json{{"type", "chunk"}, {"text", c}}.dump() + "\n");
    lines->push_back(Json{{"type", "done"}, {"offline", answer.offline}}.dump() + "\n");
    res.set_chunked_content_provider("application/x-ndjson", [lines, i = std::size_t{0}](std::size_t, httplib::DataSink& sink) mutable {
      if (i == lines->size()) {
        sink.done();
        return true;
      }
      const auto& l = (*lines)[i++];
      return sink.write(l.data(), l.size());
    });
  }

  ServiceConfig cfg_;
  StreamHub hub_;
  ChatProxy chat_;
  std::unique_ptr<pipeline::Pipeline> pipeline_;
  httplib::Server server_;
  std::thread listener_;
  std::jthread ingest_;
  int port_ = -1;
  bool started_ = false;
  std::mutex stop_mu_;
  bool stopped_ = false;
  mutable std::mutex mu_;
  std::optional<std::string> ingest_error_;
  std::optional<ingest::ReplayReport> replay_report_;
  std::atomic<bool> ingest_done_{false};
};

/// Collects NDJSON chat lines into the concatenated text plus the meta line.
struct ParsedChat {
  Json meta;
  std::string text;
  bool done = false;
};

inline ParsedChat parse_chat_stream(std::string_view body) {
  ParsedChat p;
  std::istringstream in{std::string(body)};
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto j = Json::parse(line);
    const auto type = j.at("type").get<std::string>();
    if (type == "meta") p.meta = j;
    else if (type == "chunk") p.text += j.at("text").get<std::string>();
    else if (type == "done") p.done = true;
  }
  return p;
}

}  // namespace sentinel::service
