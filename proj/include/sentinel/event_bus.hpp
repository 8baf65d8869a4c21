#pragma once

// In-process publish/subscribe broker with bounded per-subscriber queues.
//
// Delivery contract:
//  - a message reaches every subscriber attached at publish time, none later;
//  - each subscriber sees one publisher's messages on a topic in publish order;
//  - publish blocks while any subscriber queue is full (no drops);
//  - after close(), publish throws BusClosed and receivers drain what is
//    queued before reporting end of stream.

#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "sentinel/core/error.hpp"

namespace sentinel::bus {

inline constexpr std::size_t kDefaultTopicCapacity = 10'000;

template <typename Message>
struct Delivery {
  std::string topic;
  Message message;
};

template <typename Message>
class EventBus {
  struct Queue {
    explicit Queue(std::size_t cap) : capacity(cap) {}

    std::mutex mu;
    std::condition_variable not_empty;
    std::condition_variable not_full;
    std::deque<Delivery<Message>> items;
    std::size_t capacity;
    bool detached = false;  // subscription dropped; pushes are discarded
    bool sealed = false;    // bus closed; receivers drain then stop
  };

  struct Topic {
    std::string name;
    std::size_t capacity;
    std::vector<std::shared_ptr<Queue>> subscribers;
  };

 public:
  /// Move-only receiving handle; unsubscribes on destruction.
  class Subscription {
   public:
    Subscription() = default;
    Subscription(Subscription&&) noexcept = default;
    Subscription& operator=(Subscription&& o) noexcept {
      if (this != &o) {
        reset();
        bus_ = o.bus_;
        queue_ = std::move(o.queue_);
        o.bus_ = nullptr;
      }
      return *this;
    }
    ~Subscription() { reset(); }

    /// Blocks for the next message; nullopt once the bus is closed and drained.
    std::optional<Delivery<Message>> receive() {
      std::unique_lock lk(queue_->mu);
      queue_->not_empty.wait(lk, [&] { return !queue_->items.empty() || queue_->sealed; });
      return pop(lk);
    }

    /// As receive(), but gives up after `timeout`.
    template <typename Rep, typename Period>
    std::optional<Delivery<Message>> receive_for(std::chrono::duration<Rep, Period> timeout) {
      std::unique_lock lk(queue_->mu);
      queue_->not_empty.wait_for(lk, timeout, [&] { return !queue_->items.empty() || queue_->sealed; });
      return pop(lk);
    }

    std::optional<Delivery<Message>> try_receive() {
      std::unique_lock lk(queue_->mu);
      return pop(lk);
    }

    /// True once the bus is closed and nothing remains queued.
    bool finished() const {
      std::lock_guard lk(queue_->mu);
      return queue_->sealed && queue_->items.empty();
    }

    std::size_t pending() const {
      std::lock_guard lk(queue_->mu);
      return queue_->items.size();
    }

    explicit operator bool() const { return queue_ != nullptr; }

   private:
    friend class EventBus;
    Subscription(EventBus* bus, std::shared_ptr<Queue> q) : bus_(bus), queue_(std::move(q)) {}

    std::optional<Delivery<Message>> pop(std::unique_lock<std::mutex>&) {
      if (queue_->items.empty()) return std::nullopt;
      auto d = std::move(queue_->items.front());
      queue_->items.pop_front();
      queue_->not_full.notify_all();
      return d;
    }

    void reset() {
      if (bus_ && queue_) bus_->detach(queue_);
      bus_ = nullptr;
      queue_.reset();
    }

    EventBus* bus_ = nullptr;
    std::shared_ptr<Queue> queue_;
  };

  explicit EventBus(std::size_t default_capacity = kDefaultTopicCapacity) : default_capacity_(default_capacity) {
    if (default_capacity_ < 1) throw Error("topic capacity must be ≥ 1");
  }

  EventBus(const EventBus&) = delete;
  EventBus& operator=(const EventBus&) = delete;

  void create_topic(std::string name, std::optional<std::size_t> capacity = std::nullopt) {
    const std::size_t cap = capacity.value_or(default_capacity_);
    if (cap < 1) throw Error("topic capacity must be ≥ 1");
    std::unique_lock lk(mu_);
    if (topics_.contains(name)) throw Error("topic already exists: " + name);
    topics_.emplace(name, Topic{name, cap, {}});
  }

  bool has_topic(std::string_view name) const {
    std::shared_lock lk(mu_);
    return topics_.contains(std::string(name));
  }

  /// Enqueues a copy of `msg` for every current subscriber of `topic`.
  void publish(std::string_view topic, Message msg) {
    std::vector<std::shared_ptr<Queue>> targets;
    std::string name;
    {
      std::shared_lock lk(mu_);
      if (closed_) throw BusClosed("bus is closed");
      auto it = topics_.find(std::string(topic));
      if (it == topics_.end()) throw TopicUnknown("unknown topic: " + std::string(topic));
      targets = it->second.subscribers;
      name = it->second.name;
    }
    for (std::size_t i = 0; i < targets.size(); ++i) {
      auto& q = *targets[i];
      std::unique_lock lk(q.mu);
      q.not_full.wait(lk, [&] { return q.items.size() < q.capacity || q.detached || q.sealed; });
      if (q.sealed) throw BusClosed("bus closed while publishing");
      if (q.detached) continue;
      if (i + 1 == targets.size())
        q.items.push_back({name, std::move(msg)});
      else
        q.items.push_back({name, msg});
      q.not_empty.notify_one();
    }
  }

  Subscription subscribe(std::string_view topic) {
    const std::string name(topic);
    return subscribe(std::span<const std::string>(&name, 1));
  }

  /// One queue fed by several topics; its capacity is the smallest of theirs.
  Subscription subscribe(std::span<const std::string> topic_names) {
    std::unique_lock lk(mu_);
    if (closed_) throw BusClosed("bus is closed");
    std::vector<Topic*> found;
    std::size_t cap = SIZE_MAX;
    for (const auto& n : topic_names) {
      auto it = topics_.find(n);
      if (it == topics_.end()) throw TopicUnknown("unknown topic: " + n);
      found.push_back(&it->second);
      cap = std::min(cap, it->second.capacity);
    }
    if (found.empty()) throw TopicUnknown("no topic given");
    auto q = std::make_shared<Queue>(cap);
    for (auto* t : found) t->subscribers.push_back(q);
    return Subscription(this, std::move(q));
  }

  /// Rejects further publishes and lets receivers drain to end of stream.
  void close() {
    std::unique_lock lk(mu_);
    closed_ = true;
    for (auto& [name, t] : topics_)
      for (auto& q : t.subscribers) {
        std::lock_guard ql(q->mu);
        q->sealed = true;
        q->not_empty.notify_all();
        q->not_full.notify_all();
      }
  }

  bool closed() const {
    std::shared_lock lk(mu_);
    return closed_;
  }

  std::size_t subscriber_count(std::string_view topic) const {
    std::shared_lock lk(mu_);
    auto it = topics_.find(std::string(topic));
    if (it == topics_.end()) throw TopicUnknown("unknown topic: " + std::string(topic));
    return it->second.subscribers.size();
  }

 private:
  void detach(const std::shared_ptr<Queue>& q) {
    {
      std::unique_lock lk(mu_);
      for (auto& [name, t] : topics_) std::erase(t.subscribers, q);
    }
    std::lock_guard ql(q->mu);
    q->detached = true;
    q->items.clear();
    q->not_full.notify_all();
  }

  mutable std::shared_mutex mu_;
  std::unordered_map<std::string, Topic> topics_;
  std::size_t default_capacity_;
  bool closed_ = false;
};

}  // namespace sentinel::bus
