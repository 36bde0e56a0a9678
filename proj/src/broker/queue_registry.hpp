#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace nilm::broker {

inline constexpr std::size_t kDefaultCapacity = 10000;
inline constexpr std::size_t kDefaultPrefetch = 64;

struct Delivery {
  std::uint64_t tag = 0;
  std::string queue;
  nlohmann::json envelope;
};

/// Called with the registry lock held; must not block or call back in.
using DeliverFn = std::function<void(const Delivery&)>;

struct QueueStats {
  std::size_t capacity = 0;
  std::size_t buffered = 0;
  std::size_t in_flight = 0;
  std::size_t consumers = 0;
};

/// Queue state shared by every broker connection. Consumers are identified
/// by connection id; delivery tags are unique across the registry.
class QueueRegistry {
 public:
  explicit QueueRegistry(std::size_t default_capacity = kDefaultCapacity);

  /// capacity 0 selects the default. Redeclaring with another capacity is
  /// a "declaration" error.
  std::size_t declare(const std::string& name, std::size_t capacity = 0);
  /// Throws ProtocolError "routing" for an unknown queue, "overflow" when
  /// the buffer is full (the message is not enqueued).
  void publish(const std::string& queue, nlohmann::json envelope);
  void subscribe(const std::string& queue, std::uint64_t consumer, DeliverFn fn, std::size_t prefetch = kDefaultPrefetch);
  /// Throws ProtocolError "protocol" unless `tag` is in flight to `consumer`.
  void ack(std::uint64_t consumer, std::uint64_t tag);
  /// requeue=true appends to the buffer tail; otherwise the message moves to
  /// `<queue>.dead`.
  void nack(std::uint64_t consumer, std::uint64_t tag, bool requeue = true);
  /// Drops the consumer's subscriptions and returns its unacked messages to
  /// the buffer heads in delivery order.
  void disconnect(std::uint64_t consumer);

  QueueStats stats(const std::string& queue) const;
  std::size_t default_capacity() const noexcept { return default_capacity_; }

 private:
  struct Subscription {
    std::uint64_t consumer;
    std::size_t prefetch;
    std::size_t in_flight = 0;
    DeliverFn fn;
  };
  struct Queue {
    std::size_t capacity;
    std::deque<nlohmann::json> buffer;
    std::vector<Subscription> subs;
    std::size_t next_sub = 0;
  };
  struct InFlight {
    std::string queue;
    std::uint64_t consumer;
    nlohmann::json envelope;
  };

  Queue& find(const std::string& name);
  InFlight take(std::uint64_t consumer, std::uint64_t tag);
  void dispatch(const std::string& name, Queue& q);
  void release_slot(Queue& q, std::uint64_t consumer);

  mutable std::mutex mu_;
  std::size_t default_capacity_;
  std::map<std::string, Queue> queues_;
  std::map<std::uint64_t, InFlight> in_flight_;
  std::uint64_t next_tag_ = 0;
};

}  // namespace nilm::broker
