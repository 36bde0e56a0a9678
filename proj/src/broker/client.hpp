#pragma once

#include <chrono>
#include <deque>
#include <optional>
#include <string>

#include "broker/envelope.hpp"
#include "broker/queue_registry.hpp"
#include "common/net.hpp"

namespace nilm::broker {

/// Synchronous broker connection. Each call sends one request and waits for
/// its reply; deliveries that arrive in between are kept for next_delivery().
/// Not thread-safe.
class BrokerClient {
 public:
  /// Throws IoError when the broker cannot be reached.
  explicit BrokerClient(const net::Endpoint& ep,
                        std::chrono::milliseconds timeout = std::chrono::milliseconds(2000));

  std::size_t declare(const std::string& queue, std::size_t capacity = 0);
  /// Throws ProtocolError with kind "overflow" when the queue is full.
  void publish(const std::string& queue, const nlohmann::json& envelope);
  void publish(const std::string& queue, const MessageEnvelope& envelope);
  void subscribe(const std::string& queue, std::size_t prefetch = kDefaultPrefetch);
  std::optional<Delivery> next_delivery(std::chrono::milliseconds timeout);
  void ack(std::uint64_t tag);
  void nack(std::uint64_t tag, bool requeue = true);

  /// Drops the connection without acknowledging anything.
  void close();
  bool connected() const noexcept { return sock_.valid(); }

 private:
  nlohmann::json request(const nlohmann::json& body, const std::string& expect_op);
  nlohmann::json read_one();

  net::Socket sock_;
  std::chrono::milliseconds timeout_;
  std::deque<Delivery> pending_;
};

}  // namespace nilm::broker
