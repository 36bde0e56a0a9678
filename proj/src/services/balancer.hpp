#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <mutex>
#include <optional>
#include <set>
#include <thread>
#include <vector>

#include "common/net.hpp"
#include "services/configs.hpp"

namespace nilm::services {

/// Strict rotation over the healthy subset of a fixed worker list.
class RoundRobin {
 public:
  explicit RoundRobin(std::size_t n) : n_(n) {}
  /// Next healthy index after the previous pick, or nullopt if none is healthy.
  std::optional<std::size_t> next(const std::vector<bool>& healthy);

 private:
  std::size_t n_;
  std::size_t cursor_ = 0;
};

/// TCP reverse proxy: each client connection is paired with the next
/// healthy worker and bytes are copied both ways until both sides close.
class Balancer {
 public:
  explicit Balancer(BalancerConfig cfg);
  ~Balancer();
  Balancer(const Balancer&) = delete;
  Balancer& operator=(const Balancer&) = delete;

  void start();
  void stop();
  std::uint16_t port() const noexcept { return port_; }

  /// Connections routed to each worker so far.
  std::vector<std::size_t> routed() const;
  std::vector<bool> healthy() const;

 private:
  void accept_loop();
  void health_loop();
  void proxy(int client_fd);
  std::optional<std::pair<std::size_t, net::Socket>> pick_and_connect();
  void record_probe(std::size_t i, bool ok);

  BalancerConfig cfg_;
  net::Socket listener_;
  std::uint16_t port_ = 0;
  std::atomic<bool> running_{false};
  std::thread acceptor_;
  std::thread health_;

  mutable std::mutex mu_;
  std::condition_variable cv_;
  RoundRobin rr_;
  std::vector<bool> healthy_;
  std::vector<std::size_t> failures_;
  std::vector<std::size_t> routed_;
  std::set<int> live_fds_;
  std::size_t active_ = 0;
};

}  // namespace nilm::services
