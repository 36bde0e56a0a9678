#pragma once

#include <atomic>
#include <cstdint>
#include <list>
#include <memory>
#include <mutex>
#include <thread>

#include "broker/queue_registry.hpp"
#include "common/net.hpp"

namespace nilm::broker {

/// TCP front end for a QueueRegistry. Each connection gets a reader thread
/// handling requests in order and a writer thread draining its outbox, so
/// deliveries interleave with replies without blocking the registry.
class BrokerServer {
 public:
  BrokerServer(net::Endpoint listen, std::size_t default_capacity = kDefaultCapacity);
  ~BrokerServer();
  BrokerServer(const BrokerServer&) = delete;
  BrokerServer& operator=(const BrokerServer&) = delete;

  /// Binds and starts accepting. Throws IoError when the address is taken.
  void start();
  void stop();
  std::uint16_t port() const noexcept { return port_; }
  QueueRegistry& registry() noexcept { return registry_; }

 private:
  struct Connection;
  void accept_loop();
  void serve(const std::shared_ptr<Connection>& conn);
  void reap();

  net::Endpoint listen_;
  QueueRegistry registry_;
  net::Socket listener_;
  std::uint16_t port_ = 0;
  std::atomic<bool> running_{false};
  std::thread acceptor_;
  std::mutex conns_mu_;
  std::list<std::shared_ptr<Connection>> conns_;
  std::atomic<std::uint64_t> next_id_{0};
};

}  // namespace nilm::broker
