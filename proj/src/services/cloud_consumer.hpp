#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <set>
#include <thread>
#include <vector>

#include "broker/client.hpp"
#include "preprocess/preprocess.hpp"
#include "s2p/model.hpp"
#include "services/configs.hpp"
#include "services/result_store.hpp"

namespace nilm::services {

struct ConsumerStats {
  std::size_t messages = 0;
  std::size_t duplicates = 0;
  std::size_t dead_lettered = 0;
  std::size_t acked = 0;
  std::size_t batches = 0;
  std::size_t windows = 0;
  std::size_t persisted = 0;
  std::size_t sessions = 0;
};

/// Queue consumer of a cloud worker. Samples are windowed per household;
/// every B pending windows run as one batched forward, and partial batches
/// run after `flush_idle_ms` without traffic. A message is acknowledged once
/// every window that contains its last sample has been persisted, so a
/// crash at any point leads to redelivery rather than loss.
class CloudConsumer {
 public:
  CloudConsumer(CloudConfig cfg, const s2p::S2PModel& model, std::mutex& model_mu, ResultStore& store);
  ~CloudConsumer();
  CloudConsumer(const CloudConsumer&) = delete;
  CloudConsumer& operator=(const CloudConsumer&) = delete;

  void start();
  /// Leaves unacknowledged messages to the broker for redelivery.
  void stop();
  ConsumerStats stats() const;

  /// Runs between inference and persistence; throwing drops the broker
  /// session as if the process had died there.
  std::function<void(const std::vector<ResultRecord>&)> before_persist;

 private:
  struct Held {
    std::uint64_t tag;
    std::int64_t last_index;
  };
  struct Pending {
    preprocess::WindowBatch window;
    std::int64_t end_index;
  };
  struct Household {
    explicit Household(std::size_t w, const std::string& id) : windows(w, 1, id) {}
    preprocess::SlidingWindow windows;
    std::int64_t next_index = 0;
    std::int64_t persisted_end = -1;
    std::vector<Pending> pending;
    std::vector<Held> held;
    std::set<std::uint64_t> seen;
  };

  void run();
  void session(broker::BrokerClient& client);
  void handle(broker::BrokerClient& client, broker::Delivery d);
  void run_batch(broker::BrokerClient& client, Household& hh, std::size_t n);
  void release(broker::BrokerClient& client, Household& hh);
  void persist(const std::vector<ResultRecord>& records);

  CloudConfig cfg_;
  const s2p::S2PModel& model_;
  std::mutex& model_mu_;
  ResultStore& store_;
  std::map<std::string, Household> households_;
  std::atomic<bool> running_{false};
  std::thread thread_;
  mutable std::mutex stats_mu_;
  ConsumerStats stats_;
};

}  // namespace nilm::services
