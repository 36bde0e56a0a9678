#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <mutex>
#include <thread>

#include "s2p/model.hpp"
#include "services/cloud_consumer.hpp"
#include "services/configs.hpp"
#include "services/result_store.hpp"

namespace httplib {
class Server;
}

namespace nilm::services {

/// One cloud worker process: REST endpoints over a single model instance,
/// plus the queue consumer when `cfg.consume` is set.
class CloudWorker {
 public:
  /// Loads the model (when configured) and opens the result store.
  explicit CloudWorker(CloudConfig cfg);
  CloudWorker(CloudConfig cfg, std::shared_ptr<const s2p::S2PModel> model);
  ~CloudWorker();
  CloudWorker(const CloudWorker&) = delete;
  CloudWorker& operator=(const CloudWorker&) = delete;

  /// Binds the listen address and starts serving. Throws IoError.
  void start();
  void stop();
  std::uint16_t port() const noexcept { return port_; }

  ResultStore& store() noexcept { return store_; }
  CloudConsumer* consumer() noexcept { return consumer_.get(); }
  const s2p::S2PModel* model() const noexcept { return model_.get(); }
  const CloudConfig& config() const noexcept { return cfg_; }

 private:
  void install_routes();

  CloudConfig cfg_;
  std::shared_ptr<const s2p::S2PModel> model_;
  std::mutex model_mu_;
  ResultStore store_;
  std::unique_ptr<CloudConsumer> consumer_;
  std::unique_ptr<httplib::Server> server_;
  std::thread listener_;
  std::uint16_t port_ = 0;
  std::atomic<std::size_t> inflight_{0};
  bool started_ = false;
};

}  // namespace nilm::services
