#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "common/net.hpp"
#include "datagen/datagen.hpp"
#include "preprocess/preprocess.hpp"

namespace nilm::services {

inline constexpr const char* kDefaultQueue = "nilm.samples";

enum class EdgeMode { edge_infer, forward_only };

struct EdgeAgentConfig {
  std::string input_csv;                      // empty selects live generation
  std::optional<datagen::ScenarioConfig> live;
  net::Endpoint broker{"127.0.0.1", 5672};
  std::string queue = kDefaultQueue;
  std::string household_id = "house-1";
  EdgeMode mode = EdgeMode::forward_only;
  std::size_t window = preprocess::kDefaultWindow;
  std::string model_path;
  std::string results_dir;                    // local edge results; empty disables
  std::size_t samples_per_envelope = 10;
  std::size_t sample_interval_ms = 0;         // pacing for live replay
  int connect_retries = 5;
  int retry_base_ms = 100;

  void validate() const;
};

struct CloudConfig {
  net::Endpoint broker{"127.0.0.1", 5672};
  std::string queue = kDefaultQueue;
  std::size_t batch_threshold = 16;
  std::string model_path;
  std::string persist_dir = "results";
  net::Endpoint listen{"127.0.0.1", 8000};
  std::string worker_name = "worker";
  bool consume = true;                 // run the queue consumer in this worker
  std::size_t max_inflight = 64;       // concurrent requests before 503
  double synthetic_service_ms = 0;     // > 0 replaces inference with a fixed sleep
  std::size_t flush_idle_ms = 500;     // partial batches run after this much quiet
  std::size_t prefetch = 256;

  void validate() const;
};

struct BalancerConfig {
  net::Endpoint listen{"127.0.0.1", 8080};
  std::vector<net::Endpoint> workers;
  std::size_t health_period_ms = 1000;
  std::size_t failure_threshold = 3;
  std::size_t connect_timeout_ms = 1000;

  void validate() const;
};

EdgeAgentConfig edge_config_from_json(const nlohmann::json& j);
CloudConfig cloud_config_from_json(const nlohmann::json& j);
BalancerConfig balancer_config_from_json(const nlohmann::json& j);

nlohmann::json to_json(const EdgeAgentConfig& c);
nlohmann::json to_json(const CloudConfig& c);
nlohmann::json to_json(const BalancerConfig& c);

}  // namespace nilm::services
