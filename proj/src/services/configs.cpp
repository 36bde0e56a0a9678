#include "services/configs.hpp"

#include "common/error.hpp"

namespace nilm::services {

namespace {

template <typename T>
void read(const nlohmann::json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end() && !it->is_null()) out = it->get<T>();
}

void read_endpoint(const nlohmann::json& j, const char* key, net::Endpoint& out) {
  if (auto it = j.find(key); it != j.end()) out = net::parse_endpoint(it->get<std::string>());
}

template <typename F>
auto guarded(const char* what, F&& f) {
  try {
    return f();
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string(what) + " config: " + e.what());
  }
}

}  // namespace

void EdgeAgentConfig::validate() const {
  if (household_id.empty()) throw InvalidInput("household_id must be nonempty");
  if (queue.empty()) throw InvalidInput("queue must be nonempty");
  if (mode == EdgeMode::edge_infer && model_path.empty()) throw InvalidInput("edge-infer mode needs model_path");
  if (window == 0) throw InvalidInput("window must be >= 1");
  if (samples_per_envelope == 0) throw InvalidInput("samples_per_envelope must be >= 1");
  if (input_csv.empty() && !live) throw InvalidInput("edge agent needs input_csv or live");
  if (connect_retries < 0 || retry_base_ms < 0) throw InvalidInput("retry settings must be >= 0");
}

void CloudConfig::validate() const {
  if (batch_threshold == 0) throw InvalidInput("batch_threshold must be >= 1");
  if (queue.empty()) throw InvalidInput("queue must be nonempty");
  if (model_path.empty() && synthetic_service_ms <= 0) throw InvalidInput("cloud worker needs model_path");
  if (consume && model_path.empty()) throw InvalidInput("consuming worker needs model_path");
  if (max_inflight == 0) throw InvalidInput("max_inflight must be >= 1");
  if (persist_dir.empty()) throw InvalidInput("persist_dir must be nonempty");
}

void BalancerConfig::validate() const {
  if (workers.empty()) throw InvalidInput("balancer needs at least one worker");
  if (health_period_ms == 0 || failure_threshold == 0) throw InvalidInput("health settings must be >= 1");
}

EdgeAgentConfig edge_config_from_json(const nlohmann::json& j) {
  return guarded("edge agent", [&] {
    EdgeAgentConfig c;
    read(j, "input_csv", c.input_csv);
    if (auto it = j.find("live"); it != j.end() && !it->is_null()) c.live = datagen::scenario_from_json(*it);
    read_endpoint(j, "broker", c.broker);
    read(j, "queue", c.queue);
    read(j, "household_id", c.household_id);
    if (auto it = j.find("mode"); it != j.end()) {
      auto m = it->get<std::string>();
      if (m == "edge-infer")
        c.mode = EdgeMode::edge_infer;
      else if (m == "forward-only")
        c.mode = EdgeMode::forward_only;
      else
        throw InvalidInput("unknown edge mode '" + m + "'");
    }
    read(j, "window", c.window);
    read(j, "model_path", c.model_path);
    read(j, "results_dir", c.results_dir);
    read(j, "samples_per_envelope", c.samples_per_envelope);
    read(j, "sample_interval_ms", c.sample_interval_ms);
    read(j, "connect_retries", c.connect_retries);
    read(j, "retry_base_ms", c.retry_base_ms);
    c.validate();
    return c;
  });
}

CloudConfig cloud_config_from_json(const nlohmann::json& j) {
  return guarded("cloud worker", [&] {
    CloudConfig c;
    read_endpoint(j, "broker", c.broker);
    read(j, "queue", c.queue);
    read(j, "batch_threshold", c.batch_threshold);
    read(j, "model_path", c.model_path);
    read(j, "persist_dir", c.persist_dir);
    read_endpoint(j, "listen", c.listen);
    read(j, "worker_name", c.worker_name);
    read(j, "consume", c.consume);
    read(j, "max_inflight", c.max_inflight);
    read(j, "synthetic_service_ms", c.synthetic_service_ms);
    read(j, "flush_idle_ms", c.flush_idle_ms);
    read(j, "prefetch", c.prefetch);
    c.validate();
    return c;
  });
}

BalancerConfig balancer_config_from_json(const nlohmann::json& j) {
  return guarded("balancer", [&] {
    BalancerConfig c;
    read_endpoint(j, "listen", c.listen);
    if (auto it = j.find("workers"); it != j.end())
      for (const auto& w : *it) c.workers.push_back(net::parse_endpoint(w.get<std::string>()));
    read(j, "health_period_ms", c.health_period_ms);
    read(j, "failure_threshold", c.failure_threshold);
    read(j, "connect_timeout_ms", c.connect_timeout_ms);
    c.validate();
    return c;
  });
}

nlohmann::json to_json(const EdgeAgentConfig& c) {
  nlohmann::json j = {{"input_csv", c.input_csv},
                      {"broker", c.broker.str()},
                      {"queue", c.queue},
                      {"household_id", c.household_id},
                      {"mode", c.mode == EdgeMode::edge_infer ? "edge-infer" : "forward-only"},
                      {"window", c.window},
                      {"model_path", c.model_path},
                      {"results_dir", c.results_dir},
                      {"samples_per_envelope", c.samples_per_envelope},
                      {"sample_interval_ms", c.sample_interval_ms},
                      {"connect_retries", c.connect_retries},
                      {"retry_base_ms", c.retry_base_ms}};
  if (c.live) j["live"] = datagen::scenario_to_json(*c.live);
  return j;
}

nlohmann::json to_json(const CloudConfig& c) {
  return {{"broker", c.broker.str()},
          {"queue", c.queue},
          {"batch_threshold", c.batch_threshold},
          {"model_path", c.model_path},
          {"persist_dir", c.persist_dir},
          {"listen", c.listen.str()},
          {"worker_name", c.worker_name},
          {"consume", c.consume},
          {"max_inflight", c.max_inflight},
          {"synthetic_service_ms", c.synthetic_service_ms},
          {"flush_idle_ms", c.flush_idle_ms},
          {"prefetch", c.prefetch}};
}

nlohmann::json to_json(const BalancerConfig& c) {
  nlohmann::json workers = nlohmann::json::array();
  for (const auto& w : c.workers) workers.push_back(w.str());
  return {{"listen", c.listen.str()},
          {"workers", workers},
          {"health_period_ms", c.health_period_ms},
          {"failure_threshold", c.failure_threshold},
          {"connect_timeout_ms", c.connect_timeout_ms}};
}

}  // namespace nilm::services
