#include "services/edge_agent.hpp"

#include <memory>
#include <optional>
#include <thread>

#include <spdlog/spdlog.h>

#include "broker/client.hpp"
#include "common/error.hpp"
#include "common/io.hpp"
#include "gbdt/gbdt.hpp"
#include "services/result_store.hpp"

namespace nilm::services {

namespace {

class Publisher {
 public:
  explicit Publisher(const EdgeAgentConfig& cfg) : cfg_(cfg) {}

  void send(const broker::MessageEnvelope& env) {
    auto body = broker::to_json(env);
    int overflow_wait_ms = 10;
    for (;;) {
      ensure_connected();
      try {
        client_->publish(cfg_.queue, body);
        return;
      } catch (const ProtocolError& e) {
        if (e.kind() != "overflow") throw;
        // Producer backpressure: the queue is full, wait for consumers.
        std::this_thread::sleep_for(std::chrono::milliseconds(overflow_wait_ms));
        overflow_wait_ms = std::min(overflow_wait_ms * 2, 1000);
      } catch (const IoError& e) {
        spdlog::warn("lost broker connection: {}", e.what());
        client_.reset();
      }
    }
  }

 private:
  void ensure_connected() {
    if (client_ && client_->connected()) return;
    int delay = cfg_.retry_base_ms;
    for (int attempt = 0;; ++attempt) {
      try {
        client_ = std::make_unique<broker::BrokerClient>(cfg_.broker);
        client_->declare(cfg_.queue);
        return;
      } catch (const IoError& e) {
        client_.reset();
        if (attempt >= cfg_.connect_retries)
          throw IoError("broker " + cfg_.broker.str() + " unreachable after " + std::to_string(attempt + 1) +
                        " attempts: " + e.what());
        spdlog::warn("broker unreachable, retrying in {} ms", delay);
        std::this_thread::sleep_for(std::chrono::milliseconds(delay));
        delay = std::min(delay * 2, 5000);
      }
    }
  }

  const EdgeAgentConfig& cfg_;
  std::unique_ptr<broker::BrokerClient> client_;
};

}  // namespace

EdgeRunStats run_edge_agent(const EdgeAgentConfig& cfg, const std::atomic<bool>* stop) {
  cfg.validate();
  std::vector<PowerSample> input;
  if (!cfg.input_csv.empty()) {
    input = datagen::read_csv(cfg.input_csv).samples;
  } else {
    auto data = datagen::generate_scenario(*cfg.live);
    input = cfg.live->dirty_fraction > 0
                ? datagen::inject_dirty(std::move(data.samples), cfg.live->dirty_fraction, cfg.live->seed).samples
                : std::move(data.samples);
  }

  std::optional<gbdt::GbdtModel> model;
  if (cfg.mode == EdgeMode::edge_infer) {
    model = gbdt::load(cfg.model_path);
    if (model->schema.window != cfg.window)
      throw InvalidInput("model window " + std::to_string(model->schema.window) + " differs from configured window " +
                         std::to_string(cfg.window));
  }
  std::unique_ptr<ResultStore> local;
  if (!cfg.results_dir.empty()) local = std::make_unique<ResultStore>(cfg.results_dir);

  Publisher publisher(cfg);
  preprocess::SlidingWindow queue(cfg.window, 1, cfg.household_id);
  EdgeRunStats stats;
  broker::MessageEnvelope env;
  std::uint64_t seq = 0;
  auto flush = [&] {
    if (env.samples.empty()) return;
    env.household_id = cfg.household_id;
    env.seq = ++seq;
    env.sent_at_ms = now_ms();
    if (local && !env.results.empty()) local->append(env.results);
    publisher.send(env);
    stats.published_samples += env.samples.size();
    ++stats.envelopes;
    env.samples.clear();
    env.results.clear();
  };

  for (const auto& s : input) {
    if (stop && stop->load()) break;
    ++stats.input;
    if (!preprocess::is_valid(s)) {
      ++stats.rejected;
      continue;
    }
    env.samples.push_back({s.ts_ms, s.active_power, s.reactive_power});
    auto window = queue.push(s);
    if (window && model) {
      auto probs = model->predict_proba(*window);
      ResultRecord r{cfg.household_id, window->midpoint_ts_ms, {}, "edge", model->version};
      for (std::size_t t = 0; t < probs.size(); ++t)
        r.targets.push_back({model->targets[t].appliance_id, probs[t], probs[t] > 0.5 ? 1 : 0});
      env.results.push_back(std::move(r));
      ++stats.local_results;
    }
    if (env.samples.size() >= cfg.samples_per_envelope) flush();
    if (cfg.sample_interval_ms > 0) std::this_thread::sleep_for(std::chrono::milliseconds(cfg.sample_interval_ms));
  }
  flush();
  spdlog::info("edge agent done: {} input, {} rejected, {} published in {} envelopes, {} local results", stats.input,
               stats.rejected, stats.published_samples, stats.envelopes, stats.local_results);
  return stats;
}

}  // namespace nilm::services
