#include "services/cloud_consumer.hpp"

#include <algorithm>
#include <chrono>

#include <spdlog/spdlog.h>

#include "common/error.hpp"

namespace nilm::services {

using namespace std::chrono_literals;
using Clock = std::chrono::steady_clock;

CloudConsumer::CloudConsumer(CloudConfig cfg, const s2p::S2PModel& model, std::mutex& model_mu, ResultStore& store)
    : cfg_(std::move(cfg)), model_(model), model_mu_(model_mu), store_(store) {}

CloudConsumer::~CloudConsumer() { stop(); }

void CloudConsumer::start() {
  if (running_.exchange(true)) return;
  thread_ = std::thread([this] { run(); });
}

void CloudConsumer::stop() {
  running_ = false;
  if (thread_.joinable()) thread_.join();
}

ConsumerStats CloudConsumer::stats() const {
  std::lock_guard lock(stats_mu_);
  return stats_;
}

void CloudConsumer::run() {
  auto backoff = 100ms;
  while (running_) {
    try {
      broker::BrokerClient client(cfg_.broker);
      client.declare(cfg_.queue);
      client.subscribe(cfg_.queue, cfg_.prefetch);
      backoff = 100ms;
      {
        std::lock_guard lock(stats_mu_);
        ++stats_.sessions;
      }
      session(client);
    } catch (const std::exception& e) {
      if (running_) spdlog::warn("consumer session ended: {}", e.what());
    }
    // Everything unacknowledged comes back from the broker.
    households_.clear();
    for (auto waited = 0ms; running_ && waited < backoff; waited += 20ms) std::this_thread::sleep_for(20ms);
    backoff = std::min(backoff * 2, std::chrono::milliseconds(2000));
  }
}

void CloudConsumer::session(broker::BrokerClient& client) {
  auto last_activity = Clock::now();
  const auto idle = std::chrono::milliseconds(cfg_.flush_idle_ms);
  while (running_) {
    auto d = client.next_delivery(20ms);
    if (d) {
      handle(client, std::move(*d));
      last_activity = Clock::now();
      continue;
    }
    if (Clock::now() - last_activity < idle) continue;
    for (auto& [id, hh] : households_)
      if (!hh.pending.empty()) run_batch(client, hh, hh.pending.size());
    last_activity = Clock::now();
  }
}

void CloudConsumer::handle(broker::BrokerClient& client, broker::Delivery d) {
  broker::MessageEnvelope env;
  try {
    env = broker::envelope_from_json(d.envelope);
    if (!valid_household_id(env.household_id)) throw InvalidInput("invalid household id");
  } catch (const InvalidInput& e) {
    spdlog::warn("dead-lettering malformed envelope: {}", e.what());
    client.nack(d.tag, false);
    std::lock_guard lock(stats_mu_);
    ++stats_.dead_lettered;
    return;
  }
  auto& hh = households_.try_emplace(env.household_id, model_.window(), env.household_id).first->second;
  if (!hh.seen.insert(env.seq).second) {
    client.ack(d.tag);
    std::lock_guard lock(stats_mu_);
    ++stats_.duplicates;
    ++stats_.acked;
    return;
  }
  {
    std::lock_guard lock(stats_mu_);
    ++stats_.messages;
  }
  if (!env.results.empty()) {
    auto edge = env.results;
    for (auto& r : edge) {
      r.household_id = env.household_id;
      r.producer = "edge";
    }
    persist(edge);
  }
  for (const auto& s : env.samples) {
    PowerSample ps;
    ps.ts_ms = s.ts;
    ps.active_power = s.p;
    ps.reactive_power = s.q;
    if (auto w = hh.windows.push(ps)) hh.pending.push_back({std::move(*w), hh.next_index});
    ++hh.next_index;
  }
  hh.held.push_back({d.tag, hh.next_index - 1});
  while (hh.pending.size() >= cfg_.batch_threshold) run_batch(client, hh, cfg_.batch_threshold);
  release(client, hh);
}

void CloudConsumer::run_batch(broker::BrokerClient& client, Household& hh, std::size_t n) {
  std::vector<preprocess::WindowBatch> batch;
  batch.reserve(n);
  for (std::size_t i = 0; i < n; ++i) batch.push_back(hh.pending[i].window);
  std::vector<double> probs;
  {
    std::lock_guard lock(model_mu_);
    probs = model_.predict(batch);
  }
  const auto& ids = model_.targets();
  std::vector<ResultRecord> records;
  for (std::size_t i = 0; i < n; ++i) {
    ResultRecord r{batch[i].household_id, batch[i].midpoint_ts_ms, {}, "cloud", model_.version};
    for (std::size_t t = 0; t < ids.size(); ++t) {
      double p = probs[i * ids.size() + t];
      r.targets.push_back({ids[t], p, p > 0.5 ? 1 : 0});
    }
    records.push_back(std::move(r));
  }
  if (before_persist) before_persist(records);
  persist(records);
  hh.persisted_end = hh.pending[n - 1].end_index;
  hh.pending.erase(hh.pending.begin(), hh.pending.begin() + static_cast<std::ptrdiff_t>(n));
  {
    std::lock_guard lock(stats_mu_);
    ++stats_.batches;
    stats_.windows += n;
  }
  release(client, hh);
}

void CloudConsumer::release(broker::BrokerClient& client, Household& hh) {
  const auto reach = static_cast<std::int64_t>(model_.window()) - 1;
  std::size_t done = 0;
  while (done < hh.held.size() && hh.held[done].last_index + reach <= hh.persisted_end) {
    client.ack(hh.held[done].tag);
    ++done;
  }
  if (done == 0) return;
  hh.held.erase(hh.held.begin(), hh.held.begin() + static_cast<std::ptrdiff_t>(done));
  std::lock_guard lock(stats_mu_);
  stats_.acked += done;
}

void CloudConsumer::persist(const std::vector<ResultRecord>& records) {
  auto n = store_.append(records);
  std::lock_guard lock(stats_mu_);
  stats_.persisted += n;
}

}  // namespace nilm::services
