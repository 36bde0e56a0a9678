#include "broker/queue_registry.hpp"

#include <algorithm>

#include <spdlog/spdlog.h>

#include "common/error.hpp"

namespace nilm::broker {

QueueRegistry::QueueRegistry(std::size_t default_capacity) : default_capacity_(default_capacity) {
  if (default_capacity == 0) throw InvalidInput("default capacity must be >= 1");
}

std::size_t QueueRegistry::declare(const std::string& name, std::size_t capacity) {
  if (name.empty()) throw ProtocolError("declaration", "queue name must be nonempty");
  if (capacity == 0) capacity = default_capacity_;
  std::lock_guard lock(mu_);
  auto [it, inserted] = queues_.try_emplace(name, Queue{capacity, {}, {}, 0});
  if (!inserted && it->second.capacity != capacity)
    throw ProtocolError("declaration", "queue '" + name + "' exists with capacity " +
                                           std::to_string(it->second.capacity));
  return capacity;
}

QueueRegistry::Queue& QueueRegistry::find(const std::string& name) {
  auto it = queues_.find(name);
  if (it == queues_.end()) throw ProtocolError("routing", "no queue named '" + name + "'");
  return it->second;
}

void QueueRegistry::publish(const std::string& queue, nlohmann::json envelope) {
  std::lock_guard lock(mu_);
  auto& q = find(queue);
  if (q.buffer.size() >= q.capacity)
    throw ProtocolError("overflow", "queue '" + queue + "' is full (" + std::to_string(q.capacity) + ")");
  q.buffer.push_back(std::move(envelope));
  dispatch(queue, q);
}

void QueueRegistry::subscribe(const std::string& queue, std::uint64_t consumer, DeliverFn fn, std::size_t prefetch) {
  if (prefetch == 0) prefetch = kDefaultPrefetch;
  std::lock_guard lock(mu_);
  auto& q = find(queue);
  auto it = std::find_if(q.subs.begin(), q.subs.end(), [&](const auto& s) { return s.consumer == consumer; });
  if (it != q.subs.end()) {
    it->prefetch = prefetch;
    it->fn = std::move(fn);
  } else {
    q.subs.push_back({consumer, prefetch, 0, std::move(fn)});
  }
  dispatch(queue, q);
}

QueueRegistry::InFlight QueueRegistry::take(std::uint64_t consumer, std::uint64_t tag) {
  auto it = in_flight_.find(tag);
  if (it == in_flight_.end() || it->second.consumer != consumer)
    throw ProtocolError("protocol", "delivery tag " + std::to_string(tag) + " is not in flight on this connection");
  InFlight f = std::move(it->second);
  in_flight_.erase(it);
  return f;
}

void QueueRegistry::release_slot(Queue& q, std::uint64_t consumer) {
  for (auto& s : q.subs)
    if (s.consumer == consumer && s.in_flight > 0) --s.in_flight;
}

void QueueRegistry::ack(std::uint64_t consumer, std::uint64_t tag) {
  std::lock_guard lock(mu_);
  auto f = take(consumer, tag);
  auto& q = find(f.queue);
  release_slot(q, consumer);
  dispatch(f.queue, q);
}

void QueueRegistry::nack(std::uint64_t consumer, std::uint64_t tag, bool requeue) {
  std::lock_guard lock(mu_);
  auto f = take(consumer, tag);
  auto& q = find(f.queue);
  release_slot(q, consumer);
  if (requeue) {
    q.buffer.push_back(std::move(f.envelope));
  } else {
    auto dead_name = f.queue + ".dead";
    auto& dead = queues_.try_emplace(dead_name, Queue{default_capacity_, {}, {}, 0}).first->second;
    if (dead.buffer.size() < dead.capacity) {
      dead.buffer.push_back(std::move(f.envelope));
      dispatch(dead_name, dead);
    } else {
      spdlog::warn("dead-letter queue {} full, dropping message", dead_name);
    }
  }
  dispatch(f.queue, queues_.at(f.queue));
}

void QueueRegistry::disconnect(std::uint64_t consumer) {
  std::lock_guard lock(mu_);
  for (auto& [name, q] : queues_) {
    std::erase_if(q.subs, [&](const auto& s) { return s.consumer == consumer; });
    if (q.next_sub >= q.subs.size()) q.next_sub = 0;
  }
  std::vector<std::uint64_t> tags;
  for (const auto& [tag, f] : in_flight_)
    if (f.consumer == consumer) tags.push_back(tag);
  // Tags ascend; pushing to the front in reverse restores delivery order.
  std::vector<std::string> touched;
  for (auto it = tags.rbegin(); it != tags.rend(); ++it) {
    auto node = in_flight_.extract(*it);
    queues_.at(node.mapped().queue).buffer.push_front(std::move(node.mapped().envelope));
    touched.push_back(node.mapped().queue);
  }
  std::sort(touched.begin(), touched.end());
  touched.erase(std::unique(touched.begin(), touched.end()), touched.end());
  for (const auto& name : touched) dispatch(name, queues_.at(name));
}

void QueueRegistry::dispatch(const std::string& name, Queue& q) {
  while (!q.buffer.empty() && !q.subs.empty()) {
    Subscription* target = nullptr;
    for (std::size_t i = 0; i < q.subs.size(); ++i) {
      auto& s = q.subs[(q.next_sub + i) % q.subs.size()];
      if (s.in_flight < s.prefetch) {
        target = &s;
        q.next_sub = (q.next_sub + i + 1) % q.subs.size();
        break;
      }
    }
    if (!target) return;
    Delivery d{++next_tag_, name, std::move(q.buffer.front())};
    q.buffer.pop_front();
    ++target->in_flight;
    in_flight_.emplace(d.tag, InFlight{name, target->consumer, d.envelope});
    target->fn(d);
  }
}

QueueStats QueueRegistry::stats(const std::string& queue) const {
  std::lock_guard lock(mu_);
  auto it = queues_.find(queue);
  if (it == queues_.end()) throw ProtocolError("routing", "no queue named '" + queue + "'");
  QueueStats s{it->second.capacity, it->second.buffer.size(), 0, it->second.subs.size()};
  for (const auto& [tag, f] : in_flight_)
    if (f.queue == queue) ++s.in_flight;
  return s;
}

}  // namespace nilm::broker
