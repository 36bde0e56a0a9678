#include "services/balancer.hpp"

#include <poll.h>
#include <sys/socket.h>

#include <spdlog/spdlog.h>

#include "common/error.hpp"

namespace nilm::services {

using namespace std::chrono_literals;

std::optional<std::size_t> RoundRobin::next(const std::vector<bool>& healthy) {
  for (std::size_t i = 0; i < n_; ++i) {
    auto idx = (cursor_ + i) % n_;
    if (idx < healthy.size() && healthy[idx]) {
      cursor_ = (idx + 1) % n_;
      return idx;
    }
  }
  return std::nullopt;
}

Balancer::Balancer(BalancerConfig cfg)
    : cfg_(std::move(cfg)),
      rr_(cfg_.workers.size()),
      healthy_(cfg_.workers.size(), true),
      failures_(cfg_.workers.size(), 0),
      routed_(cfg_.workers.size(), 0) {
  cfg_.validate();
}

Balancer::~Balancer() { stop(); }

void Balancer::start() {
  listener_ = net::listen_tcp(cfg_.listen);
  port_ = net::local_port(listener_);
  running_ = true;
  acceptor_ = std::thread([this] { accept_loop(); });
  health_ = std::thread([this] { health_loop(); });
  spdlog::info("balancer listening on {}:{} over {} workers", cfg_.listen.host, port_, cfg_.workers.size());
}

void Balancer::stop() {
  if (!running_.exchange(false)) return;
  listener_.shutdown();
  cv_.notify_all();
  if (acceptor_.joinable()) acceptor_.join();
  if (health_.joinable()) health_.join();
  listener_.close();
  std::unique_lock lock(mu_);
  for (int fd : live_fds_) ::shutdown(fd, SHUT_RDWR);
  cv_.wait(lock, [&] { return active_ == 0; });
}

std::vector<std::size_t> Balancer::routed() const {
  std::lock_guard lock(mu_);
  return routed_;
}

std::vector<bool> Balancer::healthy() const {
  std::lock_guard lock(mu_);
  return healthy_;
}

void Balancer::record_probe(std::size_t i, bool ok) {
  std::lock_guard lock(mu_);
  if (ok) {
    failures_[i] = 0;
    if (!healthy_[i]) spdlog::info("worker {} is healthy again", cfg_.workers[i].str());
    healthy_[i] = true;
  } else if (++failures_[i] >= cfg_.failure_threshold && healthy_[i]) {
    healthy_[i] = false;
    spdlog::warn("worker {} marked unhealthy", cfg_.workers[i].str());
  }
}

void Balancer::health_loop() {
  const auto period = std::chrono::milliseconds(cfg_.health_period_ms);
  while (running_) {
    for (std::size_t i = 0; i < cfg_.workers.size() && running_; ++i)
      record_probe(i, net::probe_tcp(cfg_.workers[i], std::chrono::milliseconds(cfg_.connect_timeout_ms)));
    std::unique_lock lock(mu_);
    cv_.wait_for(lock, period, [&] { return !running_; });
  }
}

void Balancer::accept_loop() {
  while (running_) {
    int fd = ::accept(listener_.fd(), nullptr, nullptr);
    if (fd < 0) {
      if (!running_) break;
      if (errno == EINTR || errno == ECONNABORTED) continue;
      if (errno == EMFILE || errno == ENFILE) {
        std::this_thread::sleep_for(10ms);
        continue;
      }
      break;
    }
    {
      std::lock_guard lock(mu_);
      ++active_;
      live_fds_.insert(fd);
    }
    try {
      std::thread([this, fd] { proxy(fd); }).detach();
    } catch (const std::system_error&) {
      ::close(fd);
      std::lock_guard lock(mu_);
      live_fds_.erase(fd);
      if (--active_ == 0) cv_.notify_all();
    }
  }
}

std::optional<std::pair<std::size_t, net::Socket>> Balancer::pick_and_connect() {
  for (std::size_t attempt = 0; attempt < cfg_.workers.size(); ++attempt) {
    std::optional<std::size_t> idx;
    {
      std::lock_guard lock(mu_);
      idx = rr_.next(healthy_);
    }
    if (!idx) return std::nullopt;
    try {
      auto sock = net::connect_tcp(cfg_.workers[*idx], std::chrono::milliseconds(cfg_.connect_timeout_ms));
      std::lock_guard lock(mu_);
      ++routed_[*idx];
      failures_[*idx] = 0;
      return std::make_pair(*idx, std::move(sock));
    } catch (const IoError&) {
      record_probe(*idx, false);
    }
  }
  return std::nullopt;
}

void Balancer::proxy(int client_fd) {
  net::Socket client(client_fd);
  auto picked = pick_and_connect();
  if (!picked) {
    static const std::string body = R"({"error":"no healthy worker"})";
    auto resp = "HTTP/1.1 502 Bad Gateway\r\nContent-Type: application/json\r\nContent-Length: " +
                std::to_string(body.size()) + "\r\nConnection: close\r\n\r\n" + body;
    client.send_all(resp.data(), resp.size());
    client.shutdown();
  } else {
    net::Socket& worker = picked->second;
    {
      std::lock_guard lock(mu_);
      live_fds_.insert(worker.fd());
    }
    pollfd fds[2] = {{client.fd(), POLLIN, 0}, {worker.fd(), POLLIN, 0}};
    bool open[2] = {true, true};
    char buf[16384];
    while (open[0] || open[1]) {
      fds[0].events = open[0] ? POLLIN : 0;
      fds[1].events = open[1] ? POLLIN : 0;
      if (::poll(fds, 2, 1000) < 0) {
        if (errno == EINTR) continue;
        break;
      }
      if (!running_) break;
      bool failed = false;
      for (int side = 0; side < 2 && !failed; ++side) {
        if (!open[side] || !(fds[side].revents & (POLLIN | POLLHUP | POLLERR))) continue;
        net::Socket& from = side == 0 ? client : worker;
        net::Socket& to = side == 0 ? worker : client;
        auto n = ::recv(from.fd(), buf, sizeof buf, 0);
        if (n > 0) {
          if (!to.send_all(buf, static_cast<std::size_t>(n))) failed = true;
        } else if (n == 0) {
          open[side] = false;
          ::shutdown(to.fd(), SHUT_WR);
        } else if (errno != EINTR && errno != EAGAIN) {
          failed = true;
        }
      }
      if (failed) break;
      // Once the worker has finished its response there is nothing left to relay.
      if (!open[1]) break;
    }
    std::lock_guard lock(mu_);
    live_fds_.erase(worker.fd());
  }
  std::lock_guard lock(mu_);
  live_fds_.erase(client_fd);
  client.close();
  if (--active_ == 0) cv_.notify_all();
}

}  // namespace nilm::services
