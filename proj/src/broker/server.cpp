#include "broker/server.hpp"

#include <sys/socket.h>

#include <condition_variable>
#include <deque>

#include <spdlog/spdlog.h>

#include "broker/frame.hpp"
#include "common/error.hpp"

namespace nilm::broker {

struct BrokerServer::Connection {
  std::uint64_t id = 0;
  net::Socket sock;
  std::mutex mu;
  std::condition_variable cv;
  std::deque<std::string> outbox;
  bool closing = false;
  std::atomic<bool> finished{false};
  std::thread reader;
  std::thread writer;

  void enqueue(std::string frame) {
    {
      std::lock_guard lock(mu);
      if (closing) return;
      outbox.push_back(std::move(frame));
    }
    cv.notify_one();
  }

  void write_loop() {
    for (;;) {
      std::string frame;
      {
        std::unique_lock lock(mu);
        cv.wait(lock, [&] { return closing || !outbox.empty(); });
        if (outbox.empty()) return;
        frame = std::move(outbox.front());
        outbox.pop_front();
      }
      if (!sock.send_all(frame.data(), frame.size())) {
        sock.shutdown();
        return;
      }
    }
  }

  void close_outbox() {
    {
      std::lock_guard lock(mu);
      closing = true;
    }
    cv.notify_all();
  }
};

BrokerServer::BrokerServer(net::Endpoint listen, std::size_t default_capacity)
    : listen_(std::move(listen)), registry_(default_capacity) {}

BrokerServer::~BrokerServer() { stop(); }

void BrokerServer::start() {
  listener_ = net::listen_tcp(listen_);
  port_ = net::local_port(listener_);
  running_ = true;
  acceptor_ = std::thread([this] { accept_loop(); });
  spdlog::info("broker listening on {}:{}", listen_.host, port_);
}

void BrokerServer::stop() {
  if (!running_.exchange(false)) return;
  listener_.shutdown();
  if (acceptor_.joinable()) acceptor_.join();
  listener_.close();
  std::list<std::shared_ptr<Connection>> conns;
  {
    std::lock_guard lock(conns_mu_);
    conns.swap(conns_);
  }
  for (auto& c : conns) c->sock.shutdown();
  for (auto& c : conns)
    if (c->reader.joinable()) c->reader.join();
}

void BrokerServer::reap() {
  std::list<std::shared_ptr<Connection>> done;
  {
    std::lock_guard lock(conns_mu_);
    for (auto it = conns_.begin(); it != conns_.end();) {
      if ((*it)->finished) {
        done.push_back(*it);
        it = conns_.erase(it);
      } else {
        ++it;
      }
    }
  }
  for (auto& c : done)
    if (c->reader.joinable()) c->reader.join();
}

void BrokerServer::accept_loop() {
  while (running_) {
    int fd = ::accept(listener_.fd(), nullptr, nullptr);
    if (fd < 0) {
      if (!running_) break;
      if (errno == EINTR || errno == ECONNABORTED) continue;
      if (errno == EMFILE || errno == ENFILE) {
        std::this_thread::sleep_for(std::chrono::milliseconds(10));
        continue;
      }
      break;
    }
    reap();
    auto conn = std::make_shared<Connection>();
    conn->id = ++next_id_;
    conn->sock = net::Socket(fd);
    conn->sock.set_nodelay();
    std::lock_guard lock(conns_mu_);
    if (!running_) break;
    conns_.push_back(conn);
    conn->reader = std::thread([this, conn] { serve(conn); });
  }
}

void BrokerServer::serve(const std::shared_ptr<Connection>& conn) {
  conn->writer = std::thread([conn] { conn->write_loop(); });
  std::weak_ptr<Connection> weak = conn;
  auto deliver = [weak](const Delivery& d) {
    if (auto c = weak.lock())
      c->enqueue(encode_frame(nlohmann::json{{"op", "DELIVER"}, {"tag", d.tag}, {"envelope", d.envelope}}));
  };
  auto reply = [&](const nlohmann::json& body) { conn->enqueue(encode_frame(body)); };

  for (;;) {
    std::optional<nlohmann::json> req;
    try {
      req = read_frame(conn->sock);
    } catch (const ProtocolError& e) {
      reply(error_body(e.kind(), e.what()));
      break;
    }
    if (!req) break;
    const auto op = (*req)["op"].get<std::string>();
    try {
      auto str = [&](const char* key) {
        auto it = req->find(key);
        if (it == req->end() || !it->is_string()) throw ProtocolError("bad_request", std::string("missing ") + key);
        return it->get<std::string>();
      };
      auto uint = [&](const char* key, std::uint64_t fallback, bool required) -> std::uint64_t {
        auto it = req->find(key);
        if (it == req->end()) {
          if (required) throw ProtocolError("bad_request", std::string("missing ") + key);
          return fallback;
        }
        if (!it->is_number_unsigned()) throw ProtocolError("bad_request", std::string(key) + " must be unsigned");
        return it->get<std::uint64_t>();
      };
      if (op == "DECLARE") {
        auto q = str("queue");
        auto cap = registry_.declare(q, uint("capacity", 0, false));
        reply({{"op", "DECLARE"}, {"ok", true}, {"queue", q}, {"capacity", cap}});
      } else if (op == "PUBLISH") {
        auto q = str("queue");
        auto it = req->find("envelope");
        if (it == req->end() || !it->is_object()) throw ProtocolError("bad_request", "missing envelope");
        registry_.publish(q, std::move(*it));
        reply({{"op", "ACK"}, {"queue", q}});
      } else if (op == "SUBSCRIBE") {
        auto q = str("queue");
        registry_.subscribe(q, conn->id, deliver, uint("prefetch", kDefaultPrefetch, false));
        reply({{"op", "SUBSCRIBE"}, {"ok", true}, {"queue", q}});
      } else if (op == "ACK") {
        auto tag = uint("tag", 0, true);
        registry_.ack(conn->id, tag);
        reply({{"op", "ACK"}, {"tag", tag}});
      } else if (op == "NACK") {
        auto tag = uint("tag", 0, true);
        auto it = req->find("requeue");
        bool requeue = it == req->end() || !it->is_boolean() || it->get<bool>();
        registry_.nack(conn->id, tag, requeue);
        reply({{"op", "NACK"}, {"tag", tag}});
      } else {
        throw ProtocolError("protocol", "unsupported op '" + op + "'");
      }
    } catch (const ProtocolError& e) {
      reply(error_body(e.kind(), e.what()));
    } catch (const std::exception& e) {
      reply(error_body("bad_request", e.what()));
    }
  }

  registry_.disconnect(conn->id);
  conn->close_outbox();
  if (conn->writer.joinable()) conn->writer.join();
  conn->sock.shutdown();
  conn->finished = true;
}

}  // namespace nilm::broker
