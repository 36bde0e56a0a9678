#include "broker/client.hpp"

#include "broker/frame.hpp"
#include "common/error.hpp"

namespace nilm::broker {

BrokerClient::BrokerClient(const net::Endpoint& ep, std::chrono::milliseconds timeout)
    : sock_(net::connect_tcp(ep, timeout)), timeout_(timeout) {}

void BrokerClient::close() {
  sock_.close();
  pending_.clear();
}

nlohmann::json BrokerClient::read_one() {
  auto frame = read_frame(sock_);
  if (!frame) {
    sock_.close();
    throw IoError("broker closed the connection");
  }
  return *frame;
}

nlohmann::json BrokerClient::request(const nlohmann::json& body, const std::string& expect_op) {
  if (!sock_.valid()) throw StateError("broker connection is closed");
  auto frame = encode_frame(body);
  if (!sock_.send_all(frame.data(), frame.size())) {
    sock_.close();
    throw IoError("broker connection lost");
  }
  for (;;) {
    auto reply = read_one();
    const auto op = reply["op"].get<std::string>();
    if (op == "DELIVER") {
      pending_.push_back({reply.at("tag").get<std::uint64_t>(), {}, std::move(reply.at("envelope"))});
      continue;
    }
    if (op == "ERROR") throw ProtocolError(reply.value("code", "protocol"), reply.value("detail", std::string()));
    if (op != expect_op) throw ProtocolError("protocol", "expected " + expect_op + ", got " + op);
    return reply;
  }
}

std::size_t BrokerClient::declare(const std::string& queue, std::size_t capacity) {
  auto reply = request({{"op", "DECLARE"}, {"queue", queue}, {"capacity", capacity}}, "DECLARE");
  return reply.value("capacity", capacity);
}

void BrokerClient::publish(const std::string& queue, const nlohmann::json& envelope) {
  request({{"op", "PUBLISH"}, {"queue", queue}, {"envelope", envelope}}, "ACK");
}

void BrokerClient::publish(const std::string& queue, const MessageEnvelope& envelope) {
  publish(queue, to_json(envelope));
}

void BrokerClient::subscribe(const std::string& queue, std::size_t prefetch) {
  request({{"op", "SUBSCRIBE"}, {"queue", queue}, {"prefetch", prefetch}}, "SUBSCRIBE");
}

std::optional<Delivery> BrokerClient::next_delivery(std::chrono::milliseconds timeout) {
  if (pending_.empty()) {
    if (!sock_.valid()) throw StateError("broker connection is closed");
    if (!wait_readable(sock_, timeout)) return std::nullopt;
    auto frame = read_one();
    const auto op = frame["op"].get<std::string>();
    if (op == "ERROR") throw ProtocolError(frame.value("code", "protocol"), frame.value("detail", std::string()));
    if (op != "DELIVER") throw ProtocolError("protocol", "unexpected " + op + " frame");
    return Delivery{frame.at("tag").get<std::uint64_t>(), {}, std::move(frame.at("envelope"))};
  }
  auto d = std::move(pending_.front());
  pending_.pop_front();
  return d;
}

void BrokerClient::ack(std::uint64_t tag) { request({{"op", "ACK"}, {"tag", tag}}, "ACK"); }

void BrokerClient::nack(std::uint64_t tag, bool requeue) {
  request({{"op", "NACK"}, {"tag", tag}, {"requeue", requeue}}, "NACK");
}

}  // namespace nilm::broker
