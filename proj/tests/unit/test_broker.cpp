#include <doctest.h>

#include <thread>

#include "broker/client.hpp"
#include "broker/envelope.hpp"
#include "broker/frame.hpp"
#include "broker/queue_registry.hpp"
#include "broker/server.hpp"
#include "common/error.hpp"

using namespace nilm;
using namespace nilm::broker;
using namespace std::chrono_literals;

namespace {

nlohmann::json msg(int i) { return {{"household_id", "h"}, {"seq", i}, {"sent_at_ms", 0}, {"samples", {{{"ts", i}, {"p", 1}, {"q", 0}}}}}; }

struct Sink {
  std::vector<Delivery> got;
  DeliverFn fn() {
    return [this](const Delivery& d) { got.push_back(d); };
  }
};

MessageEnvelope envelope(std::uint64_t seq) { return {"house-1", seq, 1700000000000, {{1, 2.5, -0.25}, {2, 3, 0}}, {}}; }

}  // namespace

TEST_SUITE("broker") {

TEST_CASE("declare is idempotent and validated") {
  QueueRegistry reg(5);
  CHECK(reg.declare("q") == 5);
  CHECK(reg.declare("q") == 5);
  CHECK_THROWS_AS(reg.declare("q", 7), ProtocolError);
  CHECK_THROWS_AS(reg.declare(""), ProtocolError);
  reg.publish("q", msg(1));
  CHECK(reg.stats("q").buffered == 1);
  try {
    reg.publish("nope", msg(1));
    FAIL("expected routing error");
  } catch (const ProtocolError& e) {
    CHECK(e.kind() == "routing");
  }
}

TEST_CASE("FIFO delivery and bounded buffer") {
  QueueRegistry reg;
  reg.declare("q", 2);
  reg.publish("q", msg(1));
  reg.publish("q", msg(2));
  try {
    reg.publish("q", msg(3));
    FAIL("expected overflow");
  } catch (const ProtocolError& e) {
    CHECK(e.kind() == "overflow");
  }
  Sink s;
  reg.subscribe("q", 1, s.fn());
  REQUIRE(s.got.size() == 2);
  CHECK(s.got[0].envelope["seq"] == 1);
  CHECK(s.got[1].envelope["seq"] == 2);
  CHECK(s.got[0].tag < s.got[1].tag);
}

TEST_CASE("paused consumer: publishing up to capacity never drops") {
  QueueRegistry reg;
  reg.declare("q", 100);
  for (int i = 0; i < 100; ++i) reg.publish("q", msg(i));
  Sink s;
  reg.subscribe("q", 1, s.fn(), 1000);
  REQUIRE(s.got.size() == 100);
  for (int i = 0; i < 100; ++i) CHECK(s.got[i].envelope["seq"] == i);
}

TEST_CASE("ack, nack and redelivery on disconnect") {
  QueueRegistry reg;
  reg.declare("q");
  reg.publish("q", msg(1));
  reg.publish("q", msg(2));
  Sink a;
  reg.subscribe("q", 1, a.fn());
  REQUIRE(a.got.size() == 2);
  reg.ack(1, a.got[0].tag);
  CHECK_THROWS_AS(reg.ack(1, a.got[0].tag), ProtocolError);
  CHECK_THROWS_AS(reg.ack(1, 9999), ProtocolError);
  CHECK_THROWS_AS(reg.ack(2, a.got[1].tag), ProtocolError);
  reg.disconnect(1);
  CHECK(reg.stats("q").buffered == 1);

  Sink b;
  reg.subscribe("q", 2, b.fn());
  REQUIRE(b.got.size() == 1);
  CHECK(b.got[0].envelope["seq"] == 2);
  reg.nack(2, b.got[0].tag, true);
  REQUIRE(b.got.size() == 2);
  CHECK(b.got[1].envelope["seq"] == 2);
  reg.nack(2, b.got[1].tag, false);
  CHECK(reg.stats("q.dead").buffered == 1);
  CHECK(reg.stats("q").in_flight == 0);
}

TEST_CASE("prefetch limits in-flight messages") {
  QueueRegistry reg;
  reg.declare("q");
  for (int i = 0; i < 10; ++i) reg.publish("q", msg(i));
  Sink s;
  reg.subscribe("q", 1, s.fn(), 3);
  CHECK(s.got.size() == 3);
  reg.ack(1, s.got[0].tag);
  CHECK(s.got.size() == 4);
  CHECK(reg.stats("q").in_flight == 3);
}

TEST_CASE("envelope canonical form round trips") {
  auto env = envelope(7);
  env.results.push_back({"house-1", 2, {{"fan_1", 0.25, 0}}, "edge", "gbdt-1"});
  auto text = serialize(env);
  CHECK(parse_envelope(text) == env);
  CHECK(serialize(parse_envelope(text)) == text);
  CHECK(text.find(' ') == std::string::npos);
  CHECK(text.find("\"household_id\"") < text.find("\"samples\""));
  CHECK(serialize(envelope(1)).find("results") == std::string::npos);
  CHECK_THROWS_AS(parse_envelope(R"({"household_id":"h","seq":1,"sent_at_ms":0,"samples":[]})"), InvalidInput);
  CHECK_THROWS_AS(parse_envelope(R"({"seq":1})"), InvalidInput);
}

TEST_CASE("frames are big-endian length prefixed") {
  auto f = encode_frame(std::string("{\"op\":\"X\"}"));
  REQUIRE(f.size() == 4 + 10);
  CHECK(f[0] == 0);
  CHECK(f[1] == 0);
  CHECK(f[2] == 0);
  CHECK(f[3] == 10);
}

TEST_CASE("client and server over TCP") {
  BrokerServer server({"127.0.0.1", 0}, 3);
  server.start();
  net::Endpoint ep{"127.0.0.1", server.port()};
  BrokerClient pub(ep);
  CHECK(pub.declare("q") == 3);
  for (std::uint64_t i = 1; i <= 3; ++i) pub.publish("q", envelope(i));
  try {
    pub.publish("q", envelope(4));
    FAIL("expected overflow");
  } catch (const ProtocolError& e) {
    CHECK(e.kind() == "overflow");
  }

  {
    BrokerClient c(ep);
    c.subscribe("q");
    auto d = c.next_delivery(2s);
    REQUIRE(d);
    CHECK(envelope_from_json(d->envelope) == envelope(1));
    c.ack(d->tag);
    CHECK_THROWS_AS(c.ack(d->tag), ProtocolError);
    CHECK(c.next_delivery(2s));
    c.close();  // two messages unacked
  }
  BrokerClient c2(ep);
  c2.subscribe("q");
  std::vector<std::uint64_t> seqs;
  while (auto d = c2.next_delivery(500ms)) {
    seqs.push_back(envelope_from_json(d->envelope).seq);
    c2.ack(d->tag);
  }
  CHECK(seqs == std::vector<std::uint64_t>{2, 3});
  server.stop();
}

TEST_CASE("garbage on the wire gets an error frame") {
  BrokerServer server({"127.0.0.1", 0});
  server.start();
  auto sock = net::connect_tcp({"127.0.0.1", server.port()});
  auto bad = encode_frame(std::string("[1,2]"));
  REQUIRE(sock.send_all(bad.data(), bad.size()));
  auto reply = read_frame(sock);
  REQUIRE(reply);
  CHECK((*reply)["op"] == "ERROR");
  server.stop();
}

}
