#include <doctest.h>

#include <cmath>

#include "broker/envelope.hpp"
#include "common/error.hpp"
#include "datagen/datagen.hpp"
#include "preprocess/preprocess.hpp"
#include "support/support.hpp"

using namespace nilm;
using namespace nilm::preprocess;

namespace {

std::vector<PowerSample> ramp(std::size_t n) {
  std::vector<PowerSample> out;
  for (std::size_t i = 0; i < n; ++i) {
    PowerSample s;
    s.ts_ms = static_cast<std::int64_t>(i) * 1000;
    s.voltage = 220;
    s.frequency = 50;
    s.active_power = static_cast<double>(i);
    s.reactive_power = -static_cast<double>(i) / 2;
    s.apparent_power = std::hypot(s.active_power, s.reactive_power);
    s.power_factor = s.apparent_power > 0 ? s.active_power / s.apparent_power : 1;
    s.current = s.apparent_power / 220;
    out.push_back(s);
  }
  return out;
}

std::size_t serialized_bytes(const std::vector<PowerSample>& stream) {
  broker::MessageEnvelope env{"h", 1, 0, {}, {}};
  for (const auto& s : stream) env.samples.push_back({s.ts_ms, s.active_power, s.reactive_power});
  return broker::serialize(env).size();
}

}  // namespace

TEST_SUITE("preprocess") {

TEST_CASE("clean keeps valid rows and negative reactive power") {
  auto stream = ramp(20);
  auto r = clean(stream);
  CHECK(r.rejected == 0);
  CHECK(r.samples.size() == 20);
  stream[4].active_power = -5;
  stream[9].voltage = kMissing;
  stream[11].power_factor = 1.5;
  r = clean(stream);
  CHECK(r.rejected == 3);
  CHECK(r.samples[4].ts_ms == 5000);
}

TEST_CASE("clean properties on dirty generated data") {
  auto data = datagen::generate_scenario(test::separable_scenario(2000, 6));
  auto dirty = datagen::inject_dirty(data.samples, 0.03, 2);
  auto once = clean(dirty.samples);
  CHECK(once.rejected + once.samples.size() == dirty.samples.size());
  CHECK(clean(once.samples).rejected == 0);
  CHECK(serialized_bytes(once.samples) < serialized_bytes(dirty.samples));
  auto nothing = clean(data.samples);
  CHECK(serialized_bytes(nothing.samples) == serialized_bytes(data.samples));
}

TEST_CASE("normalization") {
  auto stream = ramp(10);
  for (auto& s : stream) s.reactive_power = 7;
  auto stats = normalize_fit(stream);
  auto z = normalize_apply(stream, stats);
  for (const auto& s : z) CHECK(s.reactive_power == 0.0);
  double mean = 0, var = 0;
  for (const auto& s : z) mean += s.active_power;
  mean /= 10;
  for (const auto& s : z) var += (s.active_power - mean) * (s.active_power - mean);
  CHECK(std::abs(mean) < 1e-12);
  CHECK(var / 10 == doctest::Approx(1.0));

  auto again = normalize_apply(z, normalize_fit(z));
  for (std::size_t i = 0; i < z.size(); ++i) CHECK(std::abs(again[i].active_power - z[i].active_power) < 1e-9);
  CHECK_THROWS_AS(normalize_fit(std::vector<PowerSample>(1)), InvalidInput);
}

TEST_CASE("window counting") {
  auto stream = ramp(10);
  CHECK(window_stream(stream, 5).size() == 6);
  CHECK(window_stream(stream, 3, 2).size() == 4);
  CHECK(window_stream(stream, 11).empty());
  auto one = window_stream(stream, 10);
  REQUIRE(one.size() == 1);
  for (std::size_t t = 0; t < 10; ++t) CHECK(one[0].at(t, 0) == static_cast<double>(t));
  CHECK_THROWS_AS(window_stream(stream, 0), InvalidInput);
  CHECK_THROWS_AS(window_stream(stream, 3, 0), InvalidInput);
}

TEST_CASE("stride-W windows reconstruct the stream prefix") {
  auto stream = ramp(47);
  auto windows = window_stream(stream, 5, 5);
  std::vector<double> p;
  for (const auto& w : windows)
    for (std::size_t t = 0; t < w.length; ++t) p.push_back(w.at(t, 0));
  REQUIRE(p.size() == 45);
  for (std::size_t i = 0; i < p.size(); ++i) CHECK(p[i] == stream[i].active_power);
}

TEST_CASE("window midpoint and timestamps") {
  auto stream = ramp(12);
  auto windows = window_stream(stream, 5, 1, "h");
  CHECK(midpoint_offset(5) == 2);
  for (std::size_t i = 0; i < windows.size(); ++i) {
    CHECK(windows[i].start_ts_ms == stream[i].ts_ms);
    CHECK(windows[i].end_ts_ms == stream[i + 4].ts_ms);
    CHECK(windows[i].midpoint_ts_ms == stream[i + 2].ts_ms);
    CHECK(windows[i].household_id == "h");
  }
}

TEST_CASE("sliding window matches batch slicing") {
  auto stream = ramp(30);
  SlidingWindow sw(7, 3);
  std::vector<WindowBatch> live;
  for (const auto& s : stream)
    if (auto w = sw.push(s)) live.push_back(*w);
  auto batch = window_stream(stream, 7, 3);
  REQUIRE(live.size() == batch.size());
  for (std::size_t i = 0; i < live.size(); ++i) CHECK(live[i].values == batch[i].values);
  CHECK(sw.size() == 7);
  CHECK(sw.pushed() == 30);
  sw.reset();
  CHECK(sw.size() == 0);
}

TEST_CASE("label threshold") {
  auto cat = ApplianceCatalog({{"a", "A", {{100, 0}}}, {"b", "B", {{40, 0}, {80, 0}}}});
  auto s = label_threshold({{"a", 100}, {"b_1", 0}, {"b_2", 40}}, cat, 0.5);
  REQUIRE(s.size() == 3);
  CHECK(s[0] == ApplianceState{"a", true});
  CHECK(s[1] == ApplianceState{"b_1", false});
  CHECK(s[2] == ApplianceState{"b_2", true});
  CHECK(label_threshold({{"a", 49.999}}, cat, 0.5)[0].on == false);
  CHECK_THROWS_AS(label_threshold({{"zzz", 1}}, cat, 0.5), InvalidInput);
}

}
