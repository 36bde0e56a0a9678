#include <doctest.h>
#include <httplib.h>

#include <atomic>
#include <thread>

#include "bench/bench.hpp"
#include "common/error.hpp"
#include "common/net.hpp"
#include "support/support.hpp"

using namespace nilm;
using namespace nilm::bench;

namespace {

/// In-process HTTP stub that answers every request with a fixed status.
struct Stub {
  httplib::Server svr;
  std::thread thread;
  int port = 0;
  std::atomic<std::size_t> hits{0};

  explicit Stub(int status) {
    auto h = [this, status](const httplib::Request&, httplib::Response& res) {
      ++hits;
      res.status = status;
      res.set_content("{}", "application/json");
    };
    svr.Post("/v1/infer", h);
    svr.Get("/v1/health", h);
    port = svr.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { svr.listen_after_bind(); });
    svr.wait_until_ready();
  }
  ~Stub() {
    svr.stop();
    thread.join();
  }
  std::string target() const { return "http://127.0.0.1:" + std::to_string(port); }
};

LoadProfile quick_profile() {
  LoadProfile p;
  p.levels = {1, 3};
  p.think_time_s = 0.01;
  p.repetitions = 2;
  p.requests_per_thread = 3;
  p.request.body = R"({"household_id":"h","window":[[1,2]]})";
  return p;
}

}  // namespace

TEST_SUITE("bench") {

TEST_CASE("nearest-rank percentiles") {
  std::vector<double> v{10, 1, 9, 2, 8, 3, 7, 4, 6, 5};
  CHECK(percentile(v, 90) == 9);
  CHECK(percentile(v, 50) == 5);
  CHECK(percentile(v, 100) == 10);
  CHECK(percentile(v, 1) == 1);
  CHECK(percentile({42}, 90) == 42);
  CHECK_THROWS_AS(percentile({}, 50), InvalidInput);
  CHECK_THROWS_AS(percentile(v, 0), InvalidInput);
  CHECK_THROWS_AS(percentile(v, 101), InvalidInput);
}

TEST_CASE("summary statistics are ordered") {
  std::mt19937_64 rng(3);
  std::exponential_distribution<double> dist(0.1);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> lat(1 + rng() % 200);
    for (auto& x : lat) x = dist(rng);
    auto r = summarize(5, lat, 0, lat.size(), 2.0);
    CHECK(r.min_ms <= r.median_ms);
    CHECK(r.median_ms <= r.p90_ms);
    CHECK(r.p90_ms <= r.max_ms);
    CHECK(r.min_ms <= r.average_ms);
    CHECK(r.average_ms <= r.max_ms);
    CHECK(r.throughput_tps == doctest::Approx(static_cast<double>(lat.size()) / 2.0));
    CHECK(r.requests == lat.size());
  }
  auto r = summarize(1, {1, 2, 3, 4}, 0, 4, 1.0);
  CHECK(r.average_ms == 2.5);
  CHECK(r.median_ms == 2);
}

TEST_CASE("profile validation and JSON") {
  LoadProfile p = quick_profile();
  auto back = profile_from_json(to_json(p));
  CHECK(back.levels == p.levels);
  CHECK(back.think_time_s == p.think_time_s);
  CHECK(back.request.body == p.request.body);
  p.levels.clear();
  CHECK_THROWS_AS(p.validate(), InvalidInput);
  p = quick_profile();
  p.repetitions = 0;
  CHECK_THROWS_AS(p.validate(), InvalidInput);
  CHECK(LoadProfile{}.levels == std::vector<std::size_t>{1, 3, 5, 10, 30, 50, 100});
}

TEST_CASE("load run counts every request") {
  Stub stub(200);
  auto p = quick_profile();
  auto report = run_load(p, stub.target());
  REQUIRE(report.levels.size() == 2);
  std::size_t expected = 0;
  for (std::size_t i = 0; i < 2; ++i) {
    const auto& l = report.levels[i];
    CHECK(l.concurrency == p.levels[i]);
    CHECK(l.requests == p.levels[i] * p.requests_per_thread * p.repetitions);
    CHECK(l.errors == 0);
    CHECK(l.throughput_tps > 0);
    expected += l.requests;
  }
  CHECK(stub.hits == expected);
}

TEST_CASE("server errors are counted but still timed") {
  Stub stub(500);
  auto p = quick_profile();
  p.levels = {2};
  auto l = run_level(p, stub.target(), 2);
  CHECK(l.errors == l.requests);
  CHECK(l.requests == 12);
  CHECK(l.max_ms > 0);
  CHECK(l.throughput_tps == 0);
}

TEST_CASE("unreachable target") {
  auto p = quick_profile();
  CHECK_THROWS_AS(run_load(p, "http://127.0.0.1:" + std::to_string(net::find_free_port())), IoError);
}

TEST_CASE("report rendering") {
  LatencyReport r;
  r.levels.push_back(summarize(3, {1.5, 2.5, 3.5}, 1, 3, 1.0));
  auto csv = to_csv(r);
  auto lines = std::count(csv.begin(), csv.end(), '\n');
  CHECK(lines == 2);
  CHECK(csv.find("concurrency") == 0);
  auto md = to_markdown(r);
  CHECK(md.find("| 3 |") != std::string::npos);
  CHECK(md.find("2.5") != std::string::npos);
  CHECK(csv.find("2.5") != std::string::npos);
  CHECK(parse_format("csv") == Format::csv);
  CHECK(parse_format("markdown") == Format::markdown);
  CHECK_THROWS_AS(parse_format("xml"), InvalidInput);

  test::TempDir dir;
  emit_report(r, Format::csv, dir / "r.csv");
  CHECK(std::filesystem::file_size(dir / "r.csv") == csv.size());
}

TEST_CASE("edge to cloud ratios") {
  LatencyReport a, b;
  a.levels.push_back(summarize(1, {2, 2}, 0, 2, 1));
  b.levels.push_back(summarize(1, {8, 8}, 0, 2, 1));
  auto rows = compare_reports(a, b);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].ratio == 0.25);
  CHECK(compare_reports(a, a)[0].ratio == 1.0);
  CHECK(ratio_markdown(rows).find("0.25") != std::string::npos);
  b.levels[0].concurrency = 2;
  CHECK_THROWS_AS(compare_reports(a, b), InvalidInput);
}

TEST_CASE("saturation stops at the first failing level") {
  Stub ok(200);
  SaturateConfig cfg;
  cfg.start = 1;
  cfg.step = 1;
  cfg.max = 3;
  cfg.profile = quick_profile();
  auto r = saturate(cfg, ok.target());
  CHECK(r.levels.size() == 3);
  CHECK(r.threshold == 3);
  CHECK_FALSE(r.failed);

  Stub bad(503);
  auto f = saturate(cfg, bad.target());
  CHECK(f.levels.size() == 1);
  CHECK(f.threshold == 0);
  CHECK(f.failed);
  CHECK(to_json(f)["threshold"] == 0);
}

}
