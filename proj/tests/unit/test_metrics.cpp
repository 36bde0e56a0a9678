#include <doctest.h>

#include <algorithm>
#include <random>

#include "common/error.hpp"
#include "metrics/metrics.hpp"
#include "metrics/types.hpp"

using namespace nilm;
using namespace nilm::metrics;

TEST_SUITE("metrics") {

TEST_CASE("confusion counts the identity and all-miss cases") {
  std::vector<std::uint8_t> a{1, 0, 1};
  CHECK(confusion(a, a) == ConfusionCounts{2, 1, 0, 0});
  std::vector<std::uint8_t> pred{0, 0}, truth{1, 1};
  CHECK(confusion(pred, truth) == ConfusionCounts{0, 0, 0, 2});
}

TEST_CASE("confusion rejects empty or mismatched input") {
  std::vector<std::uint8_t> a{1}, b{1, 0}, none;
  CHECK_THROWS_AS(confusion(a, b), InvalidInput);
  CHECK_THROWS_AS(confusion(none, none), InvalidInput);
}

TEST_CASE("precision, recall and F1 edge cases") {
  auto perfect = precision_recall_f1({5, 0, 0, 0});
  CHECK(perfect.precision == 1.0);
  CHECK(perfect.recall == 1.0);
  CHECK(perfect.f1 == 1.0);
  auto empty = precision_recall_f1({0, 7, 0, 0});
  CHECK(empty.precision == 0.0);
  CHECK(empty.recall == 0.0);
  CHECK(empty.f1 == 0.0);
}

TEST_CASE("accuracy edge cases") {
  CHECK(accuracy({3, 4, 0, 0}) == 1.0);
  CHECK(accuracy({0, 0, 2, 5}) == 0.0);
  CHECK_THROWS_AS(accuracy({}), InvalidInput);
}

TEST_CASE("macro average is the unweighted mean") {
  std::vector<MetricRow> rows{{"a", 1.0, 0.5, 0.5, 0.5}, {"b", 0.8, 0.5, 0.5, 0.5}};
  auto avg = macro_average(rows);
  CHECK(avg.accuracy == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(avg.appliance == "average");
  std::vector<MetricRow> one{{"x", 0.3, 0.2, 0.1, 0.4}};
  auto same = macro_average(one);
  CHECK(same.accuracy == 0.3);
  CHECK(same.f1 == 0.4);
  CHECK_THROWS_AS(macro_average(std::vector<MetricRow>{}), InvalidInput);
}

TEST_CASE("random sequences match a brute-force tally") {
  std::mt19937_64 rng(4);
  for (std::size_t n = 1; n <= 100; ++n) {
    std::vector<std::uint8_t> p(n), t(n);
    ConfusionCounts expect;
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = rng() & 1;
      t[i] = rng() & 1;
      if (p[i] && t[i]) ++expect.tp;
      else if (!p[i] && !t[i]) ++expect.tn;
      else if (p[i]) ++expect.fp;
      else ++expect.fn;
    }
    REQUIRE(confusion(p, t) == expect);
  }
}

TEST_CASE("metric properties hold on random input") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    std::size_t n = 1 + rng() % 60;
    std::vector<std::uint8_t> p(n), t(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = rng() % 3 == 0, t[i] = rng() % 2;
    auto row = evaluate("x", confusion(p, t));
    for (double v : {row.accuracy, row.precision, row.recall, row.f1}) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    if (row.precision > 0 && row.recall > 0)
      CHECK(row.f1 == doctest::Approx(2 / (1 / row.precision + 1 / row.recall)));

    // Joint shuffle leaves every metric unchanged.
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    std::shuffle(idx.begin(), idx.end(), rng);
    std::vector<std::uint8_t> ps(n), ts(n);
    for (std::size_t i = 0; i < n; ++i) ps[i] = p[idx[i]], ts[i] = t[idx[i]];
    auto shuffled = evaluate("x", confusion(ps, ts));
    CHECK(shuffled.accuracy == row.accuracy);
    CHECK(shuffled.f1 == row.f1);
  }
}

TEST_CASE("report CSV layout") {
  auto report = make_report({{"fan_1", 0.9, 0.8, 0.7, 0.74666}});
  auto csv = to_csv(report);
  CHECK(csv == "appliance,accuracy,recall,precision,f1\nfan_1,0.9000,0.8000,0.7000,0.7467\naverage,0.9000,0.8000,0.7000,0.7467\n");
}

TEST_CASE("household catalog expands multi-level appliances") {
  auto cat = ApplianceCatalog::household_default();
  auto ids = cat.target_ids();
  CHECK(ids.size() == 10);
  CHECK(std::find(ids.begin(), ids.end(), "fan_3") != ids.end());
  CHECK(std::find(ids.begin(), ids.end(), "light_bulb") != ids.end());
  CHECK(cat.target_index("heater_2") >= 0);
  CHECK(cat.target_index("nope") == -1);
  CHECK_THROWS_AS(ApplianceCatalog({{"a", "A", {{1, 0}}}, {"a", "B", {{2, 0}}}}), InvalidInput);
  CHECK_THROWS_AS(ApplianceCatalog(std::vector<ApplianceEntry>{{"a", "A", {}}}), InvalidInput);
  CHECK_THROWS_AS(ApplianceCatalog({{"a", "A", {{-1, 0}}}}), InvalidInput);
}

}
