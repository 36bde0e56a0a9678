#include <doctest.h>

#include <cmath>

#include "common/error.hpp"
#include "common/io.hpp"
#include "datagen/datagen.hpp"
#include "preprocess/preprocess.hpp"
#include "support/support.hpp"

using namespace nilm;
using namespace nilm::datagen;

TEST_SUITE("datagen") {

TEST_CASE("all appliances forced off give a zero aggregate") {
  auto cfg = test::scenario({{"a", "A", {{100, 10}}}, {"b", "B", {{50, 0}}}},
                            {{"a", 60, 60, 0, ProfileMode::always_off}, {"b", 60, 60, 0, ProfileMode::always_off}}, 200);
  auto data = generate_scenario(cfg);
  REQUIRE(data.samples.size() == 200);
  for (const auto& s : data.samples) {
    CHECK(s.active_power == 0.0);
    CHECK(s.labels == std::vector<std::uint8_t>{0, 0});
  }
}

TEST_CASE("a single always-on appliance gives its catalog power") {
  auto cfg = test::scenario({{"a", "A", {{100, 0}}}}, {{"a", 60, 60, 0, ProfileMode::always_on}}, 50);
  for (const auto& s : generate_scenario(cfg).samples) CHECK(s.active_power == 100.0);
}

TEST_CASE("noise-free aggregate equals the sum of labeled-on levels") {
  datagen::ScenarioConfig cfg;
  cfg.catalog = ApplianceCatalog::household_default();
  cfg.duration_s = 4000;
  cfg.seed = 17;
  auto data = generate_scenario(cfg);
  const auto& targets = cfg.catalog.targets();
  for (const auto& s : data.samples) {
    double expect = 0;
    for (std::size_t t = 0; t < targets.size(); ++t)
      if (s.labels[t]) expect += targets[t].power.active_w;
    REQUIRE(s.active_power == expect);
    CHECK(s.apparent_power >= 0);
    CHECK(s.power_factor >= 0);
    CHECK(s.power_factor <= 1);
  }
}

TEST_CASE("thresholding the aggregate recovers a lone appliance") {
  auto cfg = test::scenario({{"a", "A", {{300, 0}}}}, {{"a", 30, 30, 0, ProfileMode::markov}}, 500, 3);
  auto data = generate_scenario(cfg);
  for (const auto& s : data.samples) {
    auto states = preprocess::label_threshold({{"a", s.active_power}}, cfg.catalog, 0.5);
    CHECK(states[0].on == (s.labels[0] == 1));
  }
}

TEST_CASE("same config gives identical bytes") {
  auto cfg = test::separable_scenario(300, 42);
  CHECK(to_csv(generate_scenario(cfg)) == to_csv(generate_scenario(cfg)));
  auto other = cfg;
  other.seed = 43;
  CHECK(to_csv(generate_scenario(cfg)) != to_csv(generate_scenario(other)));
}

TEST_CASE("dirty injection") {
  auto data = generate_scenario(test::separable_scenario(1000, 5));
  auto untouched = inject_dirty(data.samples, 0.0, 1);
  CHECK(untouched.corrupted.empty());
  for (std::size_t i = 0; i < data.samples.size(); ++i) CHECK(same_sample(untouched.samples[i], data.samples[i]));

  auto dirty = inject_dirty(data.samples, 0.05, 1);
  CHECK(dirty.corrupted.size() == 50);
  CHECK(std::is_sorted(dirty.corrupted.begin(), dirty.corrupted.end()));
  auto cleaned = preprocess::clean(dirty.samples);
  CHECK(cleaned.rejected == 50);
  CHECK_THROWS_AS(inject_dirty(data.samples, 1.0, 1), InvalidInput);
}

TEST_CASE("CSV round trips") {
  Dataset empty{{"a"}, {}};
  auto text = to_csv(empty);
  CHECK(from_csv(text).samples.empty());
  CHECK(from_csv(text).targets == std::vector<std::string>{"a"});

  auto data = generate_scenario(test::separable_scenario(1, 1));
  auto back = from_csv(to_csv(data));
  REQUIRE(back.samples.size() == 1);
  CHECK(same_sample(back.samples[0], data.samples[0]));

  auto dirty = inject_dirty(generate_scenario(test::separable_scenario(200, 2)).samples, 0.1, 3);
  Dataset d{{"kettle", "lamp"}, dirty.samples};
  auto again = from_csv(to_csv(d));
  for (std::size_t i = 0; i < d.samples.size(); ++i) CHECK(same_sample(again.samples[i], d.samples[i]));
}

TEST_CASE("non-numeric watts are a parse error on that line") {
  std::string text =
      "ts_ms,voltage,frequency,current,active_power,reactive_power,apparent_power,power_factor,a\n"
      "1,220,50,1,100,0,100,1,1\n"
      "2,220,50,1,abc,0,100,1,1\n";
  try {
    from_csv(text);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
}

TEST_CASE("scenario config validation and JSON") {
  auto cfg = test::separable_scenario(10);
  cfg.sample_period_s = 0;
  CHECK_THROWS_AS(cfg.validate(), InvalidInput);
  cfg = test::separable_scenario(10);
  cfg.duration_s = 1;
  CHECK_THROWS_AS(cfg.validate(), InvalidInput);

  auto base = test::separable_scenario(100, 8);
  base.background = {50, 2, 0.1, 0.3};
  auto round = scenario_from_json(scenario_to_json(base));
  CHECK(to_csv(generate_scenario(round)) == to_csv(generate_scenario(base)));

  auto defaults = scenario_from_json(nlohmann::json::object());
  CHECK(defaults.catalog.target_ids() == ApplianceCatalog::household_default().target_ids());
}

}
