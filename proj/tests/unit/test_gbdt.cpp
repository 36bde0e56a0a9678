#include <doctest.h>

#include <chrono>
#include <cmath>
#include <fstream>
#include <random>
#include <set>

#include "common/error.hpp"
#include "common/io.hpp"
#include "gbdt/gbdt.hpp"
#include "support/support.hpp"

using namespace nilm;
using namespace nilm::gbdt;

namespace {

FeatureMatrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0, 1);
  FeatureMatrix x{rows, cols, {}};
  for (std::size_t i = 0; i < rows * cols; ++i) x.values.push_back(n(rng));
  return x;
}

std::vector<std::uint8_t> labels_from_feature(const FeatureMatrix& x, std::size_t f) {
  std::vector<std::uint8_t> y;
  for (std::size_t r = 0; r < x.rows; ++r) y.push_back(x.at(r, f) > 0.2);
  return y;
}

}  // namespace

TEST_SUITE("gbdt") {

TEST_CASE("objective pieces") {
  CHECK(leaf_weight(4, 1, 1) == -2.0);
  CHECK(split_gain(2, 1, -2, 1, 0, 0) == doctest::Approx(4.0));
  CHECK(split_gain(2, 1, -2, 1, 0, 1) == doctest::Approx(3.0));
  double t = split_threshold(1.0, 2.0);
  CHECK(t > 1.0);
  CHECK(t <= 2.0);
}

TEST_CASE("all-negative labels predict below one half") {
  auto x = random_matrix(60, 3, 1);
  std::vector<std::uint8_t> y(60, 0);
  TrainParams p;
  p.n_trees = 5;
  auto m = train_target(x, y, p, "a");
  for (std::size_t r = 0; r < x.rows; ++r) CHECK(m.probability(x.row(r)) < 0.5);
}

TEST_CASE("zero trees with zero base score give exactly one half") {
  TargetModel m;
  double row[3] = {1, 2, 3};
  CHECK(m.probability(row) == 0.5);
}

TEST_CASE("huge lambda collapses predictions to the base score") {
  auto x = random_matrix(80, 4, 2);
  auto y = labels_from_feature(x, 1);
  TrainParams p;
  p.n_trees = 10;
  p.lambda = 1e9;
  p.min_child_hessian = 0;
  auto m = train_target(x, y, p, "a");
  double base = 1 / (1 + std::exp(-m.base_score));
  for (std::size_t r = 0; r < x.rows; ++r) CHECK(std::abs(m.probability(x.row(r)) - base) < 1e-3);
}

TEST_CASE("trees respect depth and finite thresholds") {
  auto x = random_matrix(200, 5, 3);
  auto y = labels_from_feature(x, 2);
  TrainParams p;
  p.n_trees = 8;
  p.max_depth = 3;
  auto m = train_target(x, y, p, "a");
  for (const auto& t : m.trees) {
    CHECK(t.depth() <= 3);
    for (const auto& n : t.nodes)
      if (!n.is_leaf()) CHECK(std::isfinite(n.threshold));
  }
}

TEST_CASE("prediction ignores features no tree splits on") {
  auto x = random_matrix(150, 4, 4);
  auto y = labels_from_feature(x, 0);
  TrainParams p;
  p.n_trees = 6;
  auto m = train_target(x, y, p, "a");
  std::set<int> used;
  for (const auto& t : m.trees)
    for (const auto& n : t.nodes)
      if (!n.is_leaf()) used.insert(n.feature);
  for (int f = 0; f < 4; ++f) {
    if (used.count(f)) continue;
    std::vector<double> row(x.row(5), x.row(5) + 4);
    double before = m.probability(row.data());
    row[f] += 1000;
    CHECK(m.probability(row.data()) == before);
  }
}

TEST_CASE("prediction equals sigmoid of the boosted margin") {
  auto x = random_matrix(100, 3, 5);
  auto y = labels_from_feature(x, 2);
  TrainParams p;
  p.n_trees = 7;
  auto m = train_target(x, y, p, "a");
  for (std::size_t r = 0; r < 10; ++r) {
    double sum = 0;
    for (const auto& t : m.trees) sum += t.predict(x.row(r));
    CHECK(m.probability(x.row(r)) == doctest::Approx(1 / (1 + std::exp(-(m.base_score + m.learning_rate * sum)))));
  }
}

TEST_CASE("training loss never increases") {
  auto x = random_matrix(300, 6, 6);
  std::mt19937_64 rng(1);
  std::vector<std::uint8_t> y;
  for (std::size_t r = 0; r < x.rows; ++r) y.push_back((x.at(r, 0) + x.at(r, 3) * x.at(r, 4) + 0.3 * (rng() % 3)) > 0.5);
  TrainParams p;
  p.n_trees = 30;
  std::vector<double> hist;
  train_target(x, y, p, "a", &hist);
  REQUIRE(hist.size() == 31);
  for (std::size_t i = 1; i < hist.size(); ++i) CHECK(hist[i] <= hist[i - 1]);
}

TEST_CASE("cutoff tie rule") {
  std::vector<std::string> ids{"a", "b"};
  std::vector<double> probs{0.5, 0.51};
  auto s = states_from_probabilities(ids, probs);
  CHECK_FALSE(s[0].on);
  CHECK(s[1].on);
}

TEST_CASE("params validation") {
  TrainParams p;
  p.n_trees = 0;
  CHECK_THROWS_AS(p.validate(), InvalidInput);
  p = {};
  p.lambda = -1;
  CHECK_THROWS_AS(p.validate(), InvalidInput);
  p = {};
  p.gamma = -0.1;
  CHECK_THROWS_AS(p.validate(), InvalidInput);
}

TEST_CASE("model round trip and corrupt files") {
  test::TempDir dir;
  auto data = datagen::generate_scenario(test::separable_scenario(400, 2));
  auto windows = preprocess::window_stream(data.samples, 7);
  auto x = window_feature_matrix(windows);
  std::vector<std::vector<std::uint8_t>> labels(2);
  for (std::size_t i = 0; i < windows.size(); ++i)
    for (std::size_t t = 0; t < 2; ++t) labels[t].push_back(data.samples[i + 3].labels[t]);
  TrainParams p;
  p.n_trees = 5;
  auto model = train(x, labels, data.targets, p, 7);
  save(model, dir / "m.json");
  auto back = load(dir / "m.json");
  CHECK(back.schema == model.schema);
  REQUIRE(back.targets.size() == 2);
  for (std::size_t t = 0; t < 2; ++t)
    for (std::size_t k = 0; k < model.targets[t].trees.size(); ++k)
      for (std::size_t n = 0; n < model.targets[t].trees[k].nodes.size(); ++n)
        CHECK(back.targets[t].trees[k].nodes[n].weight == model.targets[t].trees[k].nodes[n].weight);
  for (const auto& w : windows) CHECK(back.predict_proba(w) == model.predict_proba(w));

  auto text = read_file(dir / "m.json");
  write_file(dir / "cut.json", text.substr(0, text.size() / 2));
  CHECK_THROWS_AS(load(dir / "cut.json"), FormatError);
  CHECK_THROWS_AS(load(dir / "missing.json"), IoError);

  preprocess::WindowBatch wrong;
  wrong.length = 5;
  wrong.values.assign(10, 0);
  CHECK_THROWS_AS(model.predict_proba(wrong), InvalidInput);
}

TEST_CASE("window features append summary statistics") {
  preprocess::WindowBatch w;
  w.length = 3;
  w.values = {1, 10, 2, 20, 6, 30};
  auto f = window_features(w);
  REQUIRE(f.size() == window_feature_count(3));
  CHECK(std::vector<double>(f.begin(), f.begin() + 6) == w.values);
}

TEST_CASE("single-window inference is fast") {
  auto x = random_matrix(2000, window_feature_count(31), 7);
  auto y = labels_from_feature(x, 10);
  TrainParams p;
  p.n_trees = 200;
  p.max_depth = 6;
  GbdtModel m;
  m.schema = Schema{};
  m.targets.push_back(train_target(x, y, p, "a"));
  preprocess::WindowBatch w;
  w.length = 31;
  w.values.assign(62, 1.0);
  auto start = std::chrono::steady_clock::now();
  const int reps = 200;
  for (int i = 0; i < reps; ++i) m.predict_proba(w);
  double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count() / reps;
  CHECK(ms < 1.0);
}

}
