#include <doctest.h>

#include <cmath>
#include <random>

#include "common/error.hpp"
#include "common/io.hpp"
#include "datagen/datagen.hpp"
#include "s2p/autodiff.hpp"
#include "s2p/model.hpp"
#include "s2p/train.hpp"
#include "support/support.hpp"

using namespace nilm;
using namespace nilm::s2p;

namespace {

const S2PDims kToy{3, 3, 4, 2, 6, 1};

std::vector<double> random_windows(std::size_t batch, std::size_t window, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-2, 2);
  std::vector<double> v(batch * window * 2);
  for (auto& x : v) x = u(rng);
  return v;
}

void randomize(S2PModel& m, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (auto& p : m.parameters())
    for (auto& v : p.var->value.data) v = u(rng);
}

}  // namespace

TEST_SUITE("s2p") {

TEST_CASE("autodiff of a square") {
  ad::Graph g;
  auto x = ad::parameter(ad::Tensor({1, 1}, std::vector<double>{3}));
  auto y = g.sum(g.mul(x, x));
  g.backward(y);
  CHECK(y->value.data[0] == 9.0);
  CHECK(x->grad[0] == 6.0);
  CHECK_THROWS_AS(g.backward(y), StateError);
}

TEST_CASE("backward on an empty graph is a state error") {
  ad::Graph g;
  auto x = ad::parameter(ad::Tensor({1}, 1.0));
  CHECK_THROWS_AS(g.backward(x), StateError);
}

TEST_CASE("Bernoulli NLL values") {
  ad::Graph g;
  auto half = g.constant(ad::Tensor({2, 2}, 0.5));
  std::vector<double> truth{1, 0, 0, 1};
  CHECK(g.bce_mean(half, truth)->value.data[0] == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  auto near = g.constant(ad::Tensor({1, 2}, std::vector<double>{1 - 1e-12, 1e-12}));
  std::vector<double> t2{1, 0};
  CHECK(g.bce_mean(near, t2)->value.data[0] < 1e-9);
}

TEST_CASE("saturated readout has zero gradient at a perfect fit") {
  ad::Graph g;
  auto h = g.constant(ad::Tensor({2, 1}, std::vector<double>{1000, -1000}));
  auto w = ad::parameter(ad::Tensor({1, 1}, 1.0));
  auto b = ad::parameter(ad::Tensor({1}, 0.0));
  auto p = g.sigmoid(g.add_bias(g.matmul(h, w), b));
  std::vector<double> truth{1, 0};
  g.backward(g.bce_mean(p, truth));
  CHECK(w->grad[0] == 0.0);
  CHECK(b->grad[0] == 0.0);
}

TEST_CASE("layer norm output is standardized") {
  ad::Graph g;
  auto x = g.constant(ad::Tensor({3, 5}, std::vector<double>{1, 2, 3, 4, 5, -1, 0, 7, 2, 2, 10, 10, 11, 9, 10}));
  auto gamma = ad::parameter(ad::Tensor({5}, 1.0));
  auto beta = ad::parameter(ad::Tensor({5}, 0.0));
  auto y = g.layer_norm(x, gamma, beta);
  for (std::size_t r = 0; r < 3; ++r) {
    double m = 0, v = 0;
    for (std::size_t c = 0; c < 5; ++c) m += y->value.data[r * 5 + c];
    m /= 5;
    for (std::size_t c = 0; c < 5; ++c) v += std::pow(y->value.data[r * 5 + c] - m, 2);
    CHECK(std::abs(m) < 1e-5);
    CHECK(std::abs(v / 5 - 1) < 1e-4);
  }
}

TEST_CASE("constructor validation") {
  CHECK_THROWS_AS(S2PModel(8, {"a"}, kToy), InvalidInput);
  CHECK_THROWS_AS(S2PModel(3, {"a"}, kToy), InvalidInput);
  S2PDims bad = kToy;
  bad.heads = 3;
  CHECK_THROWS_AS(S2PModel(7, {"a"}, bad), InvalidInput);
  S2PModel ok(7, {"a"}, kToy);
  CHECK(ok.encoded_length() == 3);
  CHECK(ok.readout_index() == 1);
}

TEST_CASE("untrained and zeroed models output one half") {
  S2PModel m(7, {"a", "b"}, kToy, 3);
  auto in = random_windows(4, 7, 1);
  for (double p : m.predict(in, 4)) CHECK(p == 0.5);
  randomize(m, 2);
  m.zero_parameters();
  for (double p : m.predict(in, 4)) CHECK(p == 0.5);
}

TEST_CASE("batch rows are independent") {
  S2PModel m(7, {"a", "b"}, kToy, 3);
  randomize(m, 5);
  auto a = random_windows(1, 7, 10), b = random_windows(1, 7, 11);
  std::vector<double> ab(a), ba(b), aa(a);
  ab.insert(ab.end(), b.begin(), b.end());
  ba.insert(ba.end(), a.begin(), a.end());
  aa.insert(aa.end(), a.begin(), a.end());
  auto pab = m.predict(ab, 2), pba = m.predict(ba, 2), paa = m.predict(aa, 2);
  CHECK(pab[0] == pba[2]);
  CHECK(pab[1] == pba[3]);
  CHECK(pab[2] == pba[0]);
  CHECK(paa[0] == paa[2]);
  CHECK(paa[1] == paa[3]);
  for (double p : pab) {
    CHECK(p > 0);
    CHECK(p < 1);
  }
}

TEST_CASE("attention rows sum to one") {
  S2PModel m(9, {"a"}, kToy, 4);
  randomize(m, 6);
  std::vector<std::vector<double>> attn;
  ad::Graph g;
  m.forward(g, random_windows(3, 9, 2), 3, &attn);
  REQUIRE(attn.size() == 1);
  const auto len = m.encoded_length();
  REQUIRE(attn[0].size() == 3 * kToy.heads * len * len);
  for (std::size_t r = 0; r < attn[0].size(); r += len) {
    double s = 0;
    for (std::size_t j = 0; j < len; ++j) s += attn[0][r + j];
    CHECK(std::abs(s - 1) < 1e-6);
  }
}

TEST_CASE("dataset labels come from the window midpoint") {
  auto data = datagen::generate_scenario(test::separable_scenario(60, 3));
  auto ds = make_dataset(data.samples, 7, 2);
  CHECK(ds.count == (60 - 7) / 2 + 1);
  for (std::size_t i = 0; i < ds.count; ++i) {
    const auto& mid = data.samples[i * 2 + 3];
    CHECK(ds.inputs[(i * 7 + 3) * 2] == mid.active_power);
    for (std::size_t t = 0; t < ds.targets; ++t) CHECK(ds.labels[i * ds.targets + t] == mid.labels[t]);
  }
}

TEST_CASE("training determinism and zero learning rate") {
  auto data = datagen::generate_scenario(test::separable_scenario(300, 4));
  auto ds = make_dataset(data.samples, 7);
  S2PTrainConfig cfg;
  cfg.window = 7;
  cfg.epochs = 3;
  cfg.learning_rate = 0;

  S2PModel frozen(7, data.targets, kToy, 1);
  frozen.norm = preprocess::normalize_fit(data.samples);
  auto before = to_json(frozen).dump();
  auto flat = train(frozen, ds, cfg);
  CHECK(to_json(frozen).dump() == before);
  REQUIRE(flat.loss_history.size() == 4);
  for (double l : flat.loss_history) CHECK(l == flat.loss_history[0]);

  cfg.learning_rate = 0.01;
  S2PModel a(7, data.targets, kToy, 1), b(7, data.targets, kToy, 1);
  a.norm = b.norm = frozen.norm;
  auto ha = train(a, ds, cfg), hb = train(b, ds, cfg);
  CHECK(ha.loss_history == hb.loss_history);
  CHECK(ha.loss_history.back() < ha.loss_history.front());
  for (const auto& p : a.parameters())
    for (double v : p.var->value.data) CHECK(v == round_to_float(v));

  cfg.window = 8;
  CHECK_THROWS_AS(cfg.validate(), InvalidInput);
}

TEST_CASE("save and load") {
  test::TempDir dir;
  S2PModel m(7, {"a", "b"}, kToy, 9);
  randomize(m, 3);
  for (auto& p : m.parameters())
    for (auto& v : p.var->value.data) v = round_to_float(v);
  m.norm.mean = {100, 5};
  m.norm.stddev = {20, 2};
  save(m, dir / "m.json");
  auto back = load(dir / "m.json");
  CHECK(back.dims() == m.dims());
  CHECK(back.targets() == m.targets());
  auto in = random_windows(2, 7, 4);
  CHECK(back.predict(in, 2) == m.predict(in, 2));

  write_file(dir / "empty.json", "");
  CHECK_THROWS_AS(load(dir / "empty.json"), FormatError);
  auto j = to_json(m);
  j["version"] = 99;
  write_file(dir / "v.json", j.dump());
  CHECK_THROWS_AS(load(dir / "v.json"), FormatError);
  auto text = read_file(dir / "m.json");
  write_file(dir / "cut.json", text.substr(0, text.size() - 40));
  CHECK_THROWS_AS(load(dir / "cut.json"), FormatError);
}

}
