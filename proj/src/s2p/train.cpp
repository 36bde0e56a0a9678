#include "s2p/train.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "common/error.hpp"

namespace nilm::s2p {

void S2PTrainConfig::validate() const {
  if (window < 3 || window % 2 == 0) throw InvalidInput("window must be odd and >= 3");
  if (!(learning_rate >= 0)) throw InvalidInput("learning rate must be >= 0");
  if (momentum < 0 || momentum >= 1) throw InvalidInput("momentum must be in [0,1)");
  if (batch_size == 0) throw InvalidInput("batch size must be >= 1");
}

S2PDataset make_dataset(std::span<const PowerSample> samples, std::size_t window, std::size_t stride) {
  if (window == 0 || stride == 0) throw InvalidInput("window and stride must be >= 1");
  S2PDataset data;
  data.window = window;
  if (samples.size() < window) return data;
  data.targets = samples.front().labels.size();
  if (data.targets == 0) throw InvalidInput("samples carry no labels");
  const std::size_t mid = preprocess::midpoint_offset(window);
  for (std::size_t start = 0; start + window <= samples.size(); start += stride) {
    for (std::size_t t = 0; t < window; ++t) {
      const auto& s = samples[start + t];
      data.inputs.push_back(s.active_power);
      data.inputs.push_back(s.reactive_power);
    }
    const auto& labels = samples[start + mid].labels;
    if (labels.size() != data.targets) throw InvalidInput("inconsistent label count");
    for (auto l : labels) data.labels.push_back(l ? 1.0 : 0.0);
    ++data.count;
  }
  return data;
}

namespace {

void check_compatible(const S2PModel& model, const S2PDataset& data) {
  if (data.count == 0) throw InvalidInput("empty dataset");
  if (data.window != model.window()) throw InvalidInput("dataset window differs from model window");
  if (data.targets != model.targets().size()) throw InvalidInput("dataset targets differ from model targets");
}

void gather(const S2PDataset& data, std::span<const std::size_t> idx, std::vector<double>& x, std::vector<double>& y) {
  const std::size_t stride = data.window * preprocess::kFeatureCount;
  x.clear();
  y.clear();
  for (auto i : idx) {
    x.insert(x.end(), data.inputs.begin() + static_cast<std::ptrdiff_t>(i * stride),
             data.inputs.begin() + static_cast<std::ptrdiff_t>((i + 1) * stride));
    y.insert(y.end(), data.labels.begin() + static_cast<std::ptrdiff_t>(i * data.targets),
             data.labels.begin() + static_cast<std::ptrdiff_t>((i + 1) * data.targets));
  }
}

}  // namespace

double dataset_loss(const S2PModel& model, const S2PDataset& data, std::size_t batch_size) {
  check_compatible(model, data);
  std::vector<std::size_t> idx(data.count);
  std::iota(idx.begin(), idx.end(), 0);
  std::vector<double> x, y;
  double total = 0;
  for (std::size_t b = 0; b < data.count; b += batch_size) {
    auto n = std::min(batch_size, data.count - b);
    gather(data, std::span(idx).subspan(b, n), x, y);
    ad::Graph g;
    auto loss = g.bce_mean(model.forward(g, x, n), y);
    total += loss->value.data[0] * static_cast<double>(n);
  }
  return total / static_cast<double>(data.count);
}

TrainResult train(S2PModel& model, const S2PDataset& data, const S2PTrainConfig& cfg) {
  cfg.validate();
  check_compatible(model, data);
  TrainResult result;
  result.loss_history.push_back(dataset_loss(model, data));

  auto& params = model.parameters();
  std::vector<std::vector<double>> velocity;
  for (const auto& p : params) velocity.emplace_back(p.var->value.size(), 0.0);

  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(data.count);
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> x, y;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t b = 0; b < data.count; b += cfg.batch_size) {
      auto n = std::min(cfg.batch_size, data.count - b);
      gather(data, std::span(order).subspan(b, n), x, y);
      model.zero_grad();
      ad::Graph g;
      auto loss = g.bce_mean(model.forward(g, x, n), y);
      g.backward(loss);
      for (std::size_t i = 0; i < params.size(); ++i) {
        auto& node = *params[i].var;
        if (node.grad.empty()) continue;
        auto& v = velocity[i];
        for (std::size_t k = 0; k < v.size(); ++k) {
          v[k] = cfg.momentum * v[k] - cfg.learning_rate * node.grad[k];
          node.value.data[k] = round_to_float(node.value.data[k] + v[k]);
        }
      }
    }
    result.loss_history.push_back(dataset_loss(model, data));
  }
  return result;
}

}  // namespace nilm::s2p
