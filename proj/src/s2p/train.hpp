#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "metrics/types.hpp"
#include "s2p/model.hpp"

namespace nilm::s2p {

struct S2PTrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  double momentum = 0.9;
  std::uint64_t seed = 1;
  std::size_t window = preprocess::kDefaultWindow;

  void validate() const;
};

/// Windows in [count][window][feature] layout with their midpoint labels
/// [count][targets].
struct S2PDataset {
  std::size_t window = 0;
  std::size_t targets = 0;
  std::size_t count = 0;
  std::vector<double> inputs;
  std::vector<double> labels;
};

/// Slides a window over labeled samples; each window is labeled with the
/// states of the sample at offset (W-1)/2.
S2PDataset make_dataset(std::span<const PowerSample> samples, std::size_t window, std::size_t stride = 1);

/// Mean NLL of the model over the whole dataset.
double dataset_loss(const S2PModel& model, const S2PDataset& data, std::size_t batch_size = 256);

struct TrainResult {
  /// Entry 0 is the loss before any update, then one entry per epoch.
  std::vector<double> loss_history;
};

/// Minibatch gradient descent with momentum on the Bernoulli NLL. Batches
/// are reshuffled each epoch from `cfg.seed`. Parameters stay
/// float-representable after every step.
TrainResult train(S2PModel& model, const S2PDataset& data, const S2PTrainConfig& cfg);

}  // namespace nilm::s2p
