#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "preprocess/preprocess.hpp"
#include "s2p/autodiff.hpp"

namespace nilm::s2p {

struct S2PDims {
  std::size_t kernel = 5;
  std::size_t channels = 16;
  std::size_t d_model = 32;
  std::size_t heads = 2;
  std::size_t ffn_hidden = 64;
  std::size_t depth = 1;  // stacked attention blocks

  bool operator==(const S2PDims&) const = default;
};

struct NamedParameter {
  std::string name;
  ad::Var var;
};

/// Sequence-to-point disaggregator: a two-layer valid convolution stack per
/// input feature, concatenated and projected to d_model, learned position
/// embeddings, `depth` self-attention blocks (residual + layer norm, then a
/// position-wise FFN with residual + layer norm), and a sigmoid readout of
/// the representation at the window midpoint.
class S2PModel {
 public:
  /// Throws InvalidInput unless the window is odd and long enough for the
  /// two convolutions, and d_model divides by heads.
  S2PModel(std::size_t window, std::vector<std::string> targets, S2PDims dims = {}, std::uint64_t seed = 1);

  std::size_t window() const noexcept { return window_; }
  std::size_t features() const noexcept { return preprocess::kFeatureCount; }
  const std::vector<std::string>& targets() const noexcept { return targets_; }
  const S2PDims& dims() const noexcept { return dims_; }
  /// Sequence length after the convolution stack.
  std::size_t encoded_length() const noexcept { return window_ - 2 * (dims_.kernel - 1); }
  /// Encoded position whose representation is read out; aligned with input
  /// step (window - 1) / 2.
  std::size_t readout_index() const noexcept { return (encoded_length() - 1) / 2; }

  std::vector<NamedParameter>& parameters() noexcept { return params_; }
  const std::vector<NamedParameter>& parameters() const noexcept { return params_; }
  std::size_t parameter_count() const noexcept;
  void zero_grad();
  void zero_parameters();

  /// Records the forward pass of `batch` raw windows laid out
  /// [batch][window][feature]. Returns probabilities [batch, targets].
  ad::Var forward(ad::Graph& graph, std::span<const double> inputs, std::size_t batch,
                  std::vector<std::vector<double>>* attention_probs = nullptr) const;

  /// Inference without keeping a graph; row-major [batch, targets].
  std::vector<double> predict(std::span<const double> inputs, std::size_t batch) const;
  std::vector<double> predict(const std::vector<preprocess::WindowBatch>& windows) const;

  preprocess::NormStats norm;
  std::string version = "s2p-1";

 private:
  const ad::Var& param(std::size_t i) const { return params_[i].var; }
  void add_param(std::string name, ad::Shape shape, double limit, std::uint64_t& state);

  std::size_t window_;
  std::vector<std::string> targets_;
  S2PDims dims_;
  std::vector<NamedParameter> params_;
};

/// Rounds to the nearest float so serialized 32-bit blobs are exact.
double round_to_float(double v) noexcept;

/// Flattens windows into the [batch][window][feature] layout.
std::vector<double> flatten_windows(const std::vector<preprocess::WindowBatch>& windows);

nlohmann::json to_json(const S2PModel& model);
S2PModel from_json(const nlohmann::json& j);
void save(const S2PModel& model, const std::filesystem::path& path);
/// Throws FormatError on empty, corrupt or version-mismatched files.
S2PModel load(const std::filesystem::path& path);

S2PDims dims_from_json(const nlohmann::json& j);

}  // namespace nilm::s2p
