#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gbdt/features.hpp"
#include "metrics/types.hpp"
#include "preprocess/preprocess.hpp"

namespace nilm::gbdt {

struct TrainParams {
  std::size_t n_trees = 100;
  std::size_t max_depth = 4;
  double learning_rate = 0.3;
  double lambda = 1.0;  // L2 on leaf weights
  double gamma = 0.0;   // per-split penalty
  double min_child_hessian = 1.0;

  void validate() const;
};

/// Split node when `feature >= 0` (rows with x[feature] < threshold go
/// left), leaf otherwise.
struct TreeNode {
  int feature = -1;
  double threshold = 0;
  int left = -1;
  int right = -1;
  double weight = 0;

  bool is_leaf() const noexcept { return feature < 0; }
};

class Tree {
 public:
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  double predict(const double* x) const noexcept;
  /// Index of the leaf that `x` lands in.
  std::size_t leaf_index(const double* x) const noexcept;
  std::size_t depth() const noexcept;
  std::size_t leaf_count() const noexcept;
};

/// Regularized objective pieces.
double leaf_weight(double grad_sum, double hess_sum, double lambda) noexcept;
double split_gain(double g_left, double h_left, double g_right, double h_right, double lambda, double gamma) noexcept;
/// Candidate threshold strictly above `lo` and at most `hi` (normally the midpoint).
double split_threshold(double lo, double hi) noexcept;

/// Exact greedy growth of one tree from per-row gradients and hessians.
/// Splits are scanned per feature over ascending distinct values; ties keep
/// the lower feature index, then the lower threshold; a split is taken only
/// when its gain is strictly positive and both children meet
/// `min_child_hessian`.
Tree grow_tree(const FeatureMatrix& x, std::span<const double> grad, std::span<const double> hess,
               const TrainParams& params);

struct TargetModel {
  std::string appliance_id;
  double base_score = 0;  // log-odds
  double learning_rate = 0.3;
  std::vector<Tree> trees;

  double margin(const double* x) const noexcept;
  double probability(const double* x) const noexcept;
};

struct Schema {
  std::size_t window = preprocess::kDefaultWindow;
  std::size_t features_per_step = preprocess::kFeatureCount;
  std::size_t feature_count = window_feature_count(preprocess::kDefaultWindow);

  bool operator==(const Schema&) const = default;
};

class GbdtModel {
 public:
  Schema schema;
  std::vector<TargetModel> targets;
  std::string version = "gbdt-1";

  std::vector<std::string> target_ids() const;

  /// Throws InvalidInput when the window does not match the schema.
  std::vector<double> predict_proba(const preprocess::WindowBatch& window) const;
  std::vector<double> predict_proba_features(std::span<const double> features) const;
  /// ON iff probability > cutoff.
  ApplianceStateVector predict_states(const preprocess::WindowBatch& window, double cutoff = 0.5) const;
};

ApplianceStateVector states_from_probabilities(const std::vector<std::string>& ids, std::span<const double> probs,
                                               double cutoff = 0.5);

double logistic_loss(std::span<const double> margins, std::span<const std::uint8_t> labels);

/// Trains one boosted ensemble. `loss_history`, when given, receives the
/// mean training logistic loss before the first round and after each round.
TargetModel train_target(const FeatureMatrix& x, std::span<const std::uint8_t> labels, const TrainParams& params,
                         std::string appliance_id, std::vector<double>* loss_history = nullptr);

/// One ensemble per target; `labels[t][i]` is target t's state for row i.
GbdtModel train(const FeatureMatrix& x, const std::vector<std::vector<std::uint8_t>>& labels,
                const std::vector<std::string>& target_ids, const TrainParams& params, std::size_t window);

nlohmann::json to_json(const GbdtModel& model);
/// Throws FormatError on schema violations.
GbdtModel from_json(const nlohmann::json& j);

void save(const GbdtModel& model, const std::filesystem::path& path);
/// Throws FormatError (with byte offset) on corrupt files, IoError when unreadable.
GbdtModel load(const std::filesystem::path& path);

TrainParams params_from_json(const nlohmann::json& j);

}  // namespace nilm::gbdt
