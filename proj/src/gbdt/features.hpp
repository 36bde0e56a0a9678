#pragma once

#include <cstddef>
#include <vector>

#include "preprocess/preprocess.hpp"

namespace nilm::gbdt {

/// Row-major n x d feature matrix.
struct FeatureMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  const double* row(std::size_t r) const { return values.data() + r * cols; }
};

/// Summary statistics appended per feature: mean, std, min, max, last-first.
inline constexpr std::size_t kSummaryStats = 5;

constexpr std::size_t window_feature_count(std::size_t window) noexcept {
  return window * preprocess::kFeatureCount + kSummaryStats * preprocess::kFeatureCount;
}

/// Flattened W x F values followed by the per-feature summary statistics.
std::vector<double> window_features(const preprocess::WindowBatch& w);

FeatureMatrix window_feature_matrix(const std::vector<preprocess::WindowBatch>& windows);

}  // namespace nilm::gbdt
