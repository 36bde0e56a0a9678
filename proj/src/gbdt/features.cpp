#include "gbdt/features.hpp"

#include <algorithm>
#include <cmath>

#include "common/error.hpp"

namespace nilm::gbdt {

using preprocess::kFeatureCount;

std::vector<double> window_features(const preprocess::WindowBatch& w) {
  if (w.length == 0 || w.values.size() != w.length * kFeatureCount) throw InvalidInput("malformed window");
  std::vector<double> out(w.values);
  out.reserve(window_feature_count(w.length));
  const auto n = static_cast<double>(w.length);
  for (std::size_t f = 0; f < kFeatureCount; ++f) {
    double sum = 0;
    double lo = w.at(0, f);
    double hi = lo;
    for (std::size_t t = 0; t < w.length; ++t) {
      double v = w.at(t, f);
      sum += v;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    double mean = sum / n;
    double ss = 0;
    for (std::size_t t = 0; t < w.length; ++t) ss += (w.at(t, f) - mean) * (w.at(t, f) - mean);
    out.push_back(mean);
    out.push_back(std::sqrt(ss / n));
    out.push_back(lo);
    out.push_back(hi);
    out.push_back(w.at(w.length - 1, f) - w.at(0, f));
  }
  return out;
}

FeatureMatrix window_feature_matrix(const std::vector<preprocess::WindowBatch>& windows) {
  FeatureMatrix m;
  m.rows = windows.size();
  if (windows.empty()) return m;
  m.cols = window_feature_count(windows.front().length);
  m.values.reserve(m.rows * m.cols);
  for (const auto& w : windows) {
    auto row = window_features(w);
    if (row.size() != m.cols) throw InvalidInput("windows of differing length in one matrix");
    m.values.insert(m.values.end(), row.begin(), row.end());
  }
  return m;
}

}  // namespace nilm::gbdt
