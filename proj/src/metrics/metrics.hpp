#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace nilm::metrics {

struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t tn = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;

  std::uint64_t total() const noexcept { return tp + tn + fp + fn; }
  bool operator==(const ConfusionCounts&) const = default;
};

struct PrecisionRecallF1 {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
};

/// Element-wise tally of binary predictions against ground truth. Any
/// nonzero state counts as ON. Throws InvalidInput on empty or mismatched input.
ConfusionCounts confusion(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> truth);

/// A 0/0 ratio is reported as 0.
PrecisionRecallF1 precision_recall_f1(const ConfusionCounts& c) noexcept;

/// Throws InvalidInput when all counts are zero.
double accuracy(const ConfusionCounts& c);

struct MetricRow {
  std::string appliance;
  double accuracy = 0;
  double recall = 0;
  double precision = 0;
  double f1 = 0;
};

MetricRow evaluate(const std::string& appliance, const ConfusionCounts& c);

/// Unweighted column means; the result's `appliance` is "average".
/// Throws InvalidInput on an empty row set.
MetricRow macro_average(std::span<const MetricRow> rows);

struct MetricsReport {
  std::vector<MetricRow> rows;
  MetricRow average;
};

MetricsReport make_report(std::vector<MetricRow> rows);

/// `appliance,accuracy,recall,precision,f1` header, one line per row, then
/// the `average` line; 4 decimal places.
std::string to_csv(const MetricsReport& report);

}  // namespace nilm::metrics
