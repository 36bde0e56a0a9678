#include "metrics/metrics.hpp"

#include "common/error.hpp"
#include "common/io.hpp"

namespace nilm::metrics {

namespace {

double ratio(std::uint64_t num, std::uint64_t den) noexcept {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

ConfusionCounts confusion(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> truth) {
  if (pred.size() != truth.size())
    throw InvalidInput("prediction length " + std::to_string(pred.size()) + " != truth length " +
                       std::to_string(truth.size()));
  if (pred.empty()) throw InvalidInput("confusion needs at least one sample");
  ConfusionCounts c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    bool p = pred[i] != 0;
    bool t = truth[i] != 0;
    if (p && t)
      ++c.tp;
    else if (!p && !t)
      ++c.tn;
    else if (p)
      ++c.fp;
    else
      ++c.fn;
  }
  return c;
}

PrecisionRecallF1 precision_recall_f1(const ConfusionCounts& c) noexcept {
  PrecisionRecallF1 r;
  r.precision = ratio(c.tp, c.tp + c.fp);
  r.recall = ratio(c.tp, c.tp + c.fn);
  double denom = r.precision + r.recall;
  r.f1 = denom == 0 ? 0.0 : 2 * r.precision * r.recall / denom;
  return r;
}

double accuracy(const ConfusionCounts& c) {
  if (c.total() == 0) throw InvalidInput("accuracy of an empty confusion table");
  return ratio(c.tp + c.tn, c.total());
}

MetricRow evaluate(const std::string& appliance, const ConfusionCounts& c) {
  auto prf = precision_recall_f1(c);
  return {appliance, accuracy(c), prf.recall, prf.precision, prf.f1};
}

MetricRow macro_average(std::span<const MetricRow> rows) {
  if (rows.empty()) throw InvalidInput("macro average of zero rows");
  MetricRow avg{"average"};
  for (const auto& r : rows) {
    avg.accuracy += r.accuracy;
    avg.recall += r.recall;
    avg.precision += r.precision;
    avg.f1 += r.f1;
  }
  auto n = static_cast<double>(rows.size());
  avg.accuracy /= n;
  avg.recall /= n;
  avg.precision /= n;
  avg.f1 /= n;
  return avg;
}

MetricsReport make_report(std::vector<MetricRow> rows) {
  MetricsReport report;
  report.average = macro_average(rows);
  report.rows = std::move(rows);
  return report;
}

std::string to_csv(const MetricsReport& report) {
  std::string out = "appliance,accuracy,recall,precision,f1\n";
  auto line = [&out](const MetricRow& r) {
    out += r.appliance + "," + format_fixed(r.accuracy, 4) + "," + format_fixed(r.recall, 4) + "," +
           format_fixed(r.precision, 4) + "," + format_fixed(r.f1, 4) + "\n";
  };
  for (const auto& r : report.rows) line(r);
  line(report.average);
  return out;
}

}  // namespace nilm::metrics
