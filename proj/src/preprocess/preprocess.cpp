#include "preprocess/preprocess.hpp"

#include <cmath>

#include "common/error.hpp"

namespace nilm::preprocess {

namespace {

WindowBatch make_window(const PowerSample* first, std::size_t window, const std::string& household) {
  WindowBatch w;
  w.length = window;
  w.household_id = household;
  w.values.reserve(window * kFeatureCount);
  for (std::size_t t = 0; t < window; ++t) {
    w.values.push_back(first[t].active_power);
    w.values.push_back(first[t].reactive_power);
  }
  w.start_ts_ms = first[0].ts_ms;
  w.end_ts_ms = first[window - 1].ts_ms;
  w.midpoint_ts_ms = first[midpoint_offset(window)].ts_ms;
  return w;
}

}  // namespace

bool is_valid(const PowerSample& s) noexcept {
  const double fields[] = {s.voltage,        s.frequency,      s.current,     s.active_power,
                           s.reactive_power, s.apparent_power, s.power_factor};
  for (double v : fields)
    if (is_missing(v)) return false;
  if (s.active_power < 0 || s.apparent_power < 0 || s.current < 0 || s.frequency < 0 || s.voltage < 0) return false;
  return s.power_factor >= 0 && s.power_factor <= 1;
}

CleanResult clean(std::span<const PowerSample> stream) {
  CleanResult out;
  out.samples.reserve(stream.size());
  for (const auto& s : stream) {
    if (is_valid(s))
      out.samples.push_back(s);
    else
      ++out.rejected;
  }
  return out;
}

NormStats normalize_fit(std::span<const PowerSample> stream) {
  if (stream.size() < 2) throw InvalidInput("normalization needs at least 2 rows");
  NormStats st;
  const auto n = static_cast<double>(stream.size());
  std::array<double, kFeatureCount> sum{0, 0};
  for (const auto& s : stream) {
    sum[0] += s.active_power;
    sum[1] += s.reactive_power;
  }
  for (std::size_t f = 0; f < kFeatureCount; ++f) st.mean[f] = sum[f] / n;
  std::array<double, kFeatureCount> ss{0, 0};
  for (const auto& s : stream) {
    ss[0] += (s.active_power - st.mean[0]) * (s.active_power - st.mean[0]);
    ss[1] += (s.reactive_power - st.mean[1]) * (s.reactive_power - st.mean[1]);
  }
  for (std::size_t f = 0; f < kFeatureCount; ++f) st.stddev[f] = std::sqrt(ss[f] / n);
  return st;
}

double normalize_value(double v, std::size_t feature, const NormStats& stats) noexcept {
  double sd = stats.stddev[feature];
  if (sd <= kNormEpsilon) return 0.0;
  return (v - stats.mean[feature]) / sd;
}

std::vector<PowerSample> normalize_apply(std::span<const PowerSample> stream, const NormStats& stats) {
  std::vector<PowerSample> out(stream.begin(), stream.end());
  for (auto& s : out) {
    s.active_power = normalize_value(s.active_power, 0, stats);
    s.reactive_power = normalize_value(s.reactive_power, 1, stats);
  }
  return out;
}

SlidingWindow::SlidingWindow(std::size_t window, std::size_t stride, std::string household_id)
    : window_(window), stride_(stride), household_(std::move(household_id)) {
  if (window == 0) throw InvalidInput("window length must be >= 1");
  if (stride == 0) throw InvalidInput("stride must be >= 1");
}

std::optional<WindowBatch> SlidingWindow::push(const PowerSample& s) {
  buffer_.push_back(s);
  if (buffer_.size() > window_) buffer_.pop_front();
  ++pushed_;
  if (buffer_.size() < window_) return std::nullopt;
  // Window k starts at sample k*stride.
  std::uint64_t start = pushed_ - window_;
  if (start % stride_ != 0) return std::nullopt;
  ++emitted_;
  std::vector<PowerSample> contiguous(buffer_.begin(), buffer_.end());
  return make_window(contiguous.data(), window_, household_);
}

void SlidingWindow::reset() {
  buffer_.clear();
  pushed_ = 0;
  emitted_ = 0;
}

std::vector<WindowBatch> window_stream(std::span<const PowerSample> stream, std::size_t window, std::size_t stride,
                                       const std::string& household_id) {
  if (window == 0) throw InvalidInput("window length must be >= 1");
  if (stride == 0) throw InvalidInput("stride must be >= 1");
  std::vector<WindowBatch> out;
  if (stream.size() < window) return out;
  out.reserve((stream.size() - window) / stride + 1);
  for (std::size_t start = 0; start + window <= stream.size(); start += stride)
    out.push_back(make_window(stream.data() + start, window, household_id));
  return out;
}

ApplianceStateVector label_threshold(const std::map<std::string, double>& target_power,
                                     const ApplianceCatalog& catalog, double theta_frac) {
  if (!(theta_frac > 0 && theta_frac < 1)) throw InvalidInput("theta_frac must lie in (0,1)");
  for (const auto& [id, _] : target_power)
    if (catalog.target_index(id) < 0) throw InvalidInput("unknown appliance target '" + id + "'");
  ApplianceStateVector out;
  for (const auto& t : catalog.targets()) {
    auto it = target_power.find(t.id);
    double metered = it == target_power.end() ? 0.0 : it->second;
    out.push_back({t.id, metered >= theta_frac * t.power.active_w && metered > 0});
  }
  return out;
}

}  // namespace nilm::preprocess
