#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "metrics/types.hpp"

namespace nilm::preprocess {

/// Features carried into windows: active and reactive power.
inline constexpr std::size_t kFeatureCount = 2;
inline constexpr std::size_t kDefaultWindow = 31;

/// W x F window of (active_power, reactive_power), row-major.
struct WindowBatch {
  std::size_t length = 0;  // W
  std::vector<double> values;
  std::int64_t start_ts_ms = 0;
  std::int64_t end_ts_ms = 0;
  std::int64_t midpoint_ts_ms = 0;
  std::string household_id;

  double at(std::size_t t, std::size_t f) const { return values[t * kFeatureCount + f]; }
};

/// Index of the labeled timestep within a window of odd length W.
constexpr std::size_t midpoint_offset(std::size_t window) noexcept { return (window - 1) / 2; }

/// Row validity: every numeric field present, {active, apparent, current,
/// frequency, voltage} non-negative, power factor within [0,1]. Reactive
/// power may be negative.
bool is_valid(const PowerSample& s) noexcept;

struct CleanResult {
  std::vector<PowerSample> samples;
  std::size_t rejected = 0;
};

/// Drops invalid rows, preserving the order of the rest.
CleanResult clean(std::span<const PowerSample> stream);

struct NormStats {
  std::array<double, kFeatureCount> mean{0, 0};
  std::array<double, kFeatureCount> stddev{1, 1};
};

inline constexpr double kNormEpsilon = 1e-8;

/// Population mean/std of active and reactive power. Needs >= 2 rows.
NormStats normalize_fit(std::span<const PowerSample> stream);
/// z-scores active and reactive power; a feature whose std is within the
/// epsilon guard maps to 0.
std::vector<PowerSample> normalize_apply(std::span<const PowerSample> stream, const NormStats& stats);
double normalize_value(double v, std::size_t feature, const NormStats& stats) noexcept;

/// Fixed-length FIFO of the most recent samples. Pushing into a full queue
/// evicts the oldest; a window is emitted every `stride` pushes once full.
class SlidingWindow {
 public:
  SlidingWindow(std::size_t window, std::size_t stride = 1, std::string household_id = {});

  std::optional<WindowBatch> push(const PowerSample& s);
  std::size_t window() const noexcept { return window_; }
  std::size_t size() const noexcept { return buffer_.size(); }
  /// Total samples pushed so far.
  std::uint64_t pushed() const noexcept { return pushed_; }
  void reset();

 private:
  std::size_t window_;
  std::size_t stride_;
  std::string household_;
  std::deque<PowerSample> buffer_;
  std::uint64_t pushed_ = 0;
  std::uint64_t emitted_ = 0;
};

/// Batch slicing: floor((n-W)/stride)+1 contiguous windows for n >= W,
/// none otherwise. Throws InvalidInput for W or stride of 0.
std::vector<WindowBatch> window_stream(std::span<const PowerSample> stream, std::size_t window,
                                       std::size_t stride = 1, const std::string& household_id = {});

/// ON iff metered power >= theta_frac * catalog level power, per target.
/// `target_power` maps target id to its own metered power.
ApplianceStateVector label_threshold(const std::map<std::string, double>& target_power,
                                     const ApplianceCatalog& catalog, double theta_frac);

}  // namespace nilm::preprocess
