#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

namespace nilm {

/// Marker for a missing numeric field in a PowerSample.
inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();
inline bool is_missing(double v) noexcept { return std::isnan(v); }

/// One timestamped electrical measurement row. Numeric fields may hold
/// kMissing so dirty rows stay representable until `clean` drops them.
struct PowerSample {
  std::int64_t ts_ms = 0;
  double voltage = 0;
  double frequency = 0;
  double current = 0;
  double active_power = 0;
  double reactive_power = 0;
  double apparent_power = 0;
  double power_factor = 1;
  /// Ground-truth ON(1)/OFF(0) per catalog target, in catalog target order.
  /// Empty for unlabeled streams.
  std::vector<std::uint8_t> labels;
};

/// Exact field-for-field equality (missing == missing).
bool same_sample(const PowerSample& a, const PowerSample& b) noexcept;

struct ApplianceState {
  std::string appliance_id;
  bool on = false;

  bool operator==(const ApplianceState&) const = default;
};

using ApplianceStateVector = std::vector<ApplianceState>;

struct LevelPower {
  double active_w = 0;
  double reactive_var = 0;
};

struct ApplianceEntry {
  std::string appliance_id;
  std::string display_name;
  std::vector<LevelPower> levels;  // level_count == levels.size() >= 1
};

/// One binary detection target: a single (appliance, level) pair.
struct Target {
  std::string id;  // "<appliance>" for single-level, "<appliance>_<level>" otherwise
  std::size_t appliance_index = 0;
  std::size_t level = 0;  // 0-based
  LevelPower power;
};

class ApplianceCatalog {
 public:
  ApplianceCatalog() = default;
  /// Throws InvalidInput on duplicate ids, empty levels or negative powers.
  explicit ApplianceCatalog(std::vector<ApplianceEntry> entries);

  const std::vector<ApplianceEntry>& entries() const noexcept { return entries_; }
  bool empty() const noexcept { return entries_.empty(); }
  /// Multi-level appliances expand to one target per level.
  const std::vector<Target>& targets() const noexcept { return targets_; }
  std::vector<std::string> target_ids() const;
  /// Index into targets(), or -1.
  int target_index(const std::string& id) const noexcept;

  /// The six appliance types of the laboratory household, with fan and
  /// heater levels expanded.
  static ApplianceCatalog household_default();

 private:
  std::vector<ApplianceEntry> entries_;
  std::vector<Target> targets_;
};

}  // namespace nilm
