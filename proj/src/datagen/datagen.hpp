#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "metrics/types.hpp"

namespace nilm::datagen {

enum class ProfileMode { markov, always_on, always_off };

/// Switching behaviour of one appliance. Level powers come from the catalog.
struct ApplianceProfile {
  std::string appliance_id;
  double mean_on_s = 60;
  double mean_off_s = 300;
  double noise_sigma_w = 0;
  ProfileMode mode = ProfileMode::markov;
};

/// Slowly drifting non-target load added to the aggregate (zero by default).
struct BackgroundLoad {
  double mean_w = 0;
  double walk_sigma_w = 0;  // per-step random-walk increment
  double reversion = 0.01;  // pull toward mean_w per step, in [0,1]
  double reactive_ratio = 0;
};

struct ScenarioConfig {
  ApplianceCatalog catalog;
  std::vector<ApplianceProfile> profiles;  // missing ids get default profiles
  double duration_s = 3600;
  double sample_period_s = 2;
  std::uint64_t seed = 1;
  double dirty_fraction = 0;
  std::int64_t start_ts_ms = 1'700'000'000'000;
  BackgroundLoad background;

  /// Throws InvalidInput on an empty catalog, bad period or duration.
  void validate() const;
  std::size_t sample_count() const;
};

/// A labeled (or unlabeled) sample stream with its target columns.
struct Dataset {
  std::vector<std::string> targets;
  std::vector<PowerSample> samples;
};

/// Per-level two-state Markov simulation of every catalog target, summed
/// into an aggregate reading. Deterministic given `cfg.seed`.
Dataset generate_scenario(const ScenarioConfig& cfg);

struct DirtyResult {
  std::vector<PowerSample> samples;
  std::vector<std::size_t> corrupted;  // ascending row indices
};

/// Corrupts exactly round(fraction * n) uniformly chosen rows, one field per
/// row: either blanks a numeric field or negates a strictly positive one.
DirtyResult inject_dirty(std::vector<PowerSample> samples, double fraction, std::uint64_t seed);

std::string to_csv(const Dataset& data);
/// Throws ParseError naming the 1-based line of the first malformed row.
Dataset from_csv(const std::string& text);

void write_csv(const Dataset& data, const std::filesystem::path& path);
Dataset read_csv(const std::filesystem::path& path);

/// Reads a scenario description; absent keys keep their defaults and an
/// absent catalog selects the default household catalog.
ScenarioConfig scenario_from_json(const nlohmann::json& j);
nlohmann::json scenario_to_json(const ScenarioConfig& cfg);

}  // namespace nilm::datagen
