#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "datagen/datagen.hpp"

namespace nilm::test {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "nilm") {
    static std::mt19937_64 rng(std::random_device{}());
    path_ = std::filesystem::temp_directory_path() / (tag + "-" + std::to_string(rng()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const noexcept { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

/// Scenario with explicit appliances and sigma-free levels.
inline datagen::ScenarioConfig scenario(std::vector<ApplianceEntry> entries, std::vector<datagen::ApplianceProfile> profiles,
                                        std::size_t samples, std::uint64_t seed = 1) {
  datagen::ScenarioConfig cfg;
  cfg.catalog = ApplianceCatalog(std::move(entries));
  cfg.profiles = std::move(profiles);
  cfg.sample_period_s = 2;
  cfg.duration_s = static_cast<double>(samples) * cfg.sample_period_s;
  cfg.seed = seed;
  return cfg;
}

/// Two clearly separated single-level appliances.
inline datagen::ScenarioConfig separable_scenario(std::size_t samples, std::uint64_t seed = 1) {
  return scenario({{"kettle", "Kettle", {{1500, 20}}}, {"lamp", "Lamp", {{80, 0}}}},
                  {{"kettle", 60, 200, 2, datagen::ProfileMode::markov},
                   {"lamp", 120, 240, 1, datagen::ProfileMode::markov}},
                  samples, seed);
}

}  // namespace nilm::test
