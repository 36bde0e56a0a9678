#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace nilm::bench {

struct RequestTemplate {
  std::string method = "POST";
  std::string path = "/v1/infer";
  std::string body;
  std::string content_type = "application/json";
};

struct LoadProfile {
  std::vector<std::size_t> levels{1, 3, 5, 10, 30, 50, 100};
  double think_time_s = 2;
  std::size_t repetitions = 10;
  std::size_t requests_per_thread = 3;
  /// Virtual users start spread over this many seconds; negative means
  /// "same as the think time".
  double ramp_up_s = -1;
  std::size_t timeout_ms = 30000;
  RequestTemplate request;

  void validate() const;
  double ramp_up() const noexcept { return ramp_up_s < 0 ? think_time_s : ramp_up_s; }
};

LoadProfile profile_from_json(const nlohmann::json& j);
nlohmann::json to_json(const LoadProfile& p);

struct LevelReport {
  std::size_t concurrency = 0;
  double average_ms = 0;
  double median_ms = 0;
  double p90_ms = 0;
  double max_ms = 0;
  double min_ms = 0;
  double throughput_tps = 0;
  std::size_t requests = 0;
  std::size_t errors = 0;

  double error_rate() const noexcept { return requests ? static_cast<double>(errors) / static_cast<double>(requests) : 0; }
};

struct LatencyReport {
  std::vector<LevelReport> levels;
};

/// Nearest rank: the ceil(p/100 * n)-th smallest sample. Throws InvalidInput
/// for an empty sample set or p outside (0, 100].
double percentile(std::vector<double> samples, double p);

/// Latency samples of one level, pooled over repetitions.
LevelReport summarize(std::size_t concurrency, std::vector<double> latencies_ms, std::size_t errors,
                      std::size_t successes, double duration_s);

/// Runs every level of the profile against `target` ("http://host:port").
/// Throws IoError when the target does not accept connections at start.
LatencyReport run_load(const LoadProfile& profile, const std::string& target);
/// One level: `repetitions` rounds of `concurrency` closed-loop virtual users.
LevelReport run_level(const LoadProfile& profile, const std::string& target, std::size_t concurrency);

struct RatioRow {
  std::size_t concurrency = 0;
  double edge_ms = 0;
  double cloud_ms = 0;
  double ratio = 0;
};

/// edge.average / cloud.average per level; levels must match.
std::vector<RatioRow> compare_reports(const LatencyReport& edge, const LatencyReport& cloud);
std::string ratio_markdown(const std::vector<RatioRow>& rows);

enum class Format { csv, markdown };
Format parse_format(const std::string& name);
std::string to_csv(const LatencyReport& report);
std::string to_markdown(const LatencyReport& report);
void emit_report(const LatencyReport& report, Format format, const std::filesystem::path& path);

struct SaturateConfig {
  std::size_t start = 50;
  std::size_t step = 50;
  std::size_t max = 600;
  double error_threshold = 0.01;
  LoadProfile profile;  // think time, requests per thread and template
};

struct SaturateResult {
  std::vector<LevelReport> levels;
  /// Highest tested level whose error rate stayed within the threshold
  /// before the first failing level; 0 if the first level already failed.
  std::size_t threshold = 0;
  bool failed = false;
};

/// Raises concurrency from start by step until a single repetition exceeds
/// the error threshold or max is reached.
SaturateResult saturate(const SaturateConfig& cfg, const std::string& target);
nlohmann::json to_json(const SaturateResult& r);

}  // namespace nilm::bench
