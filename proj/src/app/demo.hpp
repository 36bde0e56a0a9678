#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "bench/bench.hpp"

namespace nilm::app {

struct DemoOptions {
  std::filesystem::path out_dir = "demo";
  std::filesystem::path executable;  // the CLI binary used for child processes
  std::uint64_t seed = 7;
  std::size_t workers = 2;
  std::size_t live_samples = 2000;
  std::size_t train_samples = 3000;
  std::size_t window = 31;
  std::size_t batch_threshold = 16;
  std::size_t gbdt_trees = 30;
  std::size_t s2p_epochs = 2;
  bool bench = true;
  bench::LoadProfile profile;
  std::string child_log_level = "warn";
  std::size_t drain_timeout_s = 90;

  /// Light bench defaults suitable for a desk run.
  DemoOptions();
};

DemoOptions demo_options_from_json(const nlohmann::json& j);

struct DemoSummary {
  std::size_t live_samples = 0;
  std::size_t expected_windows = 0;
  std::size_t cloud_records = 0;
  std::size_t edge_records = 0;
  bool drained = false;
  bool ordered = false;
  std::string household_id;
  std::filesystem::path results_dir;
  nlohmann::json bench;  // per-mode report summaries when bench ran

  nlohmann::json to_json() const;
};

/// Trains both models, starts broker, workers, balancer and an edge agent as
/// child processes of `executable`, waits for the cloud to drain, optionally
/// benchmarks both request modes, then tears everything down. Throws on any
/// child failing to start; children are always stopped.
DemoSummary run_demo(const DemoOptions& opts);

}  // namespace nilm::app
