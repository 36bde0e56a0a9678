#pragma once

#include <atomic>
#include <cstddef>

#include "services/configs.hpp"

namespace nilm::services {

struct EdgeRunStats {
  std::size_t input = 0;
  std::size_t rejected = 0;
  std::size_t published_samples = 0;
  std::size_t envelopes = 0;
  std::size_t local_results = 0;
};

/// Edge pipeline for one household: clean, window, optionally infer with the
/// GBDT model, and publish cleaned samples in envelopes with increasing seq.
/// Throws IoError once the broker stays unreachable through all retries.
EdgeRunStats run_edge_agent(const EdgeAgentConfig& cfg, const std::atomic<bool>* stop = nullptr);

}  // namespace nilm::services
