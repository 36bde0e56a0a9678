#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace nilm::services {

struct TargetResult {
  std::string id;
  double prob = 0;
  int state = 0;

  bool operator==(const TargetResult&) const = default;
};

/// One disaggregation output, stamped at the window midpoint.
struct ResultRecord {
  std::string household_id;
  std::int64_t ts_ms = 0;
  std::vector<TargetResult> targets;
  std::string producer;  // "edge" or "cloud"
  std::string model_version;

  bool operator==(const ResultRecord&) const = default;
};

nlohmann::json to_json(const ResultRecord& r);
/// Throws InvalidInput on a missing field or a probability outside [0,1].
ResultRecord record_from_json(const nlohmann::json& j);

}  // namespace nilm::services
