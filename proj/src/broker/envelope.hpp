#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "services/record.hpp"

namespace nilm::broker {

struct EnvelopeSample {
  std::int64_t ts = 0;
  double p = 0;
  double q = 0;

  bool operator==(const EnvelopeSample&) const = default;
};

/// Packet published by an edge agent. `results` is an optional extension
/// carrying edge-side inference outputs for the same samples.
struct MessageEnvelope {
  std::string household_id;
  std::uint64_t seq = 0;
  std::int64_t sent_at_ms = 0;
  std::vector<EnvelopeSample> samples;
  std::vector<services::ResultRecord> results;

  bool operator==(const MessageEnvelope&) const = default;
};

nlohmann::json to_json(const MessageEnvelope& env);
/// Throws InvalidInput when the body does not follow the envelope schema.
MessageEnvelope envelope_from_json(const nlohmann::json& j);

/// Canonical text: sorted keys, no whitespace, shortest round-trip numbers.
std::string serialize(const MessageEnvelope& env);
MessageEnvelope parse_envelope(const std::string& text);

}  // namespace nilm::broker
