#pragma once

#include <chrono>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "common/net.hpp"

namespace nilm::broker {

/// Frames larger than this are treated as a protocol violation.
inline constexpr std::size_t kMaxFrameBytes = 16u << 20;

/// u32 big-endian body length followed by the JSON body.
std::string encode_frame(const nlohmann::json& body);
std::string encode_frame(const std::string& body);

/// Blocks for one frame. Returns nullopt on EOF. Throws ProtocolError on an
/// oversized frame or a body that is not a JSON object with an "op".
std::optional<nlohmann::json> read_frame(net::Socket& sock);

/// Waits up to `timeout` for the socket to become readable.
bool wait_readable(const net::Socket& sock, std::chrono::milliseconds timeout);

nlohmann::json error_body(const std::string& code, const std::string& detail);

}  // namespace nilm::broker
