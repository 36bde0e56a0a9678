#include "broker/frame.hpp"

#include <poll.h>

#include "common/error.hpp"

namespace nilm::broker {

std::string encode_frame(const std::string& body) {
  if (body.size() > kMaxFrameBytes) throw ProtocolError("protocol", "frame too large");
  auto n = static_cast<std::uint32_t>(body.size());
  std::string out;
  out.reserve(4 + body.size());
  for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<char>((n >> shift) & 0xff));
  out += body;
  return out;
}

std::string encode_frame(const nlohmann::json& body) { return encode_frame(body.dump()); }

std::optional<nlohmann::json> read_frame(net::Socket& sock) {
  unsigned char header[4];
  if (!sock.recv_exact(header, 4)) return std::nullopt;
  std::uint32_t n = (std::uint32_t{header[0]} << 24) | (std::uint32_t{header[1]} << 16) |
                    (std::uint32_t{header[2]} << 8) | std::uint32_t{header[3]};
  if (n > kMaxFrameBytes) throw ProtocolError("protocol", "frame of " + std::to_string(n) + " bytes exceeds limit");
  std::string body(n, '\0');
  if (n > 0 && !sock.recv_exact(body.data(), n)) return std::nullopt;
  nlohmann::json j = nlohmann::json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ProtocolError("protocol", "frame body is not a JSON object");
  if (!j.contains("op") || !j["op"].is_string()) throw ProtocolError("protocol", "frame without op");
  return j;
}

bool wait_readable(const net::Socket& sock, std::chrono::milliseconds timeout) {
  pollfd pfd{sock.fd(), POLLIN, 0};
  int rc = ::poll(&pfd, 1, static_cast<int>(timeout.count()));
  return rc > 0;
}

nlohmann::json error_body(const std::string& code, const std::string& detail) {
  return {{"op", "ERROR"}, {"code", code}, {"detail", detail}};
}

}  // namespace nilm::broker
