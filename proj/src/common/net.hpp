#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

namespace nilm::net {

struct Endpoint {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;

  std::string str() const { return host + ":" + std::to_string(port); }
};

/// Parses "host:port" (port may be 0 to request an ephemeral port).
Endpoint parse_endpoint(std::string_view text);

/// Owning file descriptor for a TCP socket.
class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  ~Socket() { close(); }
  Socket(Socket&& other) noexcept : fd_(other.release()) {}
  Socket& operator=(Socket&& other) noexcept {
    if (this != &other) {
      close();
      fd_ = other.release();
    }
    return *this;
  }
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;

  int fd() const noexcept { return fd_; }
  bool valid() const noexcept { return fd_ >= 0; }
  explicit operator bool() const noexcept { return valid(); }
  int release() noexcept {
    int fd = fd_;
    fd_ = -1;
    return fd;
  }
  void close() noexcept;
  /// Half-closes both directions; wakes up a thread blocked in recv.
  void shutdown() noexcept;

  /// Writes the whole buffer. Returns false on a broken connection.
  bool send_all(const void* data, std::size_t len) noexcept;
  /// Reads exactly `len` bytes. Returns false on EOF or error.
  bool recv_exact(void* data, std::size_t len) noexcept;

  void set_recv_timeout(std::chrono::milliseconds timeout) noexcept;
  void set_nodelay() noexcept;

 private:
  int fd_ = -1;
};

/// Binds and listens; `ep.port == 0` picks an ephemeral port. Throws IoError.
Socket listen_tcp(const Endpoint& ep, int backlog = 1024);

/// Port a listening socket is bound to.
std::uint16_t local_port(const Socket& sock);

/// Connects with a timeout. Throws IoError when unreachable.
Socket connect_tcp(const Endpoint& ep, std::chrono::milliseconds timeout = std::chrono::milliseconds(2000));

/// True when a TCP connection to `ep` can be opened within `timeout`.
bool probe_tcp(const Endpoint& ep, std::chrono::milliseconds timeout) noexcept;

/// Asks the kernel for a currently unused loopback port.
std::uint16_t find_free_port();

}  // namespace nilm::net
