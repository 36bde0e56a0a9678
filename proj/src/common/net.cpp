#include "common/net.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <charconv>
#include <cstring>

#include "common/error.hpp"

namespace nilm::net {

namespace {

sockaddr_in resolve(const Endpoint& ep) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(ep.port);
  std::string host = ep.host.empty() || ep.host == "localhost" ? "127.0.0.1" : ep.host;
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) == 1) return addr;

  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (::getaddrinfo(host.c_str(), nullptr, &hints, &res) != 0 || !res)
    throw IoError("cannot resolve host '" + ep.host + "'");
  addr.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
  ::freeaddrinfo(res);
  return addr;
}

}  // namespace

Endpoint parse_endpoint(std::string_view text) {
  auto colon = text.rfind(':');
  if (colon == std::string_view::npos) throw InvalidInput("endpoint '" + std::string(text) + "' lacks ':port'");
  Endpoint ep;
  ep.host = std::string(text.substr(0, colon));
  if (ep.host.empty()) ep.host = "127.0.0.1";
  auto port_text = text.substr(colon + 1);
  unsigned port = 0;
  auto [ptr, ec] = std::from_chars(port_text.data(), port_text.data() + port_text.size(), port);
  if (ec != std::errc() || ptr != port_text.data() + port_text.size() || port > 65535)
    throw InvalidInput("bad port in endpoint '" + std::string(text) + "'");
  ep.port = static_cast<std::uint16_t>(port);
  return ep;
}

void Socket::close() noexcept {
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
}

void Socket::shutdown() noexcept {
  if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
}

bool Socket::send_all(const void* data, std::size_t len) noexcept {
  auto p = static_cast<const char*>(data);
  while (len > 0) {
    ssize_t n = ::send(fd_, p, len, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    p += n;
    len -= static_cast<std::size_t>(n);
  }
  return true;
}

bool Socket::recv_exact(void* data, std::size_t len) noexcept {
  auto p = static_cast<char*>(data);
  while (len > 0) {
    ssize_t n = ::recv(fd_, p, len, 0);
    if (n == 0) return false;
    if (n < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    p += n;
    len -= static_cast<std::size_t>(n);
  }
  return true;
}

void Socket::set_recv_timeout(std::chrono::milliseconds timeout) noexcept {
  timeval tv{};
  tv.tv_sec = static_cast<time_t>(timeout.count() / 1000);
  tv.tv_usec = static_cast<suseconds_t>((timeout.count() % 1000) * 1000);
  ::setsockopt(fd_, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
}

void Socket::set_nodelay() noexcept {
  int one = 1;
  ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

Socket listen_tcp(const Endpoint& ep, int backlog) {
  auto addr = resolve(ep);
  Socket sock(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
  if (!sock) throw IoError(std::string("socket: ") + std::strerror(errno));
  int one = 1;
  ::setsockopt(sock.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  if (::bind(sock.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0)
    throw IoError("bind " + ep.str() + ": " + std::strerror(errno));
  if (::listen(sock.fd(), backlog) != 0) throw IoError("listen " + ep.str() + ": " + std::strerror(errno));
  return sock;
}

std::uint16_t local_port(const Socket& sock) {
  sockaddr_in addr{};
  socklen_t len = sizeof addr;
  if (::getsockname(sock.fd(), reinterpret_cast<sockaddr*>(&addr), &len) != 0)
    throw IoError(std::string("getsockname: ") + std::strerror(errno));
  return ntohs(addr.sin_port);
}

Socket connect_tcp(const Endpoint& ep, std::chrono::milliseconds timeout) {
  auto addr = resolve(ep);
  Socket sock(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
  if (!sock) throw IoError(std::string("socket: ") + std::strerror(errno));

  int flags = ::fcntl(sock.fd(), F_GETFL, 0);
  ::fcntl(sock.fd(), F_SETFL, flags | O_NONBLOCK);
  int rc = ::connect(sock.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof addr);
  if (rc != 0 && errno != EINPROGRESS) throw IoError("connect " + ep.str() + ": " + std::strerror(errno));
  if (rc != 0) {
    pollfd pfd{sock.fd(), POLLOUT, 0};
    int ready;
    do {
      ready = ::poll(&pfd, 1, static_cast<int>(timeout.count()));
    } while (ready < 0 && errno == EINTR);
    if (ready <= 0) throw IoError("connect " + ep.str() + ": timed out");
    int err = 0;
    socklen_t len = sizeof err;
    ::getsockopt(sock.fd(), SOL_SOCKET, SO_ERROR, &err, &len);
    if (err != 0) throw IoError("connect " + ep.str() + ": " + std::strerror(err));
  }
  ::fcntl(sock.fd(), F_SETFL, flags);
  sock.set_nodelay();
  return sock;
}

bool probe_tcp(const Endpoint& ep, std::chrono::milliseconds timeout) noexcept {
  try {
    connect_tcp(ep, timeout);
    return true;
  } catch (...) {
    return false;
  }
}

std::uint16_t find_free_port() {
  auto sock = listen_tcp(Endpoint{"127.0.0.1", 0}, 1);
  return local_port(sock);
}

}  // namespace nilm::net
