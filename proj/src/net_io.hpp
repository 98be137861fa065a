#pragma once

#include <sys/socket.h>

#include <cerrno>
#include <cstddef>
#include <string>

// Line framing over POSIX stream sockets, shared by the endpoint client and
// server translation units (deliberately not part of the public headers).
namespace steer::netio {

inline bool send_all(int fd, const char* data, std::size_t n) {
  std::size_t sent = 0;
  while (sent < n) {
    const ssize_t k = ::send(fd, data + sent, n - sent, MSG_NOSIGNAL);
    if (k <= 0) {
      if (k < 0 && errno == EINTR) continue;
      return false;
    }
    sent += static_cast<std::size_t>(k);
  }
  return true;
}

enum class LineResult { kLine, kEof, kOversized, kError };

// Pulls one '\n'-terminated line (terminator stripped) out of the stream,
// keeping any bytes past it in `carry` for the next call. kError leaves
// errno as recv set it, so callers can tell a receive timeout from a reset.
inline LineResult read_line(int fd, std::string& carry, std::string& line,
                            std::size_t cap) {
  char buf[4096];
  while (true) {
    const std::size_t nl = carry.find('\n');
    if (nl != std::string::npos) {
      line.assign(carry, 0, nl);
      carry.erase(0, nl + 1);
      return LineResult::kLine;
    }
    if (carry.size() > cap) return LineResult::kOversized;
    const ssize_t k = ::recv(fd, buf, sizeof buf, 0);
    if (k == 0) return LineResult::kEof;
    if (k < 0) {
      if (errno == EINTR) continue;
      return LineResult::kError;
    }
    carry.append(buf, static_cast<std::size_t>(k));
  }
}

}  // namespace steer::netio
