#include "steer/net.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <sys/time.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <stdexcept>

#include "json.hpp"
#include "net_io.hpp"

namespace steer {
namespace {

using nlohmann::json;

std::string errno_text(const char* what) {
  return std::string(what) + ": " + std::strerror(errno);
}

}  // namespace

RemotePolicy::RemotePolicy(RemoteConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.state_dim == 0 || cfg_.action_dim == 0 || cfg_.chunk == 0)
    throw std::invalid_argument("remote policy: shape must be positive");
  if (cfg_.port == 0)
    throw std::invalid_argument("remote policy: port is required");
  if (cfg_.timeout_ms <= 0)
    throw std::invalid_argument("remote policy: timeout must be positive");
  std::lock_guard<std::mutex> g(mu_);
  connect_locked();
}

RemotePolicy::~RemotePolicy() {
  std::lock_guard<std::mutex> g(mu_);
  close_locked();
}

void RemotePolicy::connect_locked() const {
  fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd_ < 0) throw std::runtime_error(errno_text("remote policy: socket"));

  timeval tv{};
  tv.tv_sec = cfg_.timeout_ms / 1000;
  tv.tv_usec = (cfg_.timeout_ms % 1000) * 1000;
  ::setsockopt(fd_, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
  ::setsockopt(fd_, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof tv);
  int one = 1;
  ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);

  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(cfg_.port);
  if (::inet_pton(AF_INET, cfg_.host.c_str(), &addr.sin_addr) != 1) {
    close_locked();
    throw std::invalid_argument("remote policy: '" + cfg_.host +
                                "' is not a numeric IPv4 address");
  }
  if (::connect(fd_, reinterpret_cast<const sockaddr*>(&addr), sizeof addr) <
      0) {
    const std::string msg = errno_text("remote policy: connect");
    close_locked();
    throw std::runtime_error(msg + " (" + cfg_.host + ":" +
                             std::to_string(cfg_.port) + ")");
  }
}

void RemotePolicy::close_locked() const {
  if (fd_ >= 0) ::close(fd_);
  fd_ = -1;
}

// One send + one reply read. Returns false on a transient disconnect (the
// retryable case); timeouts and protocol violations throw.
bool RemotePolicy::try_round_trip(const std::string& line,
                                  std::string& reply) const {
  if (!netio::send_all(fd_, line.data(), line.size())) {
    if (errno == EAGAIN || errno == EWOULDBLOCK)
      throw std::runtime_error("remote policy: timeout sending request");
    return false;
  }
  std::string carry;
  switch (netio::read_line(fd_, carry, reply, kMaxWireLine)) {
    case netio::LineResult::kLine:
      return true;
    case netio::LineResult::kEof:
      return false;
    case netio::LineResult::kOversized:
      throw std::runtime_error("remote policy: oversized reply");
    case netio::LineResult::kError:
      if (errno == EAGAIN || errno == EWOULDBLOCK)
        throw std::runtime_error(
            "remote policy: timeout waiting for response");
      return false;
  }
  return false;
}

void RemotePolicy::remote_query(std::span<const double> state,
                                std::span<const double> noise,
                                std::span<double> actions) const {
  if (state.size() != cfg_.state_dim)
    throw std::invalid_argument("remote query: bad state width");
  if (noise.size() != latent_dim() || actions.size() != latent_dim())
    throw std::invalid_argument("remote query: bad latent width");

  std::lock_guard<std::mutex> g(mu_);
  const std::int64_t id = next_id_++;
  json req{{"id", id},
           {"state", json::array()},
           {"noise", json::array()}};
  for (double v : state) req["state"].push_back(v);
  for (double v : noise) req["noise"].push_back(v);
  const std::string line = req.dump() + "\n";

  // Decoding is pure and the server stateless, so resending after a dropped
  // connection cannot change the answer.
  std::string reply;
  if (!try_round_trip(line, reply)) {
    close_locked();
    connect_locked();
    if (!try_round_trip(line, reply)) {
      close_locked();
      throw std::runtime_error(
          "remote policy: connection lost twice on one query");
    }
  }

  json resp;
  try {
    resp = json::parse(reply);
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("remote policy: unparseable reply: ") +
                             e.what());
  }
  if (resp.contains("error"))
    throw std::runtime_error("remote policy: server error: " +
                             resp["error"].get<std::string>());
  if (!resp.contains("id") || resp["id"].get<std::int64_t>() != id)
    throw std::runtime_error("remote policy: response id mismatch");
  if (!resp.contains("action") || !resp["action"].is_array() ||
      resp["action"].size() != latent_dim())
    throw std::runtime_error("remote policy: malformed action in reply");
  for (std::size_t i = 0; i < actions.size(); ++i)
    actions[i] = resp["action"][i].get<double>();
}

void RemotePolicy::decode_batch(const Tensor& states, const Tensor& latents,
                                Tensor& actions) const {
  if (states.rows() != latents.rows())
    throw std::invalid_argument("remote query: row count mismatch");
  actions.resize(latents.rows(), latent_dim());
  for (std::size_t r = 0; r < latents.rows(); ++r)
    remote_query({states.row(r), cfg_.state_dim},
                 {latents.row(r), latent_dim()},
                 {actions.row(r), latent_dim()});
}

}  // namespace steer
