#include "steer/net.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <cstring>
#include <stdexcept>
#include <vector>

#include "json.hpp"
#include "net_io.hpp"

namespace steer {
namespace {

using nlohmann::json;

std::string errno_text(const char* what) {
  return std::string(what) + ": " + std::strerror(errno);
}

json error_reply(std::int64_t id, const std::string& message) {
  return json{{"id", id}, {"error", message}};
}

void set_nodelay(int fd) {
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

}  // namespace

struct PolicyServer::Connection {
  int fd = -1;
  std::thread worker;
  std::atomic<bool> done{false};
};

PolicyServer::PolicyServer(const PolicyMap& policy, const std::string& host,
                           std::uint16_t port)
    : policy_(policy), host_(host) {
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw std::runtime_error(errno_text("serve: socket"));
  int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);

  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    ::close(listen_fd_);
    throw std::invalid_argument("serve: '" + host +
                                "' is not a numeric IPv4 address");
  }
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) <
      0) {
    const std::string msg = errno_text("serve: bind");
    ::close(listen_fd_);
    throw std::runtime_error(msg);
  }
  if (::listen(listen_fd_, 64) < 0) {
    const std::string msg = errno_text("serve: listen");
    ::close(listen_fd_);
    throw std::runtime_error(msg);
  }
  sockaddr_in bound{};
  socklen_t len = sizeof bound;
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&bound), &len);
  port_ = ntohs(bound.sin_port);

  acceptor_ = std::thread(&PolicyServer::accept_loop, this);
}

PolicyServer::~PolicyServer() { stop(); }

void PolicyServer::stop() {
  {
    std::lock_guard<std::mutex> g(stop_mu_);
    if (stopped_) return;
    stopped_ = true;
  }
  ::shutdown(listen_fd_, SHUT_RDWR);
  if (acceptor_.joinable()) acceptor_.join();
  ::close(listen_fd_);

  std::lock_guard<std::mutex> g(conns_mu_);
  for (auto& c : conns_) ::shutdown(c->fd, SHUT_RDWR);
  for (auto& c : conns_) {
    if (c->worker.joinable()) c->worker.join();
    ::close(c->fd);
  }
  conns_.clear();
}

void PolicyServer::accept_loop() {
  while (true) {
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) {
      if (errno == EINTR) continue;
      break;  // listener shut down (or broken beyond repair): stop accepting
    }
    set_nodelay(fd);
    std::lock_guard<std::mutex> g(conns_mu_);
    // Reap connections whose clients already hung up.
    for (std::size_t i = 0; i < conns_.size();) {
      if (conns_[i]->done.load()) {
        conns_[i]->worker.join();
        ::close(conns_[i]->fd);
        conns_.erase(conns_.begin() + static_cast<std::ptrdiff_t>(i));
      } else {
        ++i;
      }
    }
    auto conn = std::make_unique<Connection>();
    conn->fd = fd;
    Connection* raw = conn.get();
    conn->worker = std::thread([this, raw] {
      serve_connection(*raw);
      raw->done.store(true);
    });
    conns_.push_back(std::move(conn));
  }
}

void PolicyServer::serve_connection(Connection& conn) {
  std::string carry, line;
  while (true) {
    const netio::LineResult r =
        netio::read_line(conn.fd, carry, line, kMaxWireLine);
    if (r != netio::LineResult::kLine) break;  // EOF, oversized, or error
    const std::string reply = handle_line(line) + "\n";
    if (!netio::send_all(conn.fd, reply.data(), reply.size())) break;
  }
  ::shutdown(conn.fd, SHUT_RDWR);
}

std::string PolicyServer::handle_line(const std::string& line) const {
  json req;
  try {
    req = json::parse(line);
  } catch (const json::exception& e) {
    return error_reply(-1, std::string("parse: ") + e.what()).dump();
  }
  if (!req.is_object())
    return error_reply(-1, "parse: request must be a single object").dump();
  if (!req.contains("id") || !req["id"].is_number_integer())
    return error_reply(-1, "request id must be an integer").dump();
  const std::int64_t id = req["id"].get<std::int64_t>();

  const auto pull = [&](const char* key, std::size_t want,
                        std::vector<double>& out) -> std::string {
    if (!req.contains(key) || !req[key].is_array() || req[key].size() != want)
      return std::string(key) + " must be an array of " +
             std::to_string(want) + " numbers";
    out.reserve(want);
    for (const auto& v : req[key]) {
      if (!v.is_number())
        return std::string(key) + " must contain only numbers";
      out.push_back(v.get<double>());
    }
    return {};
  };

  std::vector<double> state, noise;
  if (std::string err = pull("state", policy_.state_dim(), state); !err.empty())
    return error_reply(id, err).dump();
  if (std::string err = pull("noise", policy_.latent_dim(), noise);
      !err.empty())
    return error_reply(id, err).dump();

  std::vector<double> actions(policy_.latent_dim());
  try {
    policy_.decode(state, noise, actions);
  } catch (const std::exception& e) {
    return error_reply(id, std::string("decode failed: ") + e.what()).dump();
  }
  json resp{{"id", id}, {"action", actions}};
  return resp.dump();
}

}  // namespace steer
