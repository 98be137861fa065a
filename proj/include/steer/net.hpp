#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "steer/policy_map.hpp"

namespace steer {

// Wire protocol: one UTF-8 JSON object per line over a TCP stream. Requests
// carry {"id": integer, "state": [...], "noise": [...]}; responses carry
// {"id", "action": [...]} on success or {"id", "error": string} otherwise
// (id -1 when the request's own id was unreadable). Numbers are printed as
// shortest-round-trip decimals, so doubles survive the trip bit-exactly.
// Lines longer than kMaxWireLine get the connection closed.
inline constexpr std::size_t kMaxWireLine = 1 << 20;

// Serves a policy map's decode over TCP for the duration of its lifetime.
// The map is the only thing exposed: requests are stateless, connections are
// handled concurrently, and per-connection requests are answered in the
// order they arrive. A malformed line earns an error response and the
// connection lives on; an oversized one closes it.
class PolicyServer {
 public:
  // Binds and starts accepting immediately. host must be a numeric IPv4
  // address; port 0 picks a free port (see port()).
  PolicyServer(const PolicyMap& policy, const std::string& host,
               std::uint16_t port);
  ~PolicyServer();

  PolicyServer(const PolicyServer&) = delete;
  PolicyServer& operator=(const PolicyServer&) = delete;

  const std::string& host() const { return host_; }
  std::uint16_t port() const { return port_; }

  // Stops accepting, severs open connections, and joins all workers.
  // Idempotent; the destructor calls it.
  void stop();

 private:
  struct Connection;

  void accept_loop();
  void serve_connection(Connection& conn);
  std::string handle_line(const std::string& line) const;

  const PolicyMap& policy_;
  std::string host_;
  std::uint16_t port_ = 0;
  int listen_fd_ = -1;
  std::thread acceptor_;
  std::vector<std::unique_ptr<Connection>> conns_;
  std::mutex conns_mu_;
  bool stopped_ = false;
  std::mutex stop_mu_;
};

struct RemoteConfig {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;
  // The served policy's shape; the protocol has no discovery handshake, so
  // the caller states what it expects and mismatched replies are errors.
  std::size_t state_dim = 0;
  std::size_t action_dim = 0;
  std::size_t chunk = 1;
  int timeout_ms = 5000;  // per send/receive
};

// A policy map whose decode happens on the other end of a socket. This is
// the whole steering-side view of a served policy: a process linked against
// this client (and not the sampler library) can steer a policy whose
// weights it could not read even in principle.
//
// Queries block. A transient disconnect is retried once with a fresh
// connection; a second failure, a timeout, or a server-side error surfaces
// as std::runtime_error. Concurrent callers are serialized on the single
// connection.
class RemotePolicy final : public PolicyMap {
 public:
  explicit RemotePolicy(RemoteConfig cfg);  // connects eagerly
  ~RemotePolicy();

  RemotePolicy(const RemotePolicy&) = delete;
  RemotePolicy& operator=(const RemotePolicy&) = delete;

  std::size_t state_dim() const override { return cfg_.state_dim; }
  std::size_t action_dim() const override { return cfg_.action_dim; }
  std::size_t chunk() const override { return cfg_.chunk; }
  std::size_t latent_dim() const override {
    return cfg_.chunk * cfg_.action_dim;
  }

  // One blocking round trip: send (state, noise), receive the action chunk.
  void remote_query(std::span<const double> state,
                    std::span<const double> noise,
                    std::span<double> actions) const;

  void decode(std::span<const double> state, std::span<const double> latent,
              std::span<double> actions) const override {
    remote_query(state, latent, actions);
  }
  void decode_batch(const Tensor& states, const Tensor& latents,
                    Tensor& actions) const override;

 private:
  void connect_locked() const;
  void close_locked() const;
  bool try_round_trip(const std::string& line, std::string& reply) const;

  RemoteConfig cfg_;
  mutable std::mutex mu_;
  mutable int fd_ = -1;
  mutable std::int64_t next_id_ = 0;
};

}  // namespace steer
