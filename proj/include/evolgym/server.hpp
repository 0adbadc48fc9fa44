#pragma once

#include <memory>
#include <string>
#include <thread>

#include "evolgym/protocol.hpp"

namespace evolgym::server {

/// Default bind address, overridable through EVOLGYM_BIND.
std::string bind_address();

/// One HTTP service speaking the environment protocol for every env in its
/// registry. Runs its own listener thread until stop().
class EnvService {
 public:
  EnvService(const protocol::EnvRegistry& registry, std::string host, int port,
             std::chrono::milliseconds idle_timeout = std::chrono::seconds(600));
  ~EnvService();

  EnvService(const EnvService&) = delete;
  EnvService& operator=(const EnvService&) = delete;

  /// Binds and starts serving; false when the port is unavailable.
  bool start();
  void stop();

  int port() const { return port_; }
  std::string url() const;
  protocol::SessionManager& sessions() { return *sessions_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::unique_ptr<protocol::SessionManager> sessions_;
  std::string host_;
  int port_;
  std::thread listener_;
};

}  // namespace evolgym::server
