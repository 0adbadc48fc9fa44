#pragma once

#include <memory>
#include <string>

#include "evolgym/protocol.hpp"

namespace evolgym::transport {

class TransportError : public std::runtime_error {
 public:
  explicit TransportError(const std::string& message) : std::runtime_error(message) {}
};

/// Client-side view of one environment service, in-process or over HTTP.
class EnvTransport {
 public:
  virtual ~EnvTransport() = default;

  virtual protocol::CreateResult create(const std::string& env_name,
                                        std::optional<std::string> instruction_id,
                                        std::optional<std::uint64_t> seed) = 0;
  virtual protocol::StepResult step(const std::string& session_id, const std::string& action) = 0;
  virtual std::string observation(const std::string& session_id) = 0;
  virtual std::vector<std::string> available_actions(const std::string& session_id) = 0;
  virtual std::string reset(const std::string& session_id) = 0;
};

/// Direct calls into a shared SessionManager; thread-safe.
class InProcessTransport final : public EnvTransport {
 public:
  explicit InProcessTransport(protocol::SessionManager& sessions) : sessions_(sessions) {}

  protocol::CreateResult create(const std::string& env_name,
                                std::optional<std::string> instruction_id,
                                std::optional<std::uint64_t> seed) override {
    return sessions_.create(env_name, std::move(instruction_id), seed);
  }
  protocol::StepResult step(const std::string& session_id, const std::string& action) override {
    return sessions_.step(session_id, action);
  }
  std::string observation(const std::string& session_id) override {
    return sessions_.observation(session_id);
  }
  std::vector<std::string> available_actions(const std::string& session_id) override {
    return sessions_.available_actions(session_id);
  }
  std::string reset(const std::string& session_id) override { return sessions_.reset(session_id); }

 private:
  protocol::SessionManager& sessions_;
};

/// JSON-over-HTTP client for one service. Not thread-safe; create one per
/// worker.
class HttpTransport final : public EnvTransport {
 public:
  explicit HttpTransport(std::string base_url);
  ~HttpTransport() override;

  protocol::CreateResult create(const std::string& env_name,
                                std::optional<std::string> instruction_id,
                                std::optional<std::uint64_t> seed) override;
  protocol::StepResult step(const std::string& session_id, const std::string& action) override;
  std::string observation(const std::string& session_id) override;
  std::vector<std::string> available_actions(const std::string& session_id) override;
  std::string reset(const std::string& session_id) override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace evolgym::transport
