#pragma once

#include <string>

#include "evolgym/policy.hpp"

namespace evolgym::remote {

class TransportError : public std::runtime_error {
 public:
  explicit TransportError(const std::string& message) : std::runtime_error(message) {}
};

struct EndpointConfig {
  std::string base_url;  // e.g. "http://127.0.0.1:9000"
  std::string path = "/v1/chat/completions";
  std::string model = "default";
  std::string api_key_env = "EVOLGYM_API_KEY";
  int max_retries = 3;
  int backoff_initial_ms = 200;
  int timeout_seconds = 60;
};

/// Renders a context as a chat message list: system prompt, the instruction,
/// then alternating assistant (thought+action) and user (observation) turns.
/// Returns the JSON array serialized as text.
std::string render_messages(const policy::PolicyContext& context);

/// Chat-completion client policy. Transient transport failures are retried
/// with exponential backoff; after max_retries a TransportError escapes.
class RemotePolicy final : public policy::Policy {
 public:
  explicit RemotePolicy(EndpointConfig config);

  policy::ActResult act(const core::Instruction& instruction,
                        const policy::PolicyContext& context, double temperature,
                        std::mt19937_64& rng) override;

 private:
  EndpointConfig config_;
};

}  // namespace evolgym::remote
