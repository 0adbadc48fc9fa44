#pragma once

#include <chrono>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "evolgym/core.hpp"

namespace evolgym::protocol {

enum class RewardKind { kBinary, kDense };

struct EnvDescriptor {
  std::string env_name;
  int max_rounds = 0;
  RewardKind reward_kind = RewardKind::kBinary;
  std::string system_prompt;
};

struct StepResult {
  std::string observation;
  double step_reward = 0.0;            // environment-native, e.g. -1 per maze move
  double trajectory_reward_so_far = 0.0;  // in [0,1]; final once done
  bool done = false;
  std::vector<std::string> available_actions;
};

/// One live world instance. Implementations own the hidden POMDP state; it
/// never crosses this interface except through observations.
class Environment {
 public:
  virtual ~Environment() = default;

  virtual const EnvDescriptor& descriptor() const = 0;
  virtual StepResult step(const std::string& action) = 0;
  /// Candidate actions at the current state, sorted lexicographically.
  /// Empty when the action space is open-ended.
  virtual std::vector<std::string> available_actions() const = 0;
  virtual bool done() const = 0;
  virtual double trajectory_reward() const = 0;
  /// Stable digest of the hidden state; test-only, never served on the wire.
  virtual std::string fingerprint() const = 0;
};

/// Builds a fresh world plus its instruction rendering from a seed.
using EnvFactory =
    std::function<std::unique_ptr<Environment>(std::uint64_t seed, core::Instruction* instruction_out)>;

class EnvRegistry {
 public:
  void register_env(const std::string& env_name, EnvDescriptor descriptor, EnvFactory factory);
  bool has(const std::string& env_name) const;
  const EnvDescriptor& descriptor(const std::string& env_name) const;
  std::unique_ptr<Environment> make(const std::string& env_name, std::uint64_t seed,
                                    core::Instruction* instruction_out) const;
  std::vector<std::string> names() const;

  void add_instructions(const core::InstructionSet& set);
  const core::Instruction* find_instruction(const std::string& env_name,
                                            const std::string& instruction_id) const;

 private:
  struct Entry {
    EnvDescriptor descriptor;
    EnvFactory factory;
  };
  std::unordered_map<std::string, Entry> entries_;
  core::InstructionSet instructions_;
};

/// Protocol-level failure carrying the wire error code and HTTP status.
class ProtocolError : public std::runtime_error {
 public:
  ProtocolError(int http_status, std::string code, const std::string& message)
      : std::runtime_error(message), http_status_(http_status), code_(std::move(code)) {}
  int http_status() const { return http_status_; }
  const std::string& code() const { return code_; }

 private:
  int http_status_;
  std::string code_;
};

struct CreateResult {
  std::string session_id;
  std::string system_prompt;
  std::string observation;
};

/// Session bookkeeping shared by the HTTP service and the in-process
/// transport. Requests on one session serialize through a per-session lock;
/// distinct sessions proceed in parallel.
class SessionManager {
 public:
  explicit SessionManager(const EnvRegistry& registry,
                          std::chrono::milliseconds idle_timeout = std::chrono::seconds(600));

  CreateResult create(const std::string& env_name, std::optional<std::string> instruction_id,
                      std::optional<std::uint64_t> seed);
  StepResult step(const std::string& session_id, const std::string& action);
  std::string observation(const std::string& session_id) const;
  std::vector<std::string> available_actions(const std::string& session_id) const;
  std::string reset(const std::string& session_id);

  int round(const std::string& session_id) const;
  bool done(const std::string& session_id) const;
  std::string fingerprint(const std::string& session_id) const;
  std::size_t session_count() const;
  /// Drops sessions idle longer than the timeout; returns how many were evicted.
  std::size_t evict_idle();

 private:
  struct Session {
    std::string env_name;
    core::Instruction instruction;
    std::uint64_t seed = 0;
    std::unique_ptr<Environment> env;
    std::string last_observation;
    int round = 0;
    bool done = false;
    std::chrono::steady_clock::time_point last_touch;
    mutable std::mutex lock;
  };

  std::shared_ptr<Session> lookup(const std::string& session_id) const;

  const EnvRegistry& registry_;
  std::chrono::milliseconds idle_timeout_;
  mutable std::mutex sessions_lock_;
  std::unordered_map<std::string, std::shared_ptr<Session>> sessions_;
  std::uint64_t next_id_ = 0;
};

}  // namespace evolgym::protocol
