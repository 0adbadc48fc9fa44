#include "evolgym/protocol.hpp"

#include <algorithm>

namespace evolgym::protocol {

void EnvRegistry::register_env(const std::string& env_name, EnvDescriptor descriptor,
                               EnvFactory factory) {
  entries_[env_name] = Entry{std::move(descriptor), std::move(factory)};
}

bool EnvRegistry::has(const std::string& env_name) const { return entries_.count(env_name) > 0; }

const EnvDescriptor& EnvRegistry::descriptor(const std::string& env_name) const {
  auto it = entries_.find(env_name);
  if (it == entries_.end()) {
    throw ProtocolError(404, "unknown_env", "unknown environment: " + env_name);
  }
  return it->second.descriptor;
}

std::unique_ptr<Environment> EnvRegistry::make(const std::string& env_name, std::uint64_t seed,
                                               core::Instruction* instruction_out) const {
  auto it = entries_.find(env_name);
  if (it == entries_.end()) {
    throw ProtocolError(404, "unknown_env", "unknown environment: " + env_name);
  }
  return it->second.factory(seed, instruction_out);
}

std::vector<std::string> EnvRegistry::names() const {
  std::vector<std::string> names;
  names.reserve(entries_.size());
  for (const auto& [name, entry] : entries_) names.push_back(name);
  std::sort(names.begin(), names.end());
  return names;
}

void EnvRegistry::add_instructions(const core::InstructionSet& set) {
  instructions_.instructions.insert(instructions_.instructions.end(), set.instructions.begin(),
                                    set.instructions.end());
  instructions_.validate();
}

const core::Instruction* EnvRegistry::find_instruction(const std::string& env_name,
                                                       const std::string& instruction_id) const {
  return instructions_.find(env_name, instruction_id);
}

SessionManager::SessionManager(const EnvRegistry& registry, std::chrono::milliseconds idle_timeout)
    : registry_(registry), idle_timeout_(idle_timeout) {}

CreateResult SessionManager::create(const std::string& env_name,
                                    std::optional<std::string> instruction_id,
                                    std::optional<std::uint64_t> seed) {
  if (!registry_.has(env_name)) {
    throw ProtocolError(404, "unknown_env", "unknown environment: " + env_name);
  }
  std::uint64_t effective_seed = 0;
  if (instruction_id) {
    const core::Instruction* instruction = registry_.find_instruction(env_name, *instruction_id);
    if (instruction == nullptr) {
      throw ProtocolError(404, "unknown_instruction",
                          "unknown instruction: " + env_name + "/" + *instruction_id);
    }
    effective_seed = instruction->seed;
  } else if (seed) {
    effective_seed = *seed;
  } else {
    throw ProtocolError(400, "bad_request", "createEnv requires instruction_id or seed");
  }

  auto session = std::make_shared<Session>();
  session->env_name = env_name;
  session->seed = effective_seed;
  session->env = registry_.make(env_name, effective_seed, &session->instruction);
  if (instruction_id) session->instruction.instruction_id = *instruction_id;
  session->last_observation = session->instruction.text;
  session->last_touch = std::chrono::steady_clock::now();

  std::string session_id;
  {
    std::lock_guard<std::mutex> guard(sessions_lock_);
    session_id = env_name + "-" + std::to_string(++next_id_);
    sessions_[session_id] = session;
  }
  evict_idle();
  return CreateResult{session_id, registry_.descriptor(env_name).system_prompt,
                      session->last_observation};
}

std::shared_ptr<SessionManager::Session> SessionManager::lookup(
    const std::string& session_id) const {
  std::lock_guard<std::mutex> guard(sessions_lock_);
  auto it = sessions_.find(session_id);
  if (it == sessions_.end()) {
    throw ProtocolError(404, "unknown_session", "unknown session: " + session_id);
  }
  return it->second;
}

StepResult SessionManager::step(const std::string& session_id, const std::string& action) {
  auto session = lookup(session_id);
  std::lock_guard<std::mutex> guard(session->lock);
  if (session->done) {
    throw ProtocolError(409, "session_done", "session is finished: " + session_id);
  }
  StepResult result = session->env->step(action);
  session->round += 1;
  session->done = result.done;
  session->last_observation = result.observation;
  session->last_touch = std::chrono::steady_clock::now();
  return result;
}

std::string SessionManager::observation(const std::string& session_id) const {
  auto session = lookup(session_id);
  std::lock_guard<std::mutex> guard(session->lock);
  return session->last_observation;
}

std::vector<std::string> SessionManager::available_actions(const std::string& session_id) const {
  auto session = lookup(session_id);
  std::lock_guard<std::mutex> guard(session->lock);
  return session->env->available_actions();
}

std::string SessionManager::reset(const std::string& session_id) {
  auto session = lookup(session_id);
  std::lock_guard<std::mutex> guard(session->lock);
  core::Instruction instruction;
  session->env = registry_.make(session->env_name, session->seed, &instruction);
  session->instruction.text = instruction.text;
  session->round = 0;
  session->done = false;
  session->last_observation = session->instruction.text;
  session->last_touch = std::chrono::steady_clock::now();
  return session->last_observation;
}

int SessionManager::round(const std::string& session_id) const {
  auto session = lookup(session_id);
  std::lock_guard<std::mutex> guard(session->lock);
  return session->round;
}

bool SessionManager::done(const std::string& session_id) const {
  auto session = lookup(session_id);
  std::lock_guard<std::mutex> guard(session->lock);
  return session->done;
}

std::string SessionManager::fingerprint(const std::string& session_id) const {
  auto session = lookup(session_id);
  std::lock_guard<std::mutex> guard(session->lock);
  return session->env->fingerprint() + "|round=" + std::to_string(session->round) +
         "|done=" + (session->done ? "1" : "0") + "|obs=" + session->last_observation;
}

std::size_t SessionManager::session_count() const {
  std::lock_guard<std::mutex> guard(sessions_lock_);
  return sessions_.size();
}

std::size_t SessionManager::evict_idle() {
  const auto now = std::chrono::steady_clock::now();
  std::lock_guard<std::mutex> guard(sessions_lock_);
  std::size_t evicted = 0;
  for (auto it = sessions_.begin(); it != sessions_.end();) {
    if (now - it->second->last_touch > idle_timeout_) {
      it = sessions_.erase(it);
      ++evicted;
    } else {
      ++it;
    }
  }
  return evicted;
}

}  // namespace evolgym::protocol
