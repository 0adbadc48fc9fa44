#include "evolgym/remote.hpp"

#include <chrono>
#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "evolgym/policy.hpp"

namespace evolgym::remote {

using nlohmann::json;

namespace {

json message_list(const policy::PolicyContext& context) {
  json messages = json::array();
  messages.push_back({{"role", "system"}, {"content", context.system_prompt}});
  messages.push_back({{"role", "user"}, {"content", context.instruction}});
  for (const core::Step& step : context.history) {
    messages.push_back({{"role", "assistant"},
                        {"content", policy::render_react({step.thought, step.action})}});
    messages.push_back({{"role", "user"}, {"content", step.observation}});
  }
  return messages;
}

}  // namespace

std::string render_messages(const policy::PolicyContext& context) {
  return message_list(context).dump();
}

RemotePolicy::RemotePolicy(EndpointConfig config) : config_(std::move(config)) {}

policy::ActResult RemotePolicy::act(const core::Instruction& instruction,
                                    const policy::PolicyContext& context, double temperature,
                                    std::mt19937_64& rng) {
  (void)instruction;
  (void)rng;  // sampling happens server-side
  const json body = {{"model", config_.model},
                     {"messages", message_list(context)},
                     {"temperature", temperature}};

  httplib::Client client(config_.base_url);
  client.set_connection_timeout(config_.timeout_seconds);
  client.set_read_timeout(config_.timeout_seconds);
  httplib::Headers headers;
  if (const char* key = std::getenv(config_.api_key_env.c_str()); key != nullptr && *key != '\0') {
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }

  std::string failure;
  int backoff_ms = config_.backoff_initial_ms;
  for (int attempt = 0; attempt < config_.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(backoff_ms));
      backoff_ms *= 2;
    }
    auto response = client.Post(config_.path, headers, body.dump(), "application/json");
    if (!response) {
      failure = "no response from " + config_.base_url;
      continue;
    }
    if (response->status != 200) {
      failure = "status " + std::to_string(response->status) + " from " + config_.base_url;
      continue;
    }
    json reply;
    try {
      reply = json::parse(response->body);
    } catch (const json::parse_error& error) {
      failure = std::string("non-JSON completion body: ") + error.what();
      continue;
    }
    std::string content;
    try {
      content = reply.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& error) {
      failure = std::string("unexpected completion shape: ") + error.what();
      continue;
    }
    const policy::ReActOutput output = policy::parse_react(content);
    return policy::ActResult{output.thought, output.action, 0.0};
  }
  throw TransportError("chat completion failed after " + std::to_string(config_.max_retries) +
                       " attempts: " + failure);
}

}  // namespace evolgym::remote
