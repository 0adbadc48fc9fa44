#include "evolgym/transport.hpp"

#include <httplib.h>
#include <json.hpp>

namespace evolgym::transport {

using nlohmann::json;

struct HttpTransport::Impl {
  explicit Impl(const std::string& base_url) : client(base_url) {
    client.set_connection_timeout(10);
    client.set_read_timeout(60);
    client.set_keep_alive(true);
  }
  httplib::Client client;
};

HttpTransport::HttpTransport(std::string base_url) : impl_(std::make_unique<Impl>(base_url)) {}
HttpTransport::~HttpTransport() = default;

namespace {

json decode(const httplib::Result& result, const std::string& what) {
  if (!result) {
    throw TransportError("no response for " + what);
  }
  json body;
  try {
    body = json::parse(result->body);
  } catch (const json::parse_error& error) {
    throw TransportError("non-JSON response for " + what + ": " + error.what());
  }
  if (result->status != 200) {
    std::string code = "error";
    std::string message = "request failed";
    if (body.contains("error")) {
      code = body["error"].value("code", code);
      message = body["error"].value("message", message);
    }
    throw protocol::ProtocolError(result->status, code, message);
  }
  return body;
}

}  // namespace

protocol::CreateResult HttpTransport::create(const std::string& env_name,
                                             std::optional<std::string> instruction_id,
                                             std::optional<std::uint64_t> seed) {
  json request = {{"env", env_name}, {"instruction_id", nullptr}, {"seed", nullptr}};
  if (instruction_id) request["instruction_id"] = *instruction_id;
  if (seed) request["seed"] = *seed;
  const json body =
      decode(impl_->client.Post("/createEnv", request.dump(), "application/json"), "createEnv");
  return protocol::CreateResult{body.at("session_id").get<std::string>(),
                                body.at("system_prompt").get<std::string>(),
                                body.at("observation").get<std::string>()};
}

protocol::StepResult HttpTransport::step(const std::string& session_id,
                                         const std::string& action) {
  const json request = {{"session_id", session_id}, {"action", action}};
  const json body = decode(impl_->client.Post("/step", request.dump(), "application/json"), "step");
  protocol::StepResult result;
  result.observation = body.at("observation").get<std::string>();
  result.step_reward = body.at("step_reward").get<double>();
  result.trajectory_reward_so_far = body.at("reward").get<double>();
  result.done = body.at("done").get<bool>();
  result.available_actions = body.at("available_actions").get<std::vector<std::string>>();
  return result;
}

std::string HttpTransport::observation(const std::string& session_id) {
  const json body = decode(
      impl_->client.Get("/observation?session_id=" + httplib::detail::encode_url(session_id)),
      "observation");
  return body.at("observation").get<std::string>();
}

std::vector<std::string> HttpTransport::available_actions(const std::string& session_id) {
  const json body = decode(
      impl_->client.Get("/available_actions?session_id=" + httplib::detail::encode_url(session_id)),
      "available_actions");
  return body.at("actions").get<std::vector<std::string>>();
}

std::string HttpTransport::reset(const std::string& session_id) {
  const json request = {{"session_id", session_id}};
  const json body =
      decode(impl_->client.Post("/reset", request.dump(), "application/json"), "reset");
  return body.at("observation").get<std::string>();
}

}  // namespace evolgym::transport
