#include "evolgym/server.hpp"

#include <cstdlib>

#include <httplib.h>
#include <json.hpp>

namespace evolgym::server {

using nlohmann::json;
using protocol::ProtocolError;

std::string bind_address() {
  if (const char* bind = std::getenv("EVOLGYM_BIND"); bind != nullptr && *bind != '\0') {
    return bind;
  }
  return "127.0.0.1";
}

struct EnvService::Impl {
  httplib::Server server;
};

namespace {

void write_error(httplib::Response& response, int status, const std::string& code,
                 const std::string& message) {
  response.status = status;
  response.set_content(json{{"error", {{"code", code}, {"message", message}}}}.dump(),
                       "application/json");
}

void write_ok(httplib::Response& response, const json& body) {
  response.status = 200;
  response.set_content(body.dump(), "application/json");
}

/// Runs a handler and maps ProtocolError / bad JSON onto the wire error shape.
template <typename Handler>
void guarded(const httplib::Request& request, httplib::Response& response, Handler&& handler) {
  try {
    handler();
  } catch (const ProtocolError& error) {
    write_error(response, error.http_status(), error.code(), error.what());
  } catch (const json::exception& error) {
    write_error(response, 400, "bad_request", error.what());
  } catch (const std::exception& error) {
    write_error(response, 500, "internal", error.what());
  }
}

std::string require_query_session(const httplib::Request& request) {
  if (!request.has_param("session_id")) {
    throw ProtocolError(400, "bad_request", "missing session_id parameter");
  }
  return request.get_param_value("session_id");
}

}  // namespace

EnvService::EnvService(const protocol::EnvRegistry& registry, std::string host, int port,
                       std::chrono::milliseconds idle_timeout)
    : impl_(std::make_unique<Impl>()),
      sessions_(std::make_unique<protocol::SessionManager>(registry, idle_timeout)),
      host_(std::move(host)),
      port_(port) {
  auto& server = impl_->server;

  server.Post("/createEnv", [this](const httplib::Request& request, httplib::Response& response) {
    guarded(request, response, [&] {
      const json body = json::parse(request.body);
      const std::string env = body.at("env").get<std::string>();
      std::optional<std::string> instruction_id;
      if (body.contains("instruction_id") && !body.at("instruction_id").is_null()) {
        instruction_id = body.at("instruction_id").get<std::string>();
      }
      std::optional<std::uint64_t> seed;
      if (body.contains("seed") && !body.at("seed").is_null()) {
        seed = body.at("seed").get<std::uint64_t>();
      }
      const protocol::CreateResult result = sessions_->create(env, instruction_id, seed);
      write_ok(response, json{{"session_id", result.session_id},
                              {"system_prompt", result.system_prompt},
                              {"observation", result.observation}});
    });
  });

  server.Post("/step", [this](const httplib::Request& request, httplib::Response& response) {
    guarded(request, response, [&] {
      const json body = json::parse(request.body);
      const protocol::StepResult result = sessions_->step(body.at("session_id").get<std::string>(),
                                                          body.at("action").get<std::string>());
      write_ok(response, json{{"observation", result.observation},
                              {"step_reward", result.step_reward},
                              {"reward", result.trajectory_reward_so_far},
                              {"done", result.done},
                              {"available_actions", result.available_actions}});
    });
  });

  server.Get("/observation", [this](const httplib::Request& request, httplib::Response& response) {
    guarded(request, response, [&] {
      write_ok(response, json{{"observation", sessions_->observation(require_query_session(request))}});
    });
  });

  server.Get("/available_actions",
             [this](const httplib::Request& request, httplib::Response& response) {
               guarded(request, response, [&] {
                 write_ok(response,
                          json{{"actions", sessions_->available_actions(require_query_session(request))}});
               });
             });

  server.Post("/reset", [this](const httplib::Request& request, httplib::Response& response) {
    guarded(request, response, [&] {
      const json body = json::parse(request.body);
      write_ok(response, json{{"observation", sessions_->reset(body.at("session_id").get<std::string>())}});
    });
  });
}

EnvService::~EnvService() { stop(); }

namespace {

/// SO_REUSEPORT lets a second process bind an occupied port silently; an
/// explicit connect probe catches the active listener instead.
bool port_in_use(const std::string& host, int port) {
  const int sock = ::socket(AF_INET, SOCK_STREAM, 0);
  if (sock < 0) return false;
  sockaddr_in address{};
  address.sin_family = AF_INET;
  address.sin_port = htons(static_cast<uint16_t>(port));
  if (::inet_pton(AF_INET, host.c_str(), &address.sin_addr) != 1) {
    ::close(sock);
    return false;
  }
  const bool connected =
      ::connect(sock, reinterpret_cast<sockaddr*>(&address), sizeof(address)) == 0;
  ::close(sock);
  return connected;
}

}  // namespace

bool EnvService::start() {
  auto& server = impl_->server;
  if (port_ == 0) {
    const int bound = server.bind_to_any_port(host_);
    if (bound < 0) return false;
    port_ = bound;
  } else if (port_in_use(host_, port_) || !server.bind_to_port(host_, port_)) {
    return false;
  }
  listener_ = std::thread([this] { impl_->server.listen_after_bind(); });
  server.wait_until_ready();
  return true;
}

void EnvService::stop() {
  if (listener_.joinable()) {
    impl_->server.stop();
    listener_.join();
  }
}

std::string EnvService::url() const {
  return "http://" + host_ + ":" + std::to_string(port_);
}

}  // namespace evolgym::server
