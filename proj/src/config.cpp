#include "evolgym/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace evolgym::config {

using nlohmann::json;

namespace {

void check_keys(const json& object, const std::string& where,
                const std::set<std::string>& allowed) {
  for (const auto& [key, value] : object.items()) {
    if (allowed.count(key) == 0) {
      throw ConfigError("unknown key in " + where + ": " + key);
    }
  }
}

template <typename T>
T get_or(const json& object, const char* key, T fallback) {
  if (!object.contains(key) || object.at(key).is_null()) return fallback;
  return object.at(key).get<T>();
}

}  // namespace

RunConfig parse_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& error) {
    throw ConfigError(std::string("config is not valid JSON: ") + error.what());
  }
  if (!root.is_object()) throw ConfigError("config root must be an object");
  check_keys(root, "config", {"environments", "policy", "rollout", "training", "paths"});

  RunConfig config;

  if (root.contains("environments")) {
    if (!root["environments"].is_array()) throw ConfigError("environments must be an array");
    for (const auto& entry : root["environments"]) {
      check_keys(entry, "environments[]", {"name", "port", "difficulty", "counts"});
      EnvConfig env;
      env.name = entry.at("name").get<std::string>();
      env.port = get_or<int>(entry, "port", 0);
      env.difficulty = get_or<int>(entry, "difficulty", 0);
      if (entry.contains("counts")) {
        const json& counts = entry["counts"];
        check_keys(counts, "environments[].counts", {"bc", "evolve", "eval"});
        env.bc_count = get_or<int>(counts, "bc", 0);
        env.evolve_count = get_or<int>(counts, "evolve", 0);
        env.eval_count = get_or<int>(counts, "eval", 0);
      }
      config.environments.push_back(std::move(env));
    }
  }

  if (root.contains("policy")) {
    const json& section = root["policy"];
    check_keys(section, "policy", {"kind", "snapshot", "endpoint"});
    config.policy.kind = get_or<std::string>(section, "kind", "log_linear");
    if (config.policy.kind != "log_linear" && config.policy.kind != "remote" &&
        config.policy.kind != "oracle") {
      throw ConfigError("policy.kind must be log_linear, remote, or oracle");
    }
    config.policy.snapshot = get_or<std::string>(section, "snapshot", "");
    if (section.contains("endpoint")) {
      const json& endpoint = section["endpoint"];
      check_keys(endpoint, "policy.endpoint",
                 {"base_url", "path", "model", "max_retries", "timeout_seconds"});
      config.policy.endpoint.base_url = get_or<std::string>(endpoint, "base_url", "");
      config.policy.endpoint.path =
          get_or<std::string>(endpoint, "path", config.policy.endpoint.path);
      config.policy.endpoint.model =
          get_or<std::string>(endpoint, "model", config.policy.endpoint.model);
      config.policy.endpoint.max_retries =
          get_or<int>(endpoint, "max_retries", config.policy.endpoint.max_retries);
      config.policy.endpoint.timeout_seconds =
          get_or<int>(endpoint, "timeout_seconds", config.policy.endpoint.timeout_seconds);
    }
  }

  if (root.contains("rollout")) {
    const json& section = root["rollout"];
    check_keys(section, "rollout", {"k", "temperature", "concurrency", "seed", "transport"});
    config.rollout.samples_per_instruction = get_or<int>(section, "k", 1);
    config.rollout.temperature = get_or<double>(section, "temperature", 0.7);
    config.rollout.concurrency = get_or<int>(section, "concurrency", 8);
    config.rollout.seed = get_or<std::uint64_t>(section, "seed", 0);
    config.rollout.transport = get_or<std::string>(section, "transport", "inprocess");
    if (config.rollout.transport != "inprocess" && config.rollout.transport != "http") {
      throw ConfigError("rollout.transport must be inprocess or http");
    }
    if (config.rollout.samples_per_instruction < 1) throw ConfigError("rollout.k must be >= 1");
    if (config.rollout.concurrency < 1) throw ConfigError("rollout.concurrency must be >= 1");
  }

  if (root.contains("training")) {
    const json& section = root["training"];
    check_keys(section, "training",
               {"iterations", "learning_rate", "epochs", "merge_strategy", "restart_from"});
    config.training.iterations = get_or<int>(section, "iterations", 4);
    config.training.learning_rate = get_or<double>(section, "learning_rate", 0.5);
    config.training.epochs = get_or<int>(section, "epochs", 3);
    config.training.merge_strategy =
        get_or<std::string>(section, "merge_strategy", "with_initial");
    config.training.restart_from = get_or<std::string>(section, "restart_from", "base");
    if (config.training.iterations < 1) throw ConfigError("training.iterations must be >= 1");
    if (config.training.learning_rate <= 0.0) {
      throw ConfigError("training.learning_rate must be > 0");
    }
    if (config.training.epochs < 1) throw ConfigError("training.epochs must be >= 1");
    if (config.training.merge_strategy != "with_initial" &&
        config.training.merge_strategy != "with_previous") {
      throw ConfigError("training.merge_strategy must be with_initial or with_previous");
    }
    if (config.training.restart_from != "base" && config.training.restart_from != "previous") {
      throw ConfigError("training.restart_from must be base or previous");
    }
  }

  if (root.contains("paths")) {
    const json& section = root["paths"];
    check_keys(section, "paths", {"instructions", "datasets", "run_dir", "assets"});
    config.paths.instructions = get_or<std::string>(section, "instructions", "");
    config.paths.datasets = get_or<std::string>(section, "datasets", "");
    config.paths.run_dir = get_or<std::string>(section, "run_dir", "");
    config.paths.assets = get_or<std::string>(section, "assets", "");
  }

  return config;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str());
}

}  // namespace evolgym::config
