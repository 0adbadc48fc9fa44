#pragma once

#include <optional>
#include <string>
#include <vector>

#include "evolgym/remote.hpp"

namespace evolgym::config {

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& message) : std::runtime_error(message) {}
};

struct EnvConfig {
  std::string name;
  int port = 0;
  int difficulty = 0;  // 0: use the env default
  int bc_count = 0;
  int evolve_count = 0;
  int eval_count = 0;
};

struct PolicyConfig {
  std::string kind = "log_linear";  // log_linear | remote | oracle
  std::string snapshot;             // optional snapshot path
  remote::EndpointConfig endpoint;  // for kind == remote
};

struct RolloutSection {
  int samples_per_instruction = 1;
  double temperature = 0.7;
  int concurrency = 8;
  std::uint64_t seed = 0;
  std::string transport = "inprocess";  // inprocess | http
};

struct TrainingSection {
  int iterations = 4;
  double learning_rate = 0.5;
  int epochs = 3;
  std::string merge_strategy = "with_initial";
  std::string restart_from = "base";
};

struct PathsSection {
  std::string instructions;
  std::string datasets;
  std::string run_dir;
  std::string assets;  // empty: default asset directory
};

struct RunConfig {
  std::vector<EnvConfig> environments;
  PolicyConfig policy;
  RolloutSection rollout;
  TrainingSection training;
  PathsSection paths;
};

/// Parses the run configuration; unknown keys anywhere are rejected.
RunConfig parse_config(const std::string& json_text);
RunConfig load_config(const std::string& path);

}  // namespace evolgym::config
