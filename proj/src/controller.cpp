#include "evolgym/controller.hpp"

#include <algorithm>
#include <atomic>
#include <thread>

#include <json.hpp>

#include "evolgym/envs.hpp"
#include "evolgym/remote.hpp"
#include "evolgym/util.hpp"

namespace evolgym::controller {

using nlohmann::json;

TransportFactory inprocess_factory(protocol::SessionManager& sessions) {
  return [&sessions] { return std::make_unique<transport::InProcessTransport>(sessions); };
}

TransportFactory http_factory(std::string base_url) {
  return [base_url] { return std::make_unique<transport::HttpTransport>(base_url); };
}

namespace {

/// Fans one env-name-routed call out to per-env HTTP transports.
class RoutingTransport final : public transport::EnvTransport {
 public:
  explicit RoutingTransport(const std::map<std::string, std::string>& env_urls) {
    for (const auto& [env_name, url] : env_urls) {
      transports_[env_name] = std::make_unique<transport::HttpTransport>(url);
    }
  }

  protocol::CreateResult create(const std::string& env_name,
                                std::optional<std::string> instruction_id,
                                std::optional<std::uint64_t> seed) override {
    auto result = route(env_name).create(env_name, std::move(instruction_id), seed);
    sessions_owner_[result.session_id] = env_name;
    return result;
  }
  protocol::StepResult step(const std::string& session_id, const std::string& action) override {
    return by_session(session_id).step(session_id, action);
  }
  std::string observation(const std::string& session_id) override {
    return by_session(session_id).observation(session_id);
  }
  std::vector<std::string> available_actions(const std::string& session_id) override {
    return by_session(session_id).available_actions(session_id);
  }
  std::string reset(const std::string& session_id) override {
    return by_session(session_id).reset(session_id);
  }

 private:
  transport::EnvTransport& route(const std::string& env_name) {
    auto it = transports_.find(env_name);
    if (it == transports_.end()) {
      throw transport::TransportError("no service configured for env: " + env_name);
    }
    return *it->second;
  }
  transport::EnvTransport& by_session(const std::string& session_id) {
    auto it = sessions_owner_.find(session_id);
    if (it == sessions_owner_.end()) {
      throw transport::TransportError("unknown session for routing: " + session_id);
    }
    return route(it->second);
  }

  std::map<std::string, std::unique_ptr<transport::EnvTransport>> transports_;
  std::map<std::string, std::string> sessions_owner_;
};

void run_parallel(std::size_t task_count, int concurrency,
                  const std::function<void(std::size_t, std::size_t)>& task) {
  const int workers = std::max(1, std::min<int>(concurrency, static_cast<int>(task_count)));
  if (workers == 1) {
    for (std::size_t i = 0; i < task_count; ++i) task(i, 0);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      while (true) {
        const std::size_t index = next.fetch_add(1);
        if (index >= task_count) break;
        task(index, static_cast<std::size_t>(w));
      }
    });
  }
  for (std::thread& worker : pool) worker.join();
}

std::vector<std::unique_ptr<transport::EnvTransport>> worker_transports(
    const TransportFactory& transports, std::size_t task_count, int concurrency) {
  const int workers = std::max(1, std::min<int>(concurrency, static_cast<int>(task_count)));
  std::vector<std::unique_ptr<transport::EnvTransport>> result;
  for (int w = 0; w < workers; ++w) result.push_back(transports());
  return result;
}

}  // namespace

TransportFactory http_multi_factory(std::map<std::string, std::string> env_urls) {
  return [env_urls] { return std::make_unique<RoutingTransport>(env_urls); };
}

core::Trajectory rollout(policy::Policy& agent, const core::Instruction& instruction,
                         transport::EnvTransport& transport, const RolloutConfig& config,
                         int sample_index) {
  auto rng = util::make_rng(util::mix(util::mix(util::mix(config.seed, instruction.env_name),
                                                instruction.instruction_id),
                                      static_cast<std::uint64_t>(sample_index)));

  core::Trajectory trajectory;
  trajectory.env_name = instruction.env_name;
  trajectory.instruction_id = instruction.instruction_id;

  protocol::CreateResult session;
  try {
    session = transport.create(instruction.env_name, instruction.instruction_id, std::nullopt);
  } catch (const protocol::ProtocolError& error) {
    if (error.code() != "unknown_instruction") throw RolloutError(error.what());
    // Service without the instruction set loaded: the seed rebuilds the
    // identical instance.
    session = transport.create(instruction.env_name, std::nullopt, instruction.seed);
  } catch (const transport::TransportError& error) {
    throw RolloutError(error.what());
  }
  if (!instruction.text.empty() && session.observation != instruction.text) {
    throw RolloutError("service rendered a different instance for " + instruction.instruction_id +
                       " (difficulty mismatch?)");
  }

  policy::PolicyContext context;
  context.system_prompt = session.system_prompt;
  context.instruction = session.observation;
  context.current_observation = session.observation;
  context.available_actions =
      policy::resolve_action_space(instruction.env_name, session.observation);

  const int env_max_rounds = envs::builtin_descriptor(instruction.env_name).max_rounds;
  const int round_cap = config.max_rounds_override.value_or(env_max_rounds);

  double final_reward = 0.0;
  bool env_done = false;
  while (!env_done && static_cast<int>(trajectory.steps.size()) < round_cap) {
    policy::ActResult decision;
    try {
      decision = agent.act(instruction, context, config.temperature, rng);
    } catch (const policy::ReactParseError& error) {
      core::Step failed;
      failed.action = std::string("<unparseable> ") + error.what();
      trajectory.steps.push_back(std::move(failed));
      trajectory.reward = 0.0;
      trajectory.done_reason = core::DoneReason::kParseError;
      return trajectory;
    } catch (const remote::TransportError& error) {
      throw RolloutError(error.what());
    }

    protocol::StepResult outcome;
    try {
      outcome = transport.step(session.session_id, decision.action);
    } catch (const transport::TransportError& error) {
      throw RolloutError(error.what());
    } catch (const protocol::ProtocolError& error) {
      throw RolloutError(error.what());
    }

    trajectory.steps.push_back(core::Step{decision.thought, decision.action, outcome.observation});
    context.history.push_back(trajectory.steps.back());
    context.current_observation = outcome.observation;
    env_done = outcome.done;
    final_reward = outcome.trajectory_reward_so_far;
  }

  trajectory.reward = final_reward;
  if (core::binarize_reward(final_reward) == 1) {
    trajectory.done_reason = core::DoneReason::kSuccess;
  } else if (static_cast<int>(trajectory.steps.size()) >= env_max_rounds) {
    trajectory.done_reason = core::DoneReason::kMaxRounds;
  } else {
    trajectory.done_reason = core::DoneReason::kFailure;
  }
  return trajectory;
}

ExploreResult explore(policy::Policy& agent, const std::vector<const core::Instruction*>& pool,
                      const TransportFactory& transports, const RolloutConfig& config,
                      int iteration, const std::string& label) {
  const int k = std::max(1, config.samples_per_instruction);
  const std::size_t task_count = pool.size() * static_cast<std::size_t>(k);
  std::vector<std::optional<core::Trajectory>> slots(task_count);
  std::vector<bool> failed(task_count, false);

  auto per_worker = worker_transports(transports, task_count, config.concurrency);
  run_parallel(task_count, config.concurrency, [&](std::size_t index, std::size_t worker) {
    const core::Instruction& instruction = *pool[index / k];
    const int sample = static_cast<int>(index % k);
    try {
      core::Trajectory trajectory = rollout(agent, instruction, *per_worker[worker], config, sample);
      trajectory.reward = core::binarize_reward(trajectory.reward);
      trajectory.provenance = core::Provenance::Sampled(iteration);
      slots[index] = std::move(trajectory);
    } catch (const RolloutError&) {
      failed[index] = true;
    }
  });

  ExploreResult result;
  result.dataset.label = label;
  for (std::size_t index = 0; index < task_count; ++index) {
    const core::Instruction& instruction = *pool[index / k];
    result.attempts_per_env[instruction.env_name] += 1;
    if (failed[index] || !slots[index]) {
      result.transport_failures += 1;
      continue;
    }
    if (slots[index]->reward == 1.0) result.successes_per_env[instruction.env_name] += 1;
    result.dataset.records.push_back(std::move(*slots[index]));
  }
  return result;
}

EvalReport evaluate(policy::Policy& agent, const std::vector<const core::Instruction*>& eval_split,
                    const TransportFactory& transports, const RolloutConfig& config) {
  RolloutConfig greedy = config;
  greedy.temperature = 0.0;
  greedy.samples_per_instruction = 1;

  std::vector<std::optional<core::Trajectory>> slots(eval_split.size());
  auto per_worker = worker_transports(transports, eval_split.size(), config.concurrency);
  run_parallel(eval_split.size(), config.concurrency, [&](std::size_t index, std::size_t worker) {
    try {
      slots[index] = rollout(agent, *eval_split[index], *per_worker[worker], greedy, 0);
    } catch (const RolloutError&) {
    }
  });

  EvalReport report;
  std::map<std::string, std::vector<const core::Trajectory*>> grouped;
  for (std::size_t index = 0; index < slots.size(); ++index) {
    if (!slots[index]) {
      report.transport_failures += 1;
      continue;
    }
    grouped[eval_split[index]->env_name].push_back(&*slots[index]);
  }

  double all_success = 0.0, all_reward = 0.0, all_rounds = 0.0;
  int all_n = 0;
  for (const auto& [env_name, trajectories] : grouped) {
    EnvStats stats;
    stats.n = static_cast<int>(trajectories.size());
    for (const core::Trajectory* trajectory : trajectories) {
      const int success = core::binarize_reward(trajectory->reward);
      stats.success_rate += success;
      stats.mean_reward += trajectory->reward;
      stats.mean_rounds += static_cast<double>(trajectory->steps.size());
    }
    all_success += stats.success_rate;
    all_reward += stats.mean_reward;
    all_rounds += stats.mean_rounds;
    all_n += stats.n;
    if (stats.n > 0) {
      stats.success_rate /= stats.n;
      stats.mean_reward /= stats.n;
      stats.mean_rounds /= stats.n;
    }
    report.per_env[env_name] = stats;
  }
  report.overall.n = all_n;
  if (all_n > 0) {
    report.overall.success_rate = all_success / all_n;
    report.overall.mean_reward = all_reward / all_n;
    report.overall.mean_rounds = all_rounds / all_n;
  }
  return report;
}

CollectResult collect_expert(policy::Policy& source,
                             const std::vector<const core::Instruction*>& instructions,
                             const TransportFactory& transports, const RolloutConfig& config) {
  RolloutConfig greedy = config;
  greedy.temperature = 0.0;

  std::vector<std::optional<core::Trajectory>> slots(instructions.size());
  auto per_worker = worker_transports(transports, instructions.size(), config.concurrency);
  run_parallel(instructions.size(), config.concurrency, [&](std::size_t index, std::size_t worker) {
    try {
      slots[index] = rollout(source, *instructions[index], *per_worker[worker], greedy, 0);
    } catch (const RolloutError&) {
    }
  });

  CollectResult result;
  result.dataset.label = "D_s";
  result.attempted = static_cast<int>(instructions.size());
  std::map<std::string, double> rounds_sum;
  for (std::size_t index = 0; index < slots.size(); ++index) {
    if (!slots[index]) {
      result.transport_failures += 1;
      continue;
    }
    core::Trajectory trajectory = std::move(*slots[index]);
    if (core::binarize_reward(trajectory.reward) != 1) continue;  // quality filter
    trajectory.reward = 1.0;
    trajectory.provenance = core::Provenance::Expert();
    result.kept_per_env[trajectory.env_name] += 1;
    rounds_sum[trajectory.env_name] += static_cast<double>(trajectory.steps.size());
    result.dataset.records.push_back(std::move(trajectory));
  }
  for (const auto& [env_name, kept] : result.kept_per_env) {
    result.mean_rounds_per_env[env_name] = rounds_sum[env_name] / kept;
  }
  return result;
}

bool replay_matches(const core::Trajectory& trajectory, transport::EnvTransport& transport) {
  try {
    const protocol::CreateResult session =
        transport.create(trajectory.env_name, trajectory.instruction_id, std::nullopt);
    double final_reward = 0.0;
    for (std::size_t t = 0; t < trajectory.steps.size(); ++t) {
      const protocol::StepResult outcome =
          transport.step(session.session_id, trajectory.steps[t].action);
      if (outcome.observation != trajectory.steps[t].observation) return false;
      final_reward = outcome.trajectory_reward_so_far;
      const bool is_last = t + 1 == trajectory.steps.size();
      if (outcome.done != is_last) return false;
    }
    return final_reward == trajectory.reward;
  } catch (const std::exception&) {
    return false;
  }
}

std::string EvalReport::to_json() const {
  json per_env_json = json::object();
  auto stats_json = [](const EnvStats& stats) {
    return json{{"success_rate", stats.success_rate},
                {"mean_reward", stats.mean_reward},
                {"mean_rounds", stats.mean_rounds},
                {"n", stats.n}};
  };
  for (const auto& [env_name, stats] : per_env) per_env_json[env_name] = stats_json(stats);
  return json{{"per_env", per_env_json},
              {"overall", stats_json(overall)},
              {"transport_failures", transport_failures}}
      .dump(2);
}

EvalReport EvalReport::from_json(const std::string& text) {
  const json body = json::parse(text);
  EvalReport report;
  auto parse_stats = [](const json& value) {
    EnvStats stats;
    stats.success_rate = value.at("success_rate").get<double>();
    stats.mean_reward = value.at("mean_reward").get<double>();
    stats.mean_rounds = value.at("mean_rounds").get<double>();
    stats.n = value.at("n").get<int>();
    return stats;
  };
  for (const auto& [env_name, value] : body.at("per_env").items()) {
    report.per_env[env_name] = parse_stats(value);
  }
  report.overall = parse_stats(body.at("overall"));
  report.transport_failures = body.value("transport_failures", 0);
  return report;
}

std::string EvalReport::render_table() const {
  std::string header = "env";
  std::string success = "success";
  std::string rounds = "rounds";
  std::string counts = "n";
  auto cell = [](double value) {
    char buffer[32];
    std::snprintf(buffer, sizeof(buffer), "%.2f", value);
    return std::string(buffer);
  };
  for (const auto& [env_name, stats] : per_env) {
    header += "\t" + env_name;
    success += "\t" + cell(100.0 * stats.success_rate);
    rounds += "\t" + cell(stats.mean_rounds);
    counts += "\t" + std::to_string(stats.n);
  }
  header += "\toverall";
  success += "\t" + cell(100.0 * overall.success_rate);
  rounds += "\t" + cell(overall.mean_rounds);
  counts += "\t" + std::to_string(overall.n);
  return header + "\n" + success + "\n" + rounds + "\n" + counts + "\n";
}

}  // namespace evolgym::controller
