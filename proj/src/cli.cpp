#include "evolgym/cli.hpp"

#include <atomic>
#include <chrono>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include <json.hpp>

#include "evolgym/controller.hpp"
#include "evolgym/envs.hpp"
#include "evolgym/evol.hpp"
#include "evolgym/oracle.hpp"
#include "evolgym/server.hpp"
#include "evolgym/util.hpp"

namespace evolgym::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::atomic<bool> g_interrupted{false};

void handle_signal(int) { g_interrupted.store(true); }

struct LoadedConfig {
  config::RunConfig run;
  std::map<std::string, int> difficulties;
  envs::Assets assets;
};

LoadedConfig load(const CommonOptions& options) {
  if (options.config_path.empty()) {
    throw config::ConfigError("--config is required");
  }
  LoadedConfig loaded;
  loaded.run = config::load_config(options.config_path);
  if (options.seed) loaded.run.rollout.seed = *options.seed;
  if (loaded.run.environments.empty()) {
    throw config::ConfigError("config lists no environments");
  }
  for (const auto& env : loaded.run.environments) {
    loaded.difficulties[env.name] =
        env.difficulty > 0 ? env.difficulty : envs::default_difficulty(env.name);
  }
  const std::string assets_dir =
      loaded.run.paths.assets.empty() ? envs::default_assets_dir() : loaded.run.paths.assets;
  loaded.assets = envs::load_assets(assets_dir);
  return loaded;
}

std::string instructions_file(const config::RunConfig& run, const std::string& env_name) {
  return run.paths.instructions + "/" + env_name + ".jsonl";
}

core::InstructionSet load_all_instructions(const config::RunConfig& run) {
  std::vector<std::string> paths;
  for (const auto& env : run.environments) {
    const std::string path = instructions_file(run, env.name);
    if (!fs::exists(path)) {
      throw config::ConfigError("missing instruction file (run gen-instructions first): " + path);
    }
    paths.push_back(path);
  }
  return core::load_instruction_sets(paths);
}

/// In-process transport state: registry + sessions owned for the command's
/// lifetime. For HTTP the factory talks to already-running services.
struct ActiveTransport {
  std::unique_ptr<protocol::EnvRegistry> registry;
  std::unique_ptr<protocol::SessionManager> sessions;
  controller::TransportFactory factory;
};

ActiveTransport make_transport(const LoadedConfig& loaded, const core::InstructionSet& instructions) {
  ActiveTransport active;
  if (loaded.run.rollout.transport == "inprocess") {
    active.registry = std::make_unique<protocol::EnvRegistry>();
    envs::register_builtin(*active.registry, loaded.assets, loaded.difficulties);
    active.registry->add_instructions(instructions);
    active.sessions = std::make_unique<protocol::SessionManager>(*active.registry);
    active.factory = controller::inprocess_factory(*active.sessions);
  } else {
    std::map<std::string, std::string> urls;
    for (const auto& env : loaded.run.environments) {
      urls[env.name] = "http://" + server::bind_address() + ":" + std::to_string(env.port);
    }
    active.factory = controller::http_multi_factory(std::move(urls));
  }
  return active;
}

controller::RolloutConfig rollout_config(const config::RunConfig& run) {
  controller::RolloutConfig config;
  config.temperature = run.rollout.temperature;
  config.samples_per_instruction = run.rollout.samples_per_instruction;
  config.concurrency = run.rollout.concurrency;
  config.seed = run.rollout.seed;
  return config;
}

evol::TrainConfig train_config(const config::RunConfig& run) {
  evol::TrainConfig config;
  config.iterations = run.training.iterations;
  config.samples_per_instruction = run.rollout.samples_per_instruction;
  config.merge_strategy = core::merge_strategy_from_string(run.training.merge_strategy);
  config.learning_rate = run.training.learning_rate;
  config.epochs = run.training.epochs;
  config.exploration_temperature = run.rollout.temperature;
  config.restart_from = run.training.restart_from == "previous" ? evol::RestartFrom::kPrevious
                                                                : evol::RestartFrom::kBase;
  return config;
}

std::unique_ptr<policy::Policy> make_source_policy(const LoadedConfig& loaded) {
  const auto& cfg = loaded.run.policy;
  if (cfg.kind == "oracle") return oracle::make_multi_oracle(loaded.difficulties);
  if (cfg.kind == "remote") {
    if (cfg.endpoint.base_url.empty()) {
      throw config::ConfigError("policy.endpoint.base_url required for remote policy");
    }
    return std::make_unique<remote::RemotePolicy>(cfg.endpoint);
  }
  if (cfg.snapshot.empty()) {
    throw config::ConfigError("policy.snapshot required for log_linear collection");
  }
  return std::make_unique<policy::LogLinearPolicy>(policy::LogLinearPolicy::load(cfg.snapshot));
}

void write_text(const std::string& path, const std::string& content) {
  fs::create_directories(fs::path(path).parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw core::DomainError("cannot write file: " + path);
  out << content;
}

json eval_to_json(const controller::EvalReport& report) { return json::parse(report.to_json()); }

json manifest_json(const config::RunConfig& run, const evol::EvolRun& evolution) {
  json iterations = json::array();
  for (const auto& record : evolution.iterations) {
    json entry = {{"m", record.iteration},
                  {"explored", record.explored},
                  {"merged", record.merged_size},
                  {"expert", record.expert_size},
                  {"successes_per_env", record.successes_per_env},
                  {"attempts_per_env", record.attempts_per_env},
                  {"train_split_success_rate", record.train_split_success_rate},
                  {"eval", eval_to_json(record.eval)}};
    iterations.push_back(std::move(entry));
  }
  const json config_echo = {{"iterations", run.training.iterations},
                            {"k", run.rollout.samples_per_instruction},
                            {"merge_strategy", run.training.merge_strategy},
                            {"restart_from", run.training.restart_from},
                            {"learning_rate", run.training.learning_rate},
                            {"epochs", run.training.epochs},
                            {"temperature", run.rollout.temperature},
                            {"seed", run.rollout.seed}};
  return json{{"config", config_echo}, {"iterations", iterations}};
}

int guard(const std::function<void()>& body) {
  try {
    body();
    return 0;
  } catch (const config::ConfigError& error) {
    std::cerr << "error: " << error.what() << "\n";
    return 1;
  } catch (const core::ParseError& error) {
    std::cerr << "error: " << error.what() << "\n";
    return 1;
  } catch (const core::DomainError& error) {
    std::cerr << "error: " << error.what() << "\n";
    return 1;
  } catch (const evol::DatasetError& error) {
    std::cerr << "error: " << error.what() << "\n";
    return 1;
  } catch (const std::exception& error) {
    std::cerr << "internal error: " << error.what() << "\n";
    return 2;
  }
}

}  // namespace

int run_serve(const CommonOptions& options) {
  return guard([&] {
    const LoadedConfig loaded = load(options);

    core::InstructionSet instructions;
    for (const auto& env : loaded.run.environments) {
      const std::string path = instructions_file(loaded.run, env.name);
      if (fs::exists(path)) {
        const core::InstructionSet set = core::load_instruction_set(path);
        instructions.instructions.insert(instructions.instructions.end(),
                                         set.instructions.begin(), set.instructions.end());
      }
    }

    // One service per port; envs sharing a port share one registry.
    std::map<int, std::vector<const config::EnvConfig*>> by_port;
    for (const auto& env : loaded.run.environments) by_port[env.port].push_back(&env);

    std::vector<std::unique_ptr<protocol::EnvRegistry>> registries;
    std::vector<std::unique_ptr<server::EnvService>> services;
    const std::string host = server::bind_address();
    for (const auto& [port, envs_on_port] : by_port) {
      auto registry = std::make_unique<protocol::EnvRegistry>();
      std::map<std::string, int> difficulties;
      for (const config::EnvConfig* env : envs_on_port) {
        difficulties[env->name] = loaded.difficulties.at(env->name);
      }
      envs::register_builtin(*registry, loaded.assets, difficulties);
      // register_builtin registers all three; restrict instructions to the
      // envs actually served here.
      core::InstructionSet subset;
      for (const auto& instruction : instructions.instructions) {
        for (const config::EnvConfig* env : envs_on_port) {
          if (instruction.env_name == env->name) subset.instructions.push_back(instruction);
        }
      }
      registry->add_instructions(subset);
      auto service = std::make_unique<server::EnvService>(*registry, host, port);
      if (!service->start()) {
        for (auto& running : services) running->stop();
        throw config::ConfigError("cannot bind port " + std::to_string(port));
      }
      registries.push_back(std::move(registry));
      services.push_back(std::move(service));
      for (const config::EnvConfig* env : envs_on_port) {
        std::cout << "READY " << env->name << " " << services.back()->url() << std::endl;
      }
    }

    std::signal(SIGINT, handle_signal);
    std::signal(SIGTERM, handle_signal);
    while (!g_interrupted.load()) {
      std::this_thread::sleep_for(std::chrono::milliseconds(100));
    }
    for (auto& service : services) service->stop();
    std::cout << "SHUTDOWN" << std::endl;
  });
}

int run_gen_instructions(const CommonOptions& options) {
  return guard([&] {
    LoadedConfig loaded = load(options);
    if (options.out) loaded.run.paths.instructions = *options.out;
    if (loaded.run.paths.instructions.empty()) {
      throw config::ConfigError("paths.instructions is required");
    }
    fs::create_directories(loaded.run.paths.instructions);

    for (const auto& env : loaded.run.environments) {
      core::InstructionSet set;
      const int total = env.bc_count + env.evolve_count + env.eval_count;
      if (total <= 0) {
        throw config::ConfigError("environment " + env.name + " has no instance counts");
      }
      for (int index = 0; index < total; ++index) {
        const std::uint64_t seed =
            util::mix(util::mix(loaded.run.rollout.seed, env.name), static_cast<std::uint64_t>(index));
        auto [instruction, world] =
            envs::generate_instance(env.name, seed, loaded.difficulties.at(env.name), loaded.assets);
        char id[64];
        std::snprintf(id, sizeof(id), "%s-%05d", env.name.c_str(), index);
        instruction.instruction_id = id;
        instruction.split = index < env.bc_count ? core::Split::kBc
                            : index < env.bc_count + env.evolve_count ? core::Split::kEvolve
                                                                      : core::Split::kEval;
        set.instructions.push_back(std::move(instruction));
      }
      set.validate();
      const std::string path = instructions_file(loaded.run, env.name);
      core::save_instruction_set(path, set);
      std::cout << "WROTE " << path << " total " << total << " (bc " << env.bc_count << ", evolve "
                << env.evolve_count << ", eval " << env.eval_count << ")\n";
    }
  });
}

int run_collect(const CommonOptions& options) {
  return guard([&] {
    LoadedConfig loaded = load(options);
    if (options.out) loaded.run.paths.datasets = *options.out;
    if (loaded.run.paths.datasets.empty()) {
      throw config::ConfigError("paths.datasets is required");
    }
    if (loaded.run.policy.kind == "log_linear" && loaded.run.policy.snapshot.empty()) {
      loaded.run.policy.kind = "oracle";  // default expert source
    }
    const core::InstructionSet instructions = load_all_instructions(loaded.run);
    const ActiveTransport transport = make_transport(loaded, instructions);
    const std::unique_ptr<policy::Policy> source = make_source_policy(loaded);

    const auto bc_split = instructions.by_split(core::Split::kBc);
    if (bc_split.empty()) throw config::ConfigError("no bc-split instructions to collect from");
    const controller::CollectResult result =
        controller::collect_expert(*source, bc_split, transport.factory, rollout_config(loaded.run));

    fs::create_directories(loaded.run.paths.datasets);
    const std::string path = loaded.run.paths.datasets + "/expert.jsonl";
    core::save_trajectories(path, result.dataset.records);

    std::cout << "env\tkept\tattempted\tmean_rounds\n";
    for (const auto& [env_name, kept] : result.kept_per_env) {
      std::cout << env_name << "\t" << kept << "\t" << result.attempted << "\t"
                << result.mean_rounds_per_env.at(env_name) << "\n";
    }
    std::cout << "WROTE " << path << " records " << result.dataset.records.size() << "\n";
  });
}

int run_train_bc(const CommonOptions& options) {
  return guard([&] {
    LoadedConfig loaded = load(options);
    if (options.out) loaded.run.paths.run_dir = *options.out;
    if (loaded.run.paths.run_dir.empty()) throw config::ConfigError("paths.run_dir is required");

    const std::string dataset_path = loaded.run.paths.datasets + "/expert.jsonl";
    if (!fs::exists(dataset_path)) {
      throw config::ConfigError("missing expert dataset (run collect first): " + dataset_path);
    }
    core::TrajectoryDataset expert;
    expert.records = core::load_trajectories(dataset_path);
    expert.label = "D_s";
    const core::InstructionSet instructions = load_all_instructions(loaded.run);

    const policy::LogLinearPolicy start;
    const evol::TrainResult result =
        evol::bc_train(start, expert, instructions, train_config(loaded.run));

    fs::create_directories(loaded.run.paths.run_dir);
    const std::string snapshot_path = loaded.run.paths.run_dir + "/policy_base.json";
    result.policy.save(snapshot_path);
    const json manifest = {{"dataset", dataset_path},
                           {"records", expert.records.size()},
                           {"epoch_objectives", result.epoch_objectives},
                           {"learning_rate", loaded.run.training.learning_rate},
                           {"epochs", loaded.run.training.epochs}};
    write_text(loaded.run.paths.run_dir + "/bc_manifest.json", manifest.dump(2) + "\n");
    std::cout << "WROTE " << snapshot_path << "\n";
  });
}

int run_evolve(const CommonOptions& options) {
  return guard([&] {
    LoadedConfig loaded = load(options);
    if (options.out) loaded.run.paths.run_dir = *options.out;
    if (loaded.run.paths.run_dir.empty()) throw config::ConfigError("paths.run_dir is required");

    const std::string base_path = !loaded.run.policy.snapshot.empty()
                                      ? loaded.run.policy.snapshot
                                      : loaded.run.paths.run_dir + "/policy_base.json";
    if (!fs::exists(base_path)) {
      throw config::ConfigError("missing base policy snapshot (run train-bc first): " + base_path);
    }
    const std::string dataset_path = loaded.run.paths.datasets + "/expert.jsonl";
    if (!fs::exists(dataset_path)) {
      throw config::ConfigError("missing expert dataset (run collect first): " + dataset_path);
    }

    const policy::LogLinearPolicy base = policy::LogLinearPolicy::load(base_path);
    core::TrajectoryDataset expert;
    expert.records = core::load_trajectories(dataset_path);
    expert.label = "D_s";
    const core::InstructionSet instructions = load_all_instructions(loaded.run);
    const ActiveTransport transport = make_transport(loaded, instructions);

    std::vector<double> iteration_seconds;
    const auto started = std::chrono::steady_clock::now();
    auto last_mark = started;

    evol::TrainConfig tconfig = train_config(loaded.run);
    controller::RolloutConfig rconfig = rollout_config(loaded.run);

    const std::vector<const core::Instruction*> pool = instructions.evolve_pool();
    const std::vector<const core::Instruction*> eval_split =
        instructions.by_split(core::Split::kEval);
    evol::ExploreFn explore_fn = [&](policy::LogLinearPolicy& agent, int iteration) {
      controller::RolloutConfig exploration = rconfig;
      exploration.temperature = tconfig.exploration_temperature;
      exploration.samples_per_instruction = tconfig.samples_per_instruction;
      exploration.seed = util::mix(rconfig.seed, static_cast<std::uint64_t>(iteration));
      return controller::explore(agent, pool, transport.factory, exploration, iteration,
                                 "D_m@iter" + std::to_string(iteration));
    };
    evol::EvalFn eval_fn = [&](policy::LogLinearPolicy& agent) {
      auto report = controller::evaluate(agent, eval_split, transport.factory, rconfig);
      const auto now = std::chrono::steady_clock::now();
      iteration_seconds.push_back(std::chrono::duration<double>(now - last_mark).count());
      last_mark = now;
      return report;
    };

    const evol::EvolRun evolution =
        evol::agent_evol(base, expert, instructions, tconfig, explore_fn, eval_fn);

    fs::create_directories(loaded.run.paths.run_dir);
    for (std::size_t i = 0; i < evolution.snapshots.size(); ++i) {
      evolution.snapshots[i].save(loaded.run.paths.run_dir + "/policy_iter" +
                                  std::to_string(i + 1) + ".json");
      core::save_trajectories(
          loaded.run.paths.run_dir + "/d_m_iter" + std::to_string(i + 1) + ".jsonl",
          evolution.exploration_datasets[i].records);
    }
    evolution.final_policy.save(loaded.run.paths.run_dir + "/policy_final.json");
    write_text(loaded.run.paths.run_dir + "/manifest.json",
               manifest_json(loaded.run, evolution).dump(2) + "\n");

    json timing = {{"total_wall_seconds",
                    std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count()},
                   {"eval_marks_seconds", iteration_seconds}};
    write_text(loaded.run.paths.run_dir + "/timing.json", timing.dump(2) + "\n");

    for (const auto& record : evolution.iterations) {
      std::cout << "iter " << record.iteration << " explored " << record.explored << " merged "
                << record.merged_size << " eval_success " << record.eval.overall.success_rate
                << "\n";
    }
    std::cout << "WROTE " << loaded.run.paths.run_dir << "/manifest.json\n";
  });
}

int run_eval(const CommonOptions& options) {
  return guard([&] {
    LoadedConfig loaded = load(options);
    if (options.out) loaded.run.paths.run_dir = *options.out;
    if (loaded.run.paths.run_dir.empty()) throw config::ConfigError("paths.run_dir is required");

    std::string snapshot_path = loaded.run.policy.snapshot;
    if (snapshot_path.empty()) {
      const std::string final_path = loaded.run.paths.run_dir + "/policy_final.json";
      const std::string base_path = loaded.run.paths.run_dir + "/policy_base.json";
      snapshot_path = fs::exists(final_path) ? final_path : base_path;
    }
    if (!fs::exists(snapshot_path)) {
      throw config::ConfigError("missing policy snapshot: " + snapshot_path);
    }
    policy::LogLinearPolicy agent = policy::LogLinearPolicy::load(snapshot_path);
    const core::InstructionSet instructions = load_all_instructions(loaded.run);
    const ActiveTransport transport = make_transport(loaded, instructions);

    const auto eval_split = instructions.by_split(core::Split::kEval);
    if (eval_split.empty()) throw config::ConfigError("no eval-split instructions");
    const controller::EvalReport report =
        controller::evaluate(agent, eval_split, transport.factory, rollout_config(loaded.run));

    fs::create_directories(loaded.run.paths.run_dir);
    write_text(loaded.run.paths.run_dir + "/eval_report.json", report.to_json() + "\n");
    std::cout << report.render_table();
    std::cout << "WROTE " << loaded.run.paths.run_dir << "/eval_report.json\n";
  });
}

int run_report(const CommonOptions& options) {
  return guard([&] {
    LoadedConfig loaded = load(options);
    if (options.out) loaded.run.paths.run_dir = *options.out;
    const std::string manifest_path = loaded.run.paths.run_dir + "/manifest.json";
    if (!fs::exists(manifest_path)) {
      throw config::ConfigError("missing manifest (run evolve first): " + manifest_path);
    }
    std::ifstream in(manifest_path);
    json manifest;
    in >> manifest;

    std::vector<std::string> env_names;
    for (const auto& entry : manifest.at("iterations")) {
      for (const auto& [env_name, stats] : entry.at("eval").at("per_env").items()) {
        if (std::find(env_names.begin(), env_names.end(), env_name) == env_names.end()) {
          env_names.push_back(env_name);
        }
      }
    }
    std::sort(env_names.begin(), env_names.end());

    std::string csv = "iteration";
    for (const auto& env_name : env_names) csv += "," + env_name;
    csv += ",overall\n";
    auto cell = [](double value) {
      char buffer[32];
      std::snprintf(buffer, sizeof(buffer), "%.2f", 100.0 * value);
      return std::string(buffer);
    };
    for (const auto& entry : manifest.at("iterations")) {
      csv += std::to_string(entry.at("m").get<int>());
      for (const auto& env_name : env_names) {
        const auto& per_env = entry.at("eval").at("per_env");
        csv += "," + (per_env.contains(env_name)
                          ? cell(per_env.at(env_name).at("success_rate").get<double>())
                          : std::string("na"));
      }
      csv += "," + cell(entry.at("eval").at("overall").at("success_rate").get<double>()) + "\n";
    }

    std::string table = "iteration";
    for (const auto& env_name : env_names) table += "\t" + env_name;
    table += "\toverall\n";
    for (const auto& entry : manifest.at("iterations")) {
      table += std::to_string(entry.at("m").get<int>());
      for (const auto& env_name : env_names) {
        const auto& per_env = entry.at("eval").at("per_env");
        table += "\t" + (per_env.contains(env_name)
                             ? cell(per_env.at(env_name).at("success_rate").get<double>())
                             : std::string("na"));
      }
      table += "\t" + cell(entry.at("eval").at("overall").at("success_rate").get<double>()) + "\n";
    }

    write_text(loaded.run.paths.run_dir + "/report.csv", csv);
    write_text(loaded.run.paths.run_dir + "/report.txt", table);
    std::cout << table;
    std::cout << "WROTE " << loaded.run.paths.run_dir << "/report.csv\n";
  });
}

}  // namespace evolgym::cli
