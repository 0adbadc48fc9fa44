#include <doctest.h>

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>
#include <unistd.h>

#include <httplib.h>
#include <json.hpp>

#include "evolgym/cli.hpp"
#include "evolgym/core.hpp"

using namespace evolgym;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    std::string tmpl = (fs::temp_directory_path() / "evolgym_cli_XXXXXX").string();
    path = mkdtemp(tmpl.data());
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string write_config(const fs::path& dir, int port = 0, std::uint64_t seed = 11,
                         const std::string& merge = "with_initial") {
  const nlohmann::json config = {
      {"environments",
       {{{"name", "maze"},
         {"port", port},
         {"difficulty", 5},
         {"counts", {{"bc", 3}, {"evolve", 4}, {"eval", 2}}}}}},
      {"policy", {{"kind", "oracle"}}},
      {"rollout",
       {{"k", 1}, {"temperature", 0.7}, {"concurrency", 4}, {"seed", seed}, {"transport", "inprocess"}}},
      {"training",
       {{"iterations", 2},
        {"learning_rate", 0.5},
        {"epochs", 2},
        {"merge_strategy", merge},
        {"restart_from", "base"}}},
      {"paths",
       {{"instructions", (dir / "instructions").string()},
        {"datasets", (dir / "datasets").string()},
        {"run_dir", (dir / "run").string()}}}};
  const fs::path path = dir / "config.json";
  std::ofstream out(path);
  out << config.dump(2);
  return path.string();
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path);
  REQUIRE_MESSAGE(in.good(), "missing " << path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

int run_pipeline(const fs::path& dir, std::uint64_t seed) {
  cli::CommonOptions options;
  options.config_path = write_config(dir, 0, seed);
  if (cli::run_gen_instructions(options) != 0) return 1;
  if (cli::run_collect(options) != 0) return 2;
  if (cli::run_train_bc(options) != 0) return 3;
  if (cli::run_evolve(options) != 0) return 4;
  if (cli::run_eval(options) != 0) return 5;
  if (cli::run_report(options) != 0) return 6;
  return 0;
}

}  // namespace

TEST_CASE("config parsing is strict") {
  CHECK_THROWS_AS(config::parse_config("{\"unknown\": 1}"), config::ConfigError);
  CHECK_THROWS_AS(config::parse_config("{\"rollout\": {\"temprature\": 0.7}}"),
                  config::ConfigError);
  CHECK_THROWS_AS(config::parse_config("not json"), config::ConfigError);
  CHECK_THROWS_AS(config::parse_config("{\"training\": {\"merge_strategy\": \"sideways\"}}"),
                  config::ConfigError);
  const auto parsed = config::parse_config("{\"rollout\": {\"k\": 3}}");
  CHECK(parsed.rollout.samples_per_instruction == 3);
  CHECK(parsed.training.iterations == 4);   // paper defaults
  CHECK(parsed.rollout.temperature == 0.7);
  CHECK(parsed.training.merge_strategy == "with_initial");
}

TEST_CASE("gen-instructions writes deterministic files with disjoint splits") {
  TempDir dir;
  cli::CommonOptions options;
  options.config_path = write_config(dir.path);
  REQUIRE(cli::run_gen_instructions(options) == 0);

  const fs::path file = dir.path / "instructions" / "maze.jsonl";
  const auto set = core::load_instruction_set(file.string());
  CHECK(set.instructions.size() == 9);
  CHECK(set.by_split(core::Split::kBc).size() == 3);
  CHECK(set.by_split(core::Split::kEvolve).size() == 4);
  CHECK(set.by_split(core::Split::kEval).size() == 2);

  std::set<std::string> eval_ids, pool_ids;
  for (const auto* instruction : set.by_split(core::Split::kEval)) {
    eval_ids.insert(instruction->instruction_id);
  }
  for (const auto* instruction : set.evolve_pool()) pool_ids.insert(instruction->instruction_id);
  for (const auto& id : eval_ids) CHECK(pool_ids.count(id) == 0);

  const std::string first = slurp(file);
  REQUIRE(cli::run_gen_instructions(options) == 0);
  CHECK(slurp(file) == first);
}

TEST_CASE("missing config or artifacts yield exit code 1") {
  TempDir dir;
  cli::CommonOptions options;
  options.config_path = (dir.path / "nope.json").string();
  CHECK(cli::run_gen_instructions(options) == 1);

  options.config_path = write_config(dir.path);
  CHECK(cli::run_collect(options) == 1);    // no instruction files yet
  CHECK(cli::run_train_bc(options) == 1);   // no expert dataset
  CHECK(cli::run_evolve(options) == 1);     // no base snapshot
  CHECK(cli::run_report(options) == 1);     // no manifest
}

TEST_CASE("the full pipeline runs and is byte-identical across reruns") {
  TempDir a, b;
  REQUIRE(run_pipeline(a.path, 11) == 0);
  REQUIRE(run_pipeline(b.path, 11) == 0);

  const std::vector<std::string> artifacts = {
      "instructions/maze.jsonl", "datasets/expert.jsonl",   "run/policy_base.json",
      "run/policy_final.json",   "run/manifest.json",       "run/eval_report.json",
      "run/report.csv",          "run/report.txt",          "run/d_m_iter1.jsonl",
      "run/d_m_iter2.jsonl",     "run/policy_iter1.json",   "run/policy_iter2.json"};
  for (const auto& artifact : artifacts) {
    CAPTURE(artifact);
    CHECK(slurp(a.path / artifact) == slurp(b.path / artifact));
  }

  // manifest rows: baseline + two iterations; report has M+1 data rows
  const auto manifest = nlohmann::json::parse(slurp(a.path / "run/manifest.json"));
  CHECK(manifest.at("iterations").size() == 3);
  const std::string csv = slurp(a.path / "run/report.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);  // header + 3 rows

  // a different seed changes the artifacts
  TempDir c;
  REQUIRE(run_pipeline(c.path, 12) == 0);
  CHECK(slurp(a.path / "instructions/maze.jsonl") != slurp(c.path / "instructions/maze.jsonl"));
}

TEST_CASE("serve prints READY lines and shuts down on SIGINT") {
  TempDir dir;
  const int port = 39471;
  const std::string config_path = write_config(dir.path, port);

  int out_pipe[2];
  REQUIRE(pipe(out_pipe) == 0);
  const pid_t pid = fork();
  REQUIRE(pid >= 0);
  if (pid == 0) {
    dup2(out_pipe[1], STDOUT_FILENO);
    close(out_pipe[0]);
    close(out_pipe[1]);
    execl(EVOLGYM_BINARY, EVOLGYM_BINARY, "serve", "--config", config_path.c_str(),
          static_cast<char*>(nullptr));
    _exit(127);
  }
  close(out_pipe[1]);

  std::string line;
  FILE* stream = fdopen(out_pipe[0], "r");
  char buffer[512];
  REQUIRE(fgets(buffer, sizeof(buffer), stream) != nullptr);
  line = buffer;
  CHECK(line.rfind("READY maze http://", 0) == 0);

  // the service answers while running
  {
    httplib::Client client("http://127.0.0.1:" + std::to_string(port));
    const auto response =
        client.Post("/createEnv", R"({"env":"maze","seed":1})", "application/json");
    REQUIRE(response);
    CHECK(response->status == 200);
  }

  kill(pid, SIGINT);
  int status = 0;
  waitpid(pid, &status, 0);
  CHECK(WIFEXITED(status));
  CHECK(WEXITSTATUS(status) == 0);
  fclose(stream);
}

TEST_CASE("serve fails cleanly when the port is occupied") {
  TempDir dir;
  const int port = 39473;
  httplib::Server blocker;
  REQUIRE(blocker.bind_to_port("127.0.0.1", port));
  std::thread listener([&blocker] { blocker.listen_after_bind(); });
  blocker.wait_until_ready();

  const std::string config_path = write_config(dir.path, port);
  const pid_t pid = fork();
  REQUIRE(pid >= 0);
  if (pid == 0) {
    execl(EVOLGYM_BINARY, EVOLGYM_BINARY, "serve", "--config", config_path.c_str(),
          static_cast<char*>(nullptr));
    _exit(127);
  }
  int status = 0;
  waitpid(pid, &status, 0);
  CHECK(WIFEXITED(status));
  CHECK(WEXITSTATUS(status) == 1);

  blocker.stop();
  listener.join();
}

TEST_CASE("evolve against live HTTP services matches the protocol") {
  TempDir dir;
  // generate + collect + train in-process first
  cli::CommonOptions options;
  options.config_path = write_config(dir.path, 39475);
  REQUIRE(cli::run_gen_instructions(options) == 0);
  REQUIRE(cli::run_collect(options) == 0);
  REQUIRE(cli::run_train_bc(options) == 0);

  // flip the transport to http and serve in a child process
  {
    auto config = nlohmann::json::parse(slurp(dir.path / "config.json"));
    config["rollout"]["transport"] = "http";
    std::ofstream out(dir.path / "config.json");
    out << config.dump(2);
  }
  const pid_t pid = fork();
  REQUIRE(pid >= 0);
  if (pid == 0) {
    execl(EVOLGYM_BINARY, EVOLGYM_BINARY, "serve", "--config",
          (dir.path / "config.json").string().c_str(), static_cast<char*>(nullptr));
    _exit(127);
  }
  // wait for readiness
  {
    httplib::Client probe("http://127.0.0.1:39475");
    bool up = false;
    for (int i = 0; i < 100 && !up; ++i) {
      const auto response = probe.Get("/observation?session_id=x");
      up = bool(response);
      if (!up) usleep(50000);
    }
    REQUIRE(up);
  }

  CHECK(cli::run_evolve(options) == 0);
  CHECK(fs::exists(dir.path / "run" / "manifest.json"));

  kill(pid, SIGINT);
  int status = 0;
  waitpid(pid, &status, 0);
}
