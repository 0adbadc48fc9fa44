#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <future>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "evolgym/envs.hpp"
#include "evolgym/server.hpp"
#include "evolgym/transport.hpp"
#include "evolgym/util.hpp"

using namespace evolgym;
using nlohmann::json;

namespace {

envs::Assets test_assets() { return envs::load_assets(envs::default_assets_dir()); }

protocol::EnvRegistry make_registry(std::map<std::string, int> difficulties = {}) {
  protocol::EnvRegistry registry;
  envs::register_builtin(registry, test_assets(), difficulties);
  return registry;
}

struct GoldenChecker {
  std::string dir = EVOLGYM_TEST_GOLDEN_DIR;
  bool regen = std::getenv("EVOLGYM_REGEN_GOLDEN") != nullptr;

  void check(const std::string& name, int status, const std::string& body) const {
    const std::string path = dir + "/" + name + ".json";
    const std::string actual = std::to_string(status) + "\n" + body + "\n";
    if (regen) {
      std::ofstream out(path, std::ios::trunc);
      out << actual;
      return;
    }
    std::ifstream in(path);
    REQUIRE_MESSAGE(in.good(), "missing golden file " << path);
    std::stringstream buffer;
    buffer << in.rdbuf();
    CAPTURE(name);
    CHECK(buffer.str() == actual);
  }
};

}  // namespace

TEST_CASE("session lifecycle and guards") {
  const auto registry = make_registry();
  protocol::SessionManager sessions(registry);

  const auto a = sessions.create("maze", std::nullopt, 7);
  const auto b = sessions.create("maze", std::nullopt, 7);
  CHECK(a.session_id != b.session_id);
  CHECK(a.observation == b.observation);
  CHECK(a.observation.find("The goal is at position") != std::string::npos);
  CHECK(a.observation.find("Your current position is at position") != std::string::npos);
  CHECK(a.system_prompt.find("maze solver") != std::string::npos);

  SUBCASE("round counts accepted steps, including in-band rejections") {
    CHECK(sessions.round(a.session_id) == 0);
    sessions.step(a.session_id, "jump");
    CHECK(sessions.round(a.session_id) == 1);
    sessions.step(a.session_id, "move up");
    CHECK(sessions.round(a.session_id) == 2);
  }

  SUBCASE("unknown env and unknown session raise 404-class errors") {
    try {
      sessions.create("chess", std::nullopt, 1);
      FAIL("expected ProtocolError");
    } catch (const protocol::ProtocolError& error) {
      CHECK(error.http_status() == 404);
      CHECK(std::string(error.what()).find("chess") != std::string::npos);
    }
    CHECK_THROWS_AS(sessions.step("nope", "move up"), protocol::ProtocolError);
  }

  SUBCASE("done sessions reject further steps without state change") {
    for (int i = 0; i < envs::MazeWorld::kMaxRounds; ++i) sessions.step(a.session_id, "jump");
    CHECK(sessions.done(a.session_id));
    const std::string before = sessions.fingerprint(a.session_id);
    try {
      sessions.step(a.session_id, "move up");
      FAIL("expected ProtocolError");
    } catch (const protocol::ProtocolError& error) {
      CHECK(error.http_status() == 409);
    }
    CHECK(sessions.fingerprint(a.session_id) == before);
  }

  SUBCASE("observation and available_actions are pure reads") {
    sessions.step(a.session_id, "jump");
    const std::string before = sessions.fingerprint(a.session_id);
    const std::string obs1 = sessions.observation(a.session_id);
    const std::string obs2 = sessions.observation(a.session_id);
    const auto actions1 = sessions.available_actions(a.session_id);
    const auto actions2 = sessions.available_actions(a.session_id);
    CHECK(obs1 == obs2);
    CHECK(actions1 == actions2);
    CHECK(sessions.fingerprint(a.session_id) == before);
  }

  SUBCASE("observation tracks the latest step") {
    CHECK(sessions.observation(a.session_id) == a.observation);
    const auto result = sessions.step(a.session_id, "jump");
    CHECK(sessions.observation(a.session_id) == result.observation);
  }

  SUBCASE("reset returns to the exact initial state") {
    sessions.step(a.session_id, "move up");
    sessions.step(a.session_id, "move down");
    sessions.step(a.session_id, "jump");
    const std::string obs = sessions.reset(a.session_id);
    CHECK(obs == a.observation);
    CHECK(sessions.round(a.session_id) == 0);
    const std::string first = sessions.fingerprint(a.session_id);
    sessions.reset(a.session_id);
    CHECK(sessions.fingerprint(a.session_id) == first);

    for (int i = 0; i < envs::MazeWorld::kMaxRounds; ++i) sessions.step(a.session_id, "jump");
    CHECK(sessions.done(a.session_id));
    sessions.reset(a.session_id);
    CHECK_FALSE(sessions.done(a.session_id));
    sessions.step(a.session_id, "jump");  // usable again
  }

  SUBCASE("create by instruction id resolves the loaded set") {
    protocol::EnvRegistry with_instructions = make_registry();
    core::InstructionSet set;
    auto [instruction, world] = envs::generate_instance("maze", 11, 7, test_assets());
    instruction.instruction_id = "maze-00011";
    set.instructions.push_back(instruction);
    with_instructions.add_instructions(set);
    protocol::SessionManager manager(with_instructions);
    const auto created = manager.create("maze", "maze-00011", std::nullopt);
    CHECK(created.observation == instruction.text);
    CHECK_THROWS_AS(manager.create("maze", "maze-99999", std::nullopt),
                    protocol::ProtocolError);
  }
}

TEST_CASE("wordle and craft available actions over the protocol") {
  const auto registry = make_registry();
  protocol::SessionManager sessions(registry);

  const auto wordle = sessions.create("wordle", std::nullopt, 3);
  CHECK(sessions.available_actions(wordle.session_id).empty());

  const auto craft = sessions.create("craft", std::nullopt, 3);
  const auto actions = sessions.available_actions(craft.session_id);
  CHECK(std::find(actions.begin(), actions.end(), std::string("inventory")) != actions.end());
  bool has_get = false, has_craft = false;
  for (const auto& action : actions) {
    has_get |= action.rfind("get ", 0) == 0;
    has_craft |= action.rfind("craft ", 0) == 0;
  }
  CHECK(has_get);
  CHECK(has_craft);
  CHECK(std::is_sorted(actions.begin(), actions.end()));
}

TEST_CASE("idle sessions are evicted") {
  const auto registry = make_registry();
  protocol::SessionManager sessions(registry, std::chrono::milliseconds(40));
  const auto a = sessions.create("maze", std::nullopt, 1);
  std::this_thread::sleep_for(std::chrono::milliseconds(80));
  CHECK(sessions.evict_idle() >= 1);
  CHECK_THROWS_AS(sessions.observation(a.session_id), protocol::ProtocolError);
}

TEST_CASE("HTTP endpoints match the golden request/response pairs") {
  const auto registry = make_registry({{"maze", 5}});
  server::EnvService service(registry, "127.0.0.1", 0);
  REQUIRE(service.start());

  httplib::Client client(service.url());
  GoldenChecker golden;

  auto post = [&](const std::string& path, const json& body) {
    return client.Post(path, body.dump(), "application/json");
  };

  {
    const auto response = post("/createEnv", {{"env", "maze"}, {"instruction_id", nullptr}, {"seed", 7}});
    REQUIRE(response);
    golden.check("create_ok", response->status, response->body);
  }
  {
    const auto response = post("/step", {{"session_id", "maze-1"}, {"action", "move up"}});
    REQUIRE(response);
    golden.check("step_ok", response->status, response->body);
  }
  {
    const auto response = client.Get("/observation?session_id=maze-1");
    REQUIRE(response);
    golden.check("observation_ok", response->status, response->body);
  }
  {
    const auto response = client.Get("/available_actions?session_id=maze-1");
    REQUIRE(response);
    golden.check("available_actions_ok", response->status, response->body);
  }
  {
    const auto response = post("/reset", {{"session_id", "maze-1"}});
    REQUIRE(response);
    golden.check("reset_ok", response->status, response->body);
  }
  {
    const auto response = post("/createEnv", {{"env", "chess"}, {"seed", 1}});
    REQUIRE(response);
    CHECK(response->status == 404);
    golden.check("create_unknown_env", response->status, response->body);
  }
  {
    const auto response = post("/step", {{"session_id", "maze-999"}, {"action", "move up"}});
    REQUIRE(response);
    CHECK(response->status == 404);
    golden.check("step_unknown_session", response->status, response->body);
  }
  {
    for (int i = 0; i < envs::MazeWorld::kMaxRounds; ++i) {
      post("/step", {{"session_id", "maze-1"}, {"action", "jump"}});
    }
    const auto response = post("/step", {{"session_id", "maze-1"}, {"action", "move up"}});
    REQUIRE(response);
    CHECK(response->status == 409);
    golden.check("step_done_conflict", response->status, response->body);
  }
  {
    const auto response = post("/step", {{"session_id", "maze-1"}});
    REQUIRE(response);
    CHECK(response->status == 400);
    golden.check("step_bad_request", response->status, response->body);
  }
  {
    const auto response = client.Get("/observation");
    REQUIRE(response);
    CHECK(response->status == 400);
    golden.check("observation_missing_param", response->status, response->body);
  }

  service.stop();
}

TEST_CASE("HTTP transport round-trips the protocol") {
  const auto registry = make_registry();
  server::EnvService service(registry, "127.0.0.1", 0);
  REQUIRE(service.start());

  transport::HttpTransport transport(service.url());
  const auto created = transport.create("maze", std::nullopt, 21);
  const auto direct = service.sessions().observation(created.session_id);
  CHECK(transport.observation(created.session_id) == direct);
  const auto result = transport.step(created.session_id, "jump");
  CHECK(result.observation == "Invalid action.");
  CHECK(result.step_reward == -1.0);
  CHECK_FALSE(result.done);
  CHECK(transport.available_actions(created.session_id) ==
        service.sessions().available_actions(created.session_id));
  CHECK(transport.reset(created.session_id) == created.observation);

  CHECK_THROWS_AS(transport.create("chess", std::nullopt, 1), protocol::ProtocolError);
  service.stop();
}

TEST_CASE("64 concurrent sessions behave like dedicated serial runs") {
  const auto registry = make_registry();
  server::EnvService service(registry, "127.0.0.1", 0);
  REQUIRE(service.start());

  constexpr int kSessions = 64;
  const char* envs_cycle[3] = {"maze", "wordle", "craft"};

  // Dedicated serial baselines, one fresh manager per session.
  std::vector<std::vector<std::string>> action_scripts(kSessions);
  std::vector<std::vector<std::string>> expected(kSessions);
  for (int s = 0; s < kSessions; ++s) {
    const std::string env_name = envs_cycle[s % 3];
    auto rng = util::make_rng(1000 + s);
    std::vector<std::string> script;
    const std::vector<std::string> moves = {"move up", "move down", "move left", "move right",
                                            "inventory", "get stick", "c r a n e", "jump"};
    for (int i = 0; i < 8; ++i) script.push_back(moves[util::next_below(rng, moves.size())]);
    action_scripts[s] = script;

    protocol::SessionManager solo(registry);
    const auto created = solo.create(env_name, std::nullopt, static_cast<std::uint64_t>(s));
    std::vector<std::string> trace{created.observation};
    for (const auto& action : script) {
      if (solo.done(created.session_id)) break;
      trace.push_back(solo.step(created.session_id, action).observation);
    }
    expected[s] = trace;
  }

  // Concurrent run against one shared service over HTTP with jittered pacing.
  std::vector<std::future<std::vector<std::string>>> futures;
  for (int s = 0; s < kSessions; ++s) {
    futures.push_back(std::async(std::launch::async, [&, s] {
      transport::HttpTransport transport(service.url());
      const std::string env_name = envs_cycle[s % 3];
      const auto created = transport.create(env_name, std::nullopt, static_cast<std::uint64_t>(s));
      std::vector<std::string> trace{created.observation};
      auto pacing = util::make_rng(s);
      for (const auto& action : action_scripts[s]) {
        const auto result = transport.step(created.session_id, action);
        trace.push_back(result.observation);
        if (result.done) break;
        if (util::next_unit(pacing) < 0.3) {
          std::this_thread::sleep_for(std::chrono::microseconds(50));
        }
      }
      return trace;
    }));
  }
  for (int s = 0; s < kSessions; ++s) {
    CAPTURE(s);
    CHECK(futures[s].get() == expected[s]);
  }
  service.stop();
}

TEST_CASE("two concurrent steps on one session serialize") {
  const auto registry = make_registry();
  protocol::SessionManager sessions(registry);
  const auto created = sessions.create("maze", std::nullopt, 5);

  std::vector<std::thread> threads;
  std::atomic<int> accepted{0};
  for (int t = 0; t < 8; ++t) {
    threads.emplace_back([&] {
      for (int i = 0; i < 4; ++i) {
        try {
          sessions.step(created.session_id, "jump");
          accepted.fetch_add(1);
        } catch (const protocol::ProtocolError&) {
          // done-session rejections once the round budget is spent
        }
      }
    });
  }
  for (auto& thread : threads) thread.join();
  CHECK(accepted.load() == envs::MazeWorld::kMaxRounds);
  CHECK(sessions.done(created.session_id));
}
