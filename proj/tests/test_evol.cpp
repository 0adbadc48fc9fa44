#include <doctest.h>

#include <cmath>

#include "evolgym/envs.hpp"
#include "evolgym/evol.hpp"
#include "evolgym/oracle.hpp"
#include "evolgym/util.hpp"

using namespace evolgym;

namespace {

/// Closed three-action test env, independent of the real environments.
std::vector<std::string> bandit_resolver(const std::string&, const std::string&) {
  return {"pull a", "pull b", "pull c"};
}

core::InstructionSet bandit_instructions() {
  core::InstructionSet set;
  core::Instruction instruction;
  instruction.env_name = "bandit";
  instruction.instruction_id = "bandit-00000";
  instruction.text = "Choose an arm.";
  instruction.seed = 0;
  instruction.split = core::Split::kEvolve;
  set.instructions.push_back(instruction);
  return set;
}

core::Trajectory bandit_trajectory(const std::string& action, double reward, int steps = 1) {
  core::Trajectory t;
  t.env_name = "bandit";
  t.instruction_id = "bandit-00000";
  for (int i = 0; i < steps; ++i) {
    t.steps.push_back(core::Step{"th", action, "ok"});
  }
  t.reward = reward;
  t.done_reason = reward == 1.0 ? core::DoneReason::kSuccess : core::DoneReason::kFailure;
  return t;
}

core::TrajectoryDataset random_bandit_dataset(std::mt19937_64& rng, int records,
                                              bool binary_rewards) {
  core::TrajectoryDataset dataset;
  const char* actions[3] = {"pull a", "pull b", "pull c"};
  for (int i = 0; i < records; ++i) {
    const double reward = binary_rewards ? (util::next_unit(rng) < 0.5 ? 1.0 : 0.0)
                                         : util::next_unit(rng);
    dataset.records.push_back(bandit_trajectory(actions[util::next_below(rng, 3)], reward,
                                                1 + static_cast<int>(util::next_below(rng, 3))));
  }
  return dataset;
}

policy::LogLinearPolicy random_policy(std::mt19937_64& rng, double scale = 0.5) {
  policy::LogLinearPolicy agent;
  for (std::size_t i = 0; i < policy::kFeatureDimension; ++i) {
    if (util::next_unit(rng) < 0.01) {
      agent.mutable_weights()[i] = scale * (util::next_unit(rng) * 2.0 - 1.0);
    }
  }
  return agent;
}

}  // namespace

TEST_CASE("bc loss at zero weights is total steps times ln k") {
  const auto instructions = bandit_instructions();
  core::TrajectoryDataset dataset;
  dataset.records.push_back(bandit_trajectory("pull a", 1.0, 2));
  dataset.records.push_back(bandit_trajectory("pull b", 1.0, 3));

  const auto prepared = evol::prepare_dataset(dataset, instructions,
                                              evol::ObjectiveKind::kBehavioralCloning, true,
                                              bandit_resolver);
  policy::LogLinearPolicy zero;
  const double value = evol::objective(zero, prepared, evol::ObjectiveKind::kBehavioralCloning);
  CHECK(value == doctest::Approx(-5.0 * std::log(3.0)).epsilon(1e-12));
}

TEST_CASE("bc_train drives the observed action to the argmax") {
  const auto instructions = bandit_instructions();
  core::TrajectoryDataset dataset;
  for (int i = 0; i < 4; ++i) dataset.records.push_back(bandit_trajectory("pull b", 1.0));

  evol::TrainConfig config;
  config.epochs = 5;
  config.learning_rate = 0.5;
  const auto result = evol::bc_train(policy::LogLinearPolicy(), dataset, instructions, config,
                                     bandit_resolver);

  policy::PolicyContext context;
  context.instruction = "Choose an arm.";
  context.current_observation = "Choose an arm.";
  context.available_actions = bandit_resolver("", "");
  auto rng = util::make_rng(0);
  policy::LogLinearPolicy trained = result.policy;
  CHECK(trained.act(context, 0.0, rng).action == "pull b");

  // per-epoch loss is non-increasing for this convex problem
  for (std::size_t i = 1; i < result.epoch_objectives.size(); ++i) {
    CHECK(result.epoch_objectives[i] >= result.epoch_objectives[i - 1] - 1e-12);
  }
}

TEST_CASE("bc_train on an empty dataset changes nothing") {
  const auto instructions = bandit_instructions();
  auto rng = util::make_rng(12);
  const auto start = random_policy(rng);
  const auto result = evol::bc_train(start, core::TrajectoryDataset{}, instructions,
                                     evol::TrainConfig{}, bandit_resolver);
  CHECK(result.policy.weights() == start.weights());
}

TEST_CASE("bc_train rejects actions outside the available set") {
  const auto instructions = bandit_instructions();
  core::TrajectoryDataset dataset;
  dataset.records.push_back(bandit_trajectory("pull z", 1.0));
  CHECK_THROWS_WITH_AS(evol::bc_train(policy::LogLinearPolicy(), dataset, instructions,
                                      evol::TrainConfig{}, bandit_resolver),
                       doctest::Contains("bandit-00000"), evol::DatasetError);
}

TEST_CASE("learn_step with all-zero rewards changes nothing") {
  const auto instructions = bandit_instructions();
  core::TrajectoryDataset dataset;
  dataset.records.push_back(bandit_trajectory("pull a", 0.0));
  dataset.records.push_back(bandit_trajectory("pull c", 0.0));
  auto rng = util::make_rng(21);
  const auto base = random_policy(rng);
  const auto result =
      evol::learn_step(base, dataset, instructions, evol::TrainConfig{}, bandit_resolver);
  CHECK(result.policy.weights() == base.weights());
}

TEST_CASE("binary-reward reduction: evol gradient equals bc gradient on successes") {
  const auto instructions = bandit_instructions();
  auto rng = util::make_rng(33);
  for (int trial = 0; trial < 10; ++trial) {
    const auto dataset = random_bandit_dataset(rng, 12, /*binary_rewards=*/true);
    core::TrajectoryDataset successes;
    for (const auto& record : dataset.records) {
      if (record.reward == 1.0) successes.records.push_back(record);
    }
    const auto agent = random_policy(rng);

    const auto evol_prepared = evol::prepare_dataset(
        dataset, instructions, evol::ObjectiveKind::kRewardWeighted, false, bandit_resolver);
    const auto bc_prepared = evol::prepare_dataset(
        successes, instructions, evol::ObjectiveKind::kBehavioralCloning, true, bandit_resolver);

    const auto g_evol = evol::gradient(agent, evol_prepared, evol::ObjectiveKind::kRewardWeighted);
    const auto g_bc = evol::gradient(agent, bc_prepared, evol::ObjectiveKind::kBehavioralCloning);
    REQUIRE(g_evol.size() == g_bc.size());
    for (std::size_t i = 0; i < g_evol.size(); ++i) {
      CHECK(std::abs(g_evol[i] - g_bc[i]) <= 1e-12);
    }
  }
}

TEST_CASE("uniform reward 1 makes learn_step identical to bc_train") {
  const auto instructions = bandit_instructions();
  auto rng = util::make_rng(41);
  core::TrajectoryDataset dataset = random_bandit_dataset(rng, 8, true);
  for (auto& record : dataset.records) record.reward = 1.0;

  const auto start = random_policy(rng);
  evol::TrainConfig config;
  config.epochs = 3;
  const auto a = evol::learn_step(start, dataset, instructions, config, bandit_resolver);
  const auto b = evol::bc_train(start, dataset, instructions, config, bandit_resolver);
  CHECK(a.policy.weights() == b.policy.weights());
}

TEST_CASE("grad_check validates both objectives") {
  const auto instructions = bandit_instructions();
  auto rng = util::make_rng(55);

  SUBCASE("bc objective at random points") {
    for (int trial = 0; trial < 5; ++trial) {
      const auto dataset = random_bandit_dataset(rng, 6, true);
      const auto prepared = evol::prepare_dataset(
          dataset, instructions, evol::ObjectiveKind::kBehavioralCloning, true, bandit_resolver);
      const auto agent = random_policy(rng);
      CHECK(evol::grad_check(evol::ObjectiveKind::kBehavioralCloning, prepared, agent, 1e-5, 200,
                             trial) < 1e-5);
    }
  }
  SUBCASE("evol objective with zero rewards has an exactly zero gradient") {
    auto dataset = random_bandit_dataset(rng, 6, true);
    for (auto& record : dataset.records) record.reward = 0.0;
    const auto prepared = evol::prepare_dataset(
        dataset, instructions, evol::ObjectiveKind::kRewardWeighted, false, bandit_resolver);
    const auto agent = random_policy(rng);
    const auto gradient =
        evol::gradient(agent, prepared, evol::ObjectiveKind::kRewardWeighted);
    for (const double g : gradient) CHECK(g == 0.0);
    CHECK(evol::grad_check(evol::ObjectiveKind::kRewardWeighted, prepared, agent, 1e-5) == 0.0);
  }
}

TEST_CASE("log_evidence on enumerated spaces") {
  CHECK(evol::log_evidence({{0.5, 0.5}, {1.0, 1.0}}) == doctest::Approx(0.0));
  CHECK(evol::log_evidence({{0.5, 0.5}, {0.8, 0.4}}) == doctest::Approx(std::log(0.6)));
  CHECK(std::isinf(evol::log_evidence({{1.0, 0.0}, {0.0, 1.0}})));
  CHECK(evol::log_evidence({{1.0, 0.0}, {0.0, 1.0}}) < 0.0);
  CHECK_THROWS_AS(evol::log_evidence({{0.5, 0.4}, {1.0, 1.0}}), core::DomainError);
  CHECK_THROWS_AS(evol::log_evidence({{0.5, 0.5}, {1.5, 0.0}}), core::DomainError);
}

TEST_CASE("elbo examples and bound") {
  const evol::EnumeratedSpace space{{0.5, 0.5}, {0.8, 0.4}};
  const double evidence = evol::log_evidence(space);

  const double at_pi = evol::elbo({0.5, 0.5}, space);
  CHECK(at_pi == doctest::Approx((std::log(0.8) + std::log(0.4)) / 2.0));
  CHECK(at_pi <= evidence + 1e-9);

  const double concentrated = evol::elbo({1.0, 0.0}, space);
  CHECK(concentrated == doctest::Approx(std::log(0.8) - std::log(2.0)));
  CHECK(concentrated <= evidence + 1e-9);

  const auto q_star = evol::optimal_q(space);
  CHECK(evol::elbo(q_star, space) == doctest::Approx(evidence).epsilon(1e-12));

  CHECK_THROWS_AS(evol::elbo({0.7, 0.2}, space), core::DomainError);
  const evol::EnumeratedSpace holes{{1.0, 0.0}, {0.5, 0.5}};
  CHECK_THROWS_AS(evol::elbo({0.5, 0.5}, holes), core::DomainError);
}

TEST_CASE("optimal_q examples") {
  CHECK(evol::optimal_q({{0.5, 0.5}, {1.0, 0.0}}) == std::vector<double>{1.0, 0.0});
  const auto q = evol::optimal_q({{0.25, 0.75}, {0.8, 0.4}});
  CHECK(q[0] == doctest::Approx(0.4));
  CHECK(q[1] == doctest::Approx(0.6));
  const auto uninformative = evol::optimal_q({{0.3, 0.7}, {0.5, 0.5}});
  CHECK(uninformative[0] == doctest::Approx(0.3));
  CHECK(uninformative[1] == doctest::Approx(0.7));
  CHECK_THROWS_AS(evol::optimal_q({{0.5, 0.5}, {0.0, 0.0}}), core::DomainError);
}

TEST_CASE("elbo inequality holds over random spaces with tightness only at q*") {
  auto rng = util::make_rng(71);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 2 + util::next_below(rng, 5);
    evol::EnumeratedSpace space;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      space.policy_probabilities.push_back(0.01 + util::next_unit(rng));
      total += space.policy_probabilities.back();
      space.success_likelihood.push_back(0.05 + 0.95 * util::next_unit(rng));
    }
    for (double& pi : space.policy_probabilities) pi /= total;
    // renormalize exactly
    double check = 0.0;
    for (std::size_t i = 0; i + 1 < n; ++i) check += space.policy_probabilities[i];
    space.policy_probabilities[n - 1] = 1.0 - check;

    const double evidence = evol::log_evidence(space);
    std::vector<double> q(n, 0.0);
    double q_total = 0.0;
    for (double& value : q) q_total += value = 0.01 + util::next_unit(rng);
    for (double& value : q) value /= q_total;
    double q_check = 0.0;
    for (std::size_t i = 0; i + 1 < n; ++i) q_check += q[i];
    q[n - 1] = 1.0 - q_check;

    CHECK(evol::elbo(q, space) <= evidence + 1e-9);
    const auto q_star = evol::optimal_q(space);
    const double tight = evol::elbo(q_star, space);
    CHECK(std::abs(tight - evidence) <= 1e-9);
    CHECK(tight >= evol::elbo(q, space) - 1e-9);
  }
}

TEST_CASE("agent_evol structure, merging, and zero-success safety") {
  const auto instructions = bandit_instructions();
  core::TrajectoryDataset expert;
  expert.records.push_back(bandit_trajectory("pull b", 1.0));
  expert.records.push_back(bandit_trajectory("pull b", 1.0));
  expert.label = "D_s";

  evol::TrainConfig config;
  config.iterations = 4;
  config.epochs = 2;

  SUBCASE("with_initial merges expert data every iteration") {
    int calls = 0;
    evol::ExploreFn explore_fn = [&](policy::LogLinearPolicy&, int iteration) {
      ++calls;
      controller::ExploreResult result;
      result.dataset.label = "D_m@iter" + std::to_string(iteration);
      result.dataset.records.push_back(bandit_trajectory("pull a", 1.0));
      result.attempts_per_env["bandit"] = 1;
      result.successes_per_env["bandit"] = 1;
      return result;
    };
    evol::EvalFn eval_fn = [](policy::LogLinearPolicy&) { return controller::EvalReport{}; };
    const auto run = evol::agent_evol(policy::LogLinearPolicy(), expert, instructions, config,
                                      explore_fn, eval_fn, bandit_resolver);
    CHECK(calls == 4);
    CHECK(run.iterations.size() == 5);  // baseline + M
    CHECK(run.exploration_datasets.size() == 4);
    for (const auto& record : run.iterations) {
      if (record.iteration == 0) continue;
      CHECK(record.merged_size == record.explored + record.expert_size);
    }
  }

  SUBCASE("zero-success iterations still learn from the expert data") {
    evol::ExploreFn explore_fn = [&](policy::LogLinearPolicy&, int) {
      controller::ExploreResult result;
      result.dataset.records.push_back(bandit_trajectory("pull c", 0.0));
      result.attempts_per_env["bandit"] = 1;
      return result;
    };
    evol::EvalFn eval_fn = [](policy::LogLinearPolicy&) { return controller::EvalReport{}; };
    const policy::LogLinearPolicy base;
    const auto run = evol::agent_evol(base, expert, instructions, config, explore_fn, eval_fn,
                                      bandit_resolver);
    // merged data reduces to D_s, so the final policy equals a learn step on D_s alone
    const auto expected = evol::learn_step(base, expert, instructions, config, bandit_resolver);
    CHECK(run.final_policy.weights() == expected.policy.weights());
  }
}

TEST_CASE("agent_evol over the real maze controller produces datasets and reports") {
  envs::Assets assets = envs::load_assets(envs::default_assets_dir());
  protocol::EnvRegistry registry;
  envs::register_builtin(registry, assets, {{"maze", 5}});
  core::InstructionSet instructions;
  for (int i = 0; i < 8; ++i) {
    auto [instruction, world] = envs::generate_instance("maze", i, 5, assets);
    char id[64];
    std::snprintf(id, sizeof(id), "maze-%05d", i);
    instruction.instruction_id = id;
    instruction.split = i < 3 ? core::Split::kBc : i < 6 ? core::Split::kEvolve : core::Split::kEval;
    instructions.instructions.push_back(std::move(instruction));
  }
  registry.add_instructions(instructions);
  protocol::SessionManager sessions(registry);
  const auto factory = controller::inprocess_factory(sessions);

  auto oracle = oracle::make_oracle("maze", 5);
  controller::RolloutConfig rollout_config;
  rollout_config.seed = 3;
  const auto collected = controller::collect_expert(
      *oracle, instructions.by_split(core::Split::kBc), factory, rollout_config);
  REQUIRE(collected.dataset.records.size() == 3);

  evol::TrainConfig config;
  config.iterations = 2;
  config.epochs = 2;
  const auto base = evol::bc_train(policy::LogLinearPolicy(), collected.dataset, instructions,
                                   config);
  const auto run = evol::agent_evol_with_controller(base.policy, collected.dataset, instructions,
                                                    config, factory, rollout_config);
  CHECK(run.iterations.size() == 3);
  CHECK(run.exploration_datasets.size() == 2);
  for (const auto& dataset : run.exploration_datasets) {
    CHECK(dataset.records.size() == 6);  // evolve pool includes the bc subset
    for (const auto& record : dataset.records) {
      CHECK((record.reward == 0.0 || record.reward == 1.0));
    }
  }
  CHECK(run.iterations.back().eval.per_env.count("maze") == 1);
}
