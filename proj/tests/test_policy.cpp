#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "evolgym/envs.hpp"
#include "evolgym/policy.hpp"
#include "evolgym/util.hpp"

using namespace evolgym;

namespace {

policy::PolicyContext context_with(std::vector<std::string> actions,
                                   const std::string& observation = "obs one two",
                                   std::vector<core::Step> history = {}) {
  policy::PolicyContext context;
  context.system_prompt = "sys";
  context.instruction = "instruction text";
  context.history = std::move(history);
  context.current_observation = observation;
  std::sort(actions.begin(), actions.end());
  context.available_actions = std::move(actions);
  return context;
}

policy::LogLinearPolicy random_policy(std::mt19937_64& rng, double scale = 1.0) {
  policy::LogLinearPolicy agent;
  for (std::size_t i = 0; i < policy::kFeatureDimension; ++i) {
    if (util::next_unit(rng) < 0.02) {
      agent.mutable_weights()[i] = scale * (util::next_unit(rng) * 2.0 - 1.0);
    }
  }
  return agent;
}

}  // namespace

TEST_CASE("parse_react handles the paper template") {
  const auto output = policy::parse_react("Thought: go right.\nAction: move right");
  CHECK(output.thought == "go right.");
  CHECK(output.action == "move right");
}

TEST_CASE("parse_react accepts action-only output") {
  const auto output = policy::parse_react("Action: inventory");
  CHECK(output.thought == "");
  CHECK(output.action == "inventory");
}

TEST_CASE("parse_react fails without an action label") {
  CHECK_THROWS_AS(policy::parse_react("I will just move"), policy::ReactParseError);
}

TEST_CASE("parse_react tolerates case, whitespace, fences, and quotes") {
  CHECK(policy::parse_react("  thought: hm\n  ACTION: move up").action == "move up");
  CHECK(policy::parse_react("Action: \"move up\"").action == "move up");
  CHECK(policy::parse_react("Action: ```\nmove up\n```").action == "move up");
  CHECK(policy::parse_react("Action: `inventory`").action == "inventory");
  // the last blocks win
  const auto output =
      policy::parse_react("Thought: a\nAction: x\nThought: b\nAction: move left");
  CHECK(output.thought == "b");
  CHECK(output.action == "move left");
}

TEST_CASE("parse_react inverts the policy's rendering") {
  auto rng = util::make_rng(5);
  const auto actions = policy::resolve_action_space("maze", "whatever");
  policy::LogLinearPolicy agent = random_policy(rng);
  for (int i = 0; i < 50; ++i) {
    auto context = context_with(actions, "obs " + std::to_string(i));
    const auto result = agent.act(context, 0.7, rng);
    const auto parsed = policy::parse_react(policy::render_react({result.thought, result.action}));
    CHECK(parsed.thought == result.thought);
    CHECK(parsed.action == result.action);
  }
}

TEST_CASE("featurize is deterministic and action-sensitive") {
  const auto context = context_with({"move up", "move down"});
  const auto a = policy::featurize(context, "move up");
  const auto b = policy::featurize(context, "move up");
  CHECK(a == b);
  const auto c = policy::featurize(context, "move down");
  CHECK(a != c);
  for (const auto index : a) CHECK(index < policy::kFeatureDimension);
}

TEST_CASE("featurize collision rate on a maze corpus stays under 1%") {
  // Collision = two distinct 64-bit feature keys of one decision vector
  // landing on the same hashed index.
  std::size_t total_raw = 0;
  std::size_t total_collisions = 0;
  const auto actions = policy::resolve_action_space("maze", "whatever");
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    auto world = envs::generate_maze(seed, 7);
    policy::PolicyContext context;
    context.instruction = world->instruction_text();
    context.current_observation = world->instruction_text();
    context.available_actions = actions;
    for (int step = 0; step < 6; ++step) {
      for (const auto& action : actions) {
        const auto features = policy::featurize(context, action);
        const auto raw = policy::featurize_raw_keys(context, action);
        total_raw += raw.size();
        total_collisions += raw.size() - features.size();
      }
      const auto path = world->shortest_path(world->position());
      if (path.empty()) break;
      const auto outcome = world->step(path.front());
      context.history.push_back(core::Step{"t", path.front(), outcome.observation});
      context.current_observation = outcome.observation;
      if (outcome.done) break;
    }
  }
  CHECK(total_raw > 10000);
  CHECK(static_cast<double>(total_collisions) / static_cast<double>(total_raw) < 0.01);
}

TEST_CASE("log_prob normalizes and matches a direct softmax oracle") {
  auto rng = util::make_rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const int k = 2 + static_cast<int>(util::next_below(rng, 5));
    std::vector<std::string> actions;
    for (int i = 0; i < k; ++i) actions.push_back("action " + std::to_string(i));
    const auto context = context_with(actions, "obs " + std::to_string(trial));
    const auto agent = random_policy(rng);

    // independent re-implementation: direct exp/sum softmax on raw scores
    std::vector<double> scores;
    for (const auto& action : context.available_actions) {
      scores.push_back(agent.score(policy::featurize(context, action)));
    }
    double normalizer = 0.0;
    for (const double s : scores) normalizer += std::exp(s);

    double probability_sum = 0.0;
    for (std::size_t i = 0; i < context.available_actions.size(); ++i) {
      const double lp = agent.log_prob(context, context.available_actions[i]);
      CHECK(lp == doctest::Approx(std::log(std::exp(scores[i]) / normalizer)).epsilon(1e-9));
      probability_sum += std::exp(lp);
    }
    CHECK(std::abs(probability_sum - 1.0) <= 1e-12);
  }
}

TEST_CASE("log_prob special cases") {
  const auto single = context_with({"only"});
  policy::LogLinearPolicy zero;
  CHECK(zero.log_prob(single, "only") == doctest::Approx(0.0));

  const auto four = context_with({"a", "b", "c", "d"});
  CHECK(zero.log_prob(four, "b") == doctest::Approx(std::log(0.25)));
  CHECK_THROWS_AS(zero.log_prob(four, "zzz"), core::DomainError);
}

TEST_CASE("act is deterministic at temperature 0 with lexicographic ties") {
  policy::LogLinearPolicy zero;  // all scores equal
  auto rng = util::make_rng(1);
  const auto context = context_with({"move up", "move down", "move left"});
  const auto result = zero.act(context, 0.0, rng);
  CHECK(result.action == "move down");  // lexicographically smallest
  CHECK(result.thought == "I will move down.");
  CHECK(result.log_prob == doctest::Approx(std::log(1.0 / 3.0)));
}

TEST_CASE("act at zero weights samples uniformly") {
  policy::LogLinearPolicy zero;
  auto rng = util::make_rng(2);
  const auto context = context_with({"a", "b", "c", "d"});
  std::map<std::string, int> counts;
  const int n = 40000;
  for (int i = 0; i < n; ++i) counts[zero.act(context, 1.0, rng).action] += 1;
  for (const auto& [action, count] : counts) {
    // 3 sigma around n/4
    const double sigma = std::sqrt(n * 0.25 * 0.75);
    CHECK(std::abs(count - n / 4.0) < 3.0 * sigma);
  }
}

TEST_CASE("temperature 0.7 sharpens the sampling distribution") {
  auto rng = util::make_rng(17);
  auto agent = random_policy(rng);
  const auto context = context_with({"alpha", "beta", "gamma"});

  // exact tempered distributions from log-probabilities
  std::vector<double> logp;
  for (const auto& action : context.available_actions) {
    logp.push_back(agent.log_prob(context, action));
  }
  auto tempered = [&](double temperature) {
    std::vector<double> p(logp.size());
    double total = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) total += p[i] = std::exp(logp[i] / temperature);
    for (double& value : p) value /= total;
    return p;
  };
  const auto p07 = tempered(0.7);
  const auto p10 = tempered(1.0);
  const std::size_t top =
      std::max_element(logp.begin(), logp.end()) - logp.begin();
  CHECK(p07[top] > p10[top]);  // sharper

  // Monte-Carlo frequency oracle within 3 sigma at temperature 0.7
  const int n = 100000;
  std::map<std::string, int> counts;
  for (int i = 0; i < n; ++i) counts[agent.act(context, 0.7, rng).action] += 1;
  for (std::size_t i = 0; i < context.available_actions.size(); ++i) {
    const double expected = n * p07[i];
    const double sigma = std::sqrt(n * p07[i] * (1.0 - p07[i]));
    CHECK(std::abs(counts[context.available_actions[i]] - expected) < 3.0 * sigma);
  }
}

TEST_CASE("argmax is invariant to temperature and positive scaling") {
  auto rng = util::make_rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    auto agent = random_policy(rng);
    const auto context = context_with({"a1", "b2", "c3", "d4"}, "obs " + std::to_string(trial));
    const auto base = agent.act(context, 0.0, rng).action;
    for (const double scale : {0.5, 2.0, 7.0}) {
      policy::LogLinearPolicy scaled = agent;
      for (auto& w : scaled.mutable_weights()) w *= scale;
      CHECK(scaled.act(context, 0.0, rng).action == base);
    }
  }
}

TEST_CASE("grad_log_prob matches central finite differences") {
  auto rng = util::make_rng(31);
  const double h = 1e-5;
  for (int trial = 0; trial < 100; ++trial) {
    const int k = 2 + static_cast<int>(util::next_below(rng, 4));
    std::vector<std::string> actions;
    for (int i = 0; i < k; ++i) actions.push_back("act " + std::to_string(i));
    auto context = context_with(actions, "state " + std::to_string(trial));
    auto agent = random_policy(rng, 0.5);
    const std::string action =
        context.available_actions[util::next_below(rng, context.available_actions.size())];

    const auto gradient = agent.grad_log_prob(context, action);
    std::set<std::uint32_t> active;
    for (const auto& candidate : context.available_actions) {
      const auto features = policy::featurize(context, candidate);
      active.insert(features.begin(), features.end());
    }
    for (const std::uint32_t index : active) {
      const double original = agent.weights()[index];
      agent.mutable_weights()[index] = original + h;
      const double plus = agent.log_prob(context, action);
      agent.mutable_weights()[index] = original - h;
      const double minus = agent.log_prob(context, action);
      agent.mutable_weights()[index] = original;
      const double estimate = (plus - minus) / (2.0 * h);
      double analytic = 0.0;
      for (const auto& [i, v] : gradient) {
        if (i == index) analytic = v;
      }
      const double denom = std::max({std::abs(analytic), std::abs(estimate), 1e-3});
      CHECK(std::abs(estimate - analytic) / denom < 1e-5);
    }
  }
}

TEST_CASE("grad_log_prob of a singleton action set is zero") {
  policy::LogLinearPolicy zero;
  const auto context = context_with({"only"});
  for (const auto& [index, value] : zero.grad_log_prob(context, "only")) {
    CHECK(value == doctest::Approx(0.0));
  }
}

TEST_CASE("expected score-function gradient is zero") {
  auto rng = util::make_rng(41);
  auto agent = random_policy(rng, 0.5);
  const auto context = context_with({"p", "q", "r"});
  std::map<std::uint32_t, double> accumulated;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const auto result = agent.act(context, 1.0, rng);
    for (const auto& [index, value] : agent.grad_log_prob(context, result.action)) {
      accumulated[index] += value;
    }
  }
  // per-coordinate 3-sigma band; gradient entries are bounded by 1
  for (const auto& [index, total] : accumulated) {
    CHECK(std::abs(total / n) < 3.0 / std::sqrt(static_cast<double>(n)));
  }
}

TEST_CASE("snapshots round-trip through JSON") {
  auto rng = util::make_rng(47);
  const auto agent = random_policy(rng);
  const auto restored = policy::LogLinearPolicy::from_json(agent.to_json());
  CHECK(restored.weights() == agent.weights());
  CHECK(restored.snapshot_hash() == agent.snapshot_hash());
  CHECK_THROWS_AS(policy::LogLinearPolicy::from_json("{"), core::ParseError);
  CHECK_THROWS_AS(policy::LogLinearPolicy::from_json("{\"dimension\": 4}"), core::ParseError);
}

TEST_CASE("action space resolution per environment") {
  const auto maze = policy::resolve_action_space("maze", "anything");
  CHECK(maze == std::vector<std::string>{"move down", "move left", "move right", "move up"});

  const auto wordle = policy::resolve_action_space(
      "wordle", "Guess it. The vocabulary is: crane, apple, stone.");
  CHECK(wordle == std::vector<std::string>{"a p p l e", "c r a n e", "s t o n e"});

  const auto craft = policy::resolve_action_space(
      "craft",
      "Crafting commands:\ncraft 9 gold nugget using 1 gold ingot\ncraft 1 golden sword using 1 "
      "stick, 2 gold ingot\nGoal: craft gold nugget.");
  CHECK(std::find(craft.begin(), craft.end(), "inventory") != craft.end());
  CHECK(std::find(craft.begin(), craft.end(), "get gold ingot") != craft.end());
  CHECK(std::find(craft.begin(), craft.end(), "get stick") != craft.end());
  CHECK(std::find(craft.begin(), craft.end(), "craft 9 gold nugget using 1 gold ingot") !=
        craft.end());
  CHECK(std::find(craft.begin(), craft.end(), "get gold nugget") == craft.end());
  CHECK(std::is_sorted(craft.begin(), craft.end()));
}

TEST_CASE("act requires a non-empty action set") {
  policy::LogLinearPolicy zero;
  auto rng = util::make_rng(1);
  auto context = context_with({});
  CHECK_THROWS_AS(zero.act(context, 0.0, rng), core::DomainError);
}
