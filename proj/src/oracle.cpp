#include "evolgym/oracle.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <map>
#include <set>

#include "evolgym/envs.hpp"
#include "evolgym/util.hpp"

namespace evolgym::oracle {

namespace {

using policy::ActResult;
using policy::PolicyContext;

/// Pulls "x, y" out of "... {anchor} X, Y ..." text.
bool parse_position(const std::string& text, const std::string& anchor, int* x, int* y) {
  const std::size_t pos = text.rfind(anchor);
  if (pos == std::string::npos) return false;
  const char* cursor = text.c_str() + pos + anchor.size();
  char* end = nullptr;
  const long px = std::strtol(cursor, &end, 10);
  if (end == cursor) return false;
  cursor = end;
  while (*cursor == ',' || *cursor == ' ') ++cursor;
  const long py = std::strtol(cursor, &end, 10);
  if (end == cursor) return false;
  *x = static_cast<int>(px);
  *y = static_cast<int>(py);
  return true;
}

class MazeOracle final : public policy::Policy {
 public:
  explicit MazeOracle(int size) : size_(size) {}

  ActResult act(const core::Instruction& instruction, const PolicyContext& context, double,
                std::mt19937_64&) override {
    const auto world = envs::generate_maze(instruction.seed, size_);
    int x = 0, y = 0;
    if (!parse_position(context.current_observation, "Your current position is at position ", &x,
                        &y) &&
        !parse_position(context.instruction, "Your current position is at position ", &x, &y)) {
      throw core::DomainError("maze oracle cannot locate the current position");
    }
    const auto path = world->shortest_path(envs::MazeCell{x, y});
    if (path.empty()) {
      throw core::DomainError("maze oracle asked to act at the goal");
    }
    return ActResult{"I will " + path.front() + ".", path.front(), 0.0};
  }

 private:
  int size_;
};

class WordleOracle final : public policy::Policy {
 public:
  ActResult act(const core::Instruction&, const PolicyContext& context, double,
                std::mt19937_64&) override {
    const std::vector<std::string> vocabulary = parse_vocabulary(context.instruction);

    // Candidates still consistent with every scored (guess, feedback) pair.
    std::vector<std::string> candidates = vocabulary;
    for (const core::Step& step : context.history) {
      if (step.observation == "invalid word" || step.observation.empty()) continue;
      std::string guess;
      for (const char c : step.action) {
        if (!std::isspace(static_cast<unsigned char>(c))) guess.push_back(c);
      }
      if (guess.size() != 5) continue;
      std::vector<std::string> next;
      for (const std::string& word : candidates) {
        if (envs::wordle_feedback(word, guess) == step.observation) next.push_back(word);
      }
      if (!next.empty()) candidates = std::move(next);
    }

    std::string best = candidates.front();
    if (candidates.size() > 1) {
      double best_entropy = -1.0;
      bool best_consistent = false;
      for (const std::string& guess : vocabulary) {
        std::map<std::string, int> buckets;
        for (const std::string& word : candidates) {
          buckets[envs::wordle_feedback(word, guess)] += 1;
        }
        double entropy = 0.0;
        for (const auto& [pattern, count] : buckets) {
          const double p = static_cast<double>(count) / static_cast<double>(candidates.size());
          entropy -= p * std::log(p);
        }
        const bool consistent =
            std::binary_search(candidates.begin(), candidates.end(), guess);
        if (entropy > best_entropy + 1e-12 ||
            (entropy > best_entropy - 1e-12 && consistent && !best_consistent)) {
          best_entropy = entropy;
          best = guess;
          best_consistent = consistent;
        }
      }
    }

    std::string spaced;
    for (std::size_t i = 0; i < best.size(); ++i) {
      if (i > 0) spaced.push_back(' ');
      spaced.push_back(best[i]);
    }
    return ActResult{"I will guess " + spaced + ".", spaced, 0.0};
  }

 private:
  static std::vector<std::string> parse_vocabulary(const std::string& instruction_text) {
    const std::string marker = "The vocabulary is: ";
    const std::size_t pos = instruction_text.find(marker);
    if (pos == std::string::npos) {
      throw core::DomainError("wordle oracle needs the vocabulary listing");
    }
    std::string listing = instruction_text.substr(pos + marker.size());
    if (!listing.empty() && listing.back() == '.') listing.pop_back();
    std::vector<std::string> words;
    for (const std::string& entry : util::split(listing, ',')) {
      const std::string word = util::trim(entry);
      if (!word.empty()) words.push_back(word);
    }
    std::sort(words.begin(), words.end());
    return words;
  }
};

class CraftOracle final : public policy::Policy {
 public:
  ActResult act(const core::Instruction&, const PolicyContext& context, double,
                std::mt19937_64&) override {
    std::vector<envs::Recipe> recipes;
    std::string target;
    for (const std::string& line : util::split(context.instruction, '\n')) {
      const std::string trimmed = util::trim(line);
      if (auto recipe = envs::parse_recipe_command(trimmed)) {
        recipes.push_back(std::move(*recipe));
      } else if (trimmed.rfind("Goal: craft ", 0) == 0) {
        target = trimmed.substr(12);
        if (!target.empty() && target.back() == '.') target.pop_back();
      }
    }
    if (recipes.empty() || target.empty()) {
      throw core::DomainError("craft oracle cannot read the instruction");
    }
    std::set<std::string> outputs;
    for (const auto& recipe : recipes) outputs.insert(recipe.output);
    std::set<std::string> base;
    for (const auto& recipe : recipes) {
      for (const auto& [count, item] : recipe.inputs) {
        if (outputs.count(item) == 0) base.insert(item);
      }
    }
    const std::vector<std::string> plan = envs::craft_plan(recipes, base, target);
    const std::size_t position = context.history.size();
    const std::string action = position < plan.size() ? plan[position] : "inventory";
    return ActResult{"I will " + action + ".", action, 0.0};
  }
};

class MultiOracle final : public policy::Policy {
 public:
  explicit MultiOracle(const std::map<std::string, int>& difficulties) {
    for (const auto& [env_name, difficulty] : difficulties) {
      oracles_[env_name] = make_oracle(env_name, difficulty);
    }
  }

  ActResult act(const core::Instruction& instruction, const PolicyContext& context,
                double temperature, std::mt19937_64& rng) override {
    auto it = oracles_.find(instruction.env_name);
    if (it == oracles_.end()) {
      throw core::DomainError("no oracle for environment: " + instruction.env_name);
    }
    return it->second->act(instruction, context, temperature, rng);
  }

 private:
  std::map<std::string, std::unique_ptr<policy::Policy>> oracles_;
};

}  // namespace

std::unique_ptr<policy::Policy> make_oracle(const std::string& env_name, int difficulty) {
  if (env_name == "maze") return std::make_unique<MazeOracle>(difficulty);
  if (env_name == "wordle") return std::make_unique<WordleOracle>();
  if (env_name == "craft") return std::make_unique<CraftOracle>();
  throw core::DomainError("no oracle for environment: " + env_name);
}

std::unique_ptr<policy::Policy> make_multi_oracle(const std::map<std::string, int>& difficulties) {
  return std::make_unique<MultiOracle>(difficulties);
}

}  // namespace evolgym::oracle
