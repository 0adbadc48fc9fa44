#include <algorithm>
#include <fstream>
#include <optional>
#include <functional>
#include <stdexcept>

#include <json.hpp>

#include "evolgym/envs.hpp"
#include "evolgym/util.hpp"

namespace evolgym::envs {

namespace {


struct ParsedCraft {
  bool has_count = false;
  int count = 1;
  std::string output;
  std::vector<std::pair<int, std::string>> inputs;
};

bool parse_count_item(const std::string& text, int* count, std::string* item) {
  const std::string trimmed = util::trim(text);
  if (trimmed.empty()) return false;
  const std::size_t space = trimmed.find(' ');
  const std::string head = trimmed.substr(0, space);
  if (!head.empty() && head.size() <= 6 &&
      head.find_first_not_of("0123456789") == std::string::npos) {
    if (space == std::string::npos) return false;  // bare count with no item
    *count = std::stoi(head);
    *item = util::trim(trimmed.substr(space + 1));
  } else {
    *count = 1;
    *item = trimmed;
  }
  return !item->empty() && *count > 0;
}

bool parse_craft_command(const std::string& normalized, ParsedCraft* parsed) {
  if (normalized.rfind("craft ", 0) != 0) return false;
  const std::string body = normalized.substr(6);
  const std::size_t using_pos = body.find(" using ");
  if (using_pos == std::string::npos) return false;

  const std::string output_part = util::trim(body.substr(0, using_pos));
  const std::size_t space = output_part.find(' ');
  const std::string head = output_part.substr(0, space);
  if (!head.empty() && head.size() <= 6 &&
      head.find_first_not_of("0123456789") == std::string::npos && space != std::string::npos) {
    parsed->has_count = true;
    parsed->count = std::stoi(head);
    parsed->output = util::trim(output_part.substr(space + 1));
  } else {
    parsed->has_count = false;
    parsed->count = 1;
    parsed->output = output_part;
  }
  if (parsed->output.empty()) return false;

  for (const std::string& piece : util::split(body.substr(using_pos + 7), ',')) {
    int count = 0;
    std::string item;
    if (!parse_count_item(piece, &count, &item)) return false;
    parsed->inputs.emplace_back(count, item);
  }
  return !parsed->inputs.empty();
}

std::vector<std::pair<int, std::string>> sorted_inputs(
    std::vector<std::pair<int, std::string>> inputs) {
  std::sort(inputs.begin(), inputs.end(),
            [](const auto& a, const auto& b) { return a.second < b.second; });
  return inputs;
}

}  // namespace

const protocol::EnvDescriptor& craft_descriptor() {
  static const protocol::EnvDescriptor descriptor{
      "craft", CraftWorld::kMaxRounds, protocol::RewardKind::kBinary,
      "You are given a few useful crafting recipes to craft items in Minecraft. Crafting commands "
      "are of the format \"craft [target object] using [input ingredients]\". Every round I will "
      "give you an observation, you have to respond to an action based on the state and "
      "instruction. You can \"get\" an object (ingredients) from the inventory or the "
      "environment, look up the game \"inventory\" by inventory, or \"craft\" (target) using any "
      "of the crafting commands. You can use ONLY these crafting commands provided, do not use "
      "your own crafting commands. Your response should use the following format:\n\nThought: "
      "...\nAction: ..."};
  return descriptor;
}

std::optional<Recipe> parse_recipe_command(const std::string& text) {
  ParsedCraft parsed;
  if (!parse_craft_command(util::normalize_ws(text), &parsed) || !parsed.has_count) {
    return std::nullopt;
  }
  Recipe recipe;
  recipe.output = parsed.output;
  recipe.output_count = parsed.count;
  recipe.inputs = sorted_inputs(parsed.inputs);
  return recipe;
}

std::string Recipe::command() const {
  std::string text = "craft " + std::to_string(output_count) + " " + output + " using ";
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (i > 0) text += ", ";
    text += std::to_string(inputs[i].first) + " " + inputs[i].second;
  }
  return text;
}

std::vector<Recipe> load_recipes(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw core::DomainError("cannot open recipe file: " + path);
  std::vector<Recipe> recipes;
  std::string line;
  while (std::getline(in, line)) {
    if (util::trim(line).empty()) continue;
    nlohmann::json record;
    try {
      record = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& error) {
      throw core::ParseError("", std::string("malformed recipe line: ") + error.what());
    }
    Recipe recipe;
    recipe.output = record.at("output").get<std::string>();
    recipe.output_count = record.at("count").get<int>();
    for (const auto& input : record.at("inputs")) {
      recipe.inputs.emplace_back(input.at("count").get<int>(),
                                 input.at("item").get<std::string>());
    }
    recipe.inputs = sorted_inputs(std::move(recipe.inputs));
    recipes.push_back(std::move(recipe));
  }
  return recipes;
}

std::map<std::string, int> recipe_depths(const std::vector<Recipe>& recipes) {
  std::map<std::string, int> depth;
  for (const auto& recipe : recipes) {
    for (const auto& [count, item] : recipe.inputs) depth.emplace(item, 0);
  }
  // Items produced by a recipe get 1 + max input depth, iterated to fixpoint.
  bool changed = true;
  int guard = 0;
  while (changed) {
    if (++guard > static_cast<int>(recipes.size()) + 2) {
      throw core::DomainError("recipe graph contains a cycle");
    }
    changed = false;
    for (const auto& recipe : recipes) {
      int max_input = 0;
      bool ready = true;
      for (const auto& [count, item] : recipe.inputs) {
        auto it = depth.find(item);
        if (it == depth.end()) {
          ready = false;
          break;
        }
        max_input = std::max(max_input, it->second);
      }
      if (!ready) continue;
      const int candidate = max_input + 1;
      auto it = depth.find(recipe.output);
      if (it == depth.end() || it->second != candidate) {
        if (it != depth.end() && it->second > candidate) continue;
        depth[recipe.output] = candidate;
        changed = true;
      }
    }
  }
  // Anything that is an output is not depth 0 even if also listed as input.
  return depth;
}

CraftWorld::CraftWorld(std::vector<Recipe> recipes, std::string target)
    : recipes_(std::move(recipes)), target_(std::move(target)) {
  std::set<std::string> outputs;
  for (const auto& recipe : recipes_) outputs.insert(recipe.output);
  for (const auto& recipe : recipes_) {
    for (const auto& [count, item] : recipe.inputs) {
      if (outputs.count(item) == 0) base_items_.insert(item);
    }
  }
}

const protocol::EnvDescriptor& CraftWorld::descriptor() const { return craft_descriptor(); }

std::string CraftWorld::instruction_text() const {
  std::string text = "Crafting commands:\n";
  for (const auto& recipe : recipes_) {
    text += recipe.command() + "\n";
  }
  text += "Goal: craft " + target_ + ".";
  return text;
}

protocol::StepResult CraftWorld::step(const std::string& action) {
  if (done_) throw std::logic_error("step on finished craft world");
  rounds_used_ += 1;

  protocol::StepResult result;
  std::string normalized = util::normalize_ws(action);
  if (!normalized.empty() && normalized.back() == '.') normalized.pop_back();

  if (normalized == "inventory") {
    if (inventory_.empty()) {
      result.observation = "Inventory: empty.";
    } else {
      std::vector<std::string> entries;
      for (const auto& [item, count] : inventory_) {
        entries.push_back(item + " (" + std::to_string(count) + ")");
      }
      result.observation = "Inventory: " + util::join(entries, ", ") + ".";
    }
  } else if (normalized.rfind("get ", 0) == 0) {
    const std::string item = util::trim(normalized.substr(4));
    if (base_items_.count(item) > 0) {
      inventory_[item] += 1;
      result.observation = "Got 1 " + item;
    } else {
      result.observation = "Could not find " + item;
    }
  } else if (normalized.rfind("craft ", 0) == 0) {
    ParsedCraft parsed;
    if (!parse_craft_command(normalized, &parsed)) {
      result.observation = "Invalid action.";
    } else {
      const auto wanted = sorted_inputs(parsed.inputs);
      const Recipe* match = nullptr;
      for (const auto& recipe : recipes_) {
        if (recipe.output != parsed.output) continue;
        if (parsed.has_count && parsed.count != recipe.output_count) continue;
        if (recipe.inputs != wanted) continue;
        match = &recipe;
        break;
      }
      if (match == nullptr) {
        result.observation = "Could not find a matching recipe for " + parsed.output + ".";
      } else {
        bool covered = true;
        for (const auto& [count, item] : match->inputs) {
          auto it = inventory_.find(item);
          if (it == inventory_.end() || it->second < count) {
            covered = false;
            break;
          }
        }
        if (!covered) {
          result.observation = "Could not craft " + match->output + ": missing ingredients.";
        } else {
          for (const auto& [count, item] : match->inputs) {
            inventory_[item] -= count;
            if (inventory_[item] == 0) inventory_.erase(item);
          }
          inventory_[match->output] += match->output_count;
          result.observation =
              "Crafted " + std::to_string(match->output_count) + " " + match->output + ".";
          if (match->output == target_) {
            done_ = true;
            reward_ = 1.0;
            result.step_reward = 1.0;
          }
        }
      }
    }
  } else {
    result.observation = "Invalid action.";
  }

  if (!done_ && rounds_used_ >= kMaxRounds) {
    done_ = true;
    reward_ = 0.0;
  }
  result.done = done_;
  result.trajectory_reward_so_far = reward_;
  result.available_actions = available_actions();
  return result;
}

std::vector<std::string> CraftWorld::available_actions() const {
  std::vector<std::string> actions{"inventory"};
  for (const auto& item : base_items_) actions.push_back("get " + item);
  for (const auto& recipe : recipes_) actions.push_back(recipe.command());
  std::sort(actions.begin(), actions.end());
  return actions;
}

std::string CraftWorld::fingerprint() const {
  std::string text = "craft:target=" + target_ + ";rounds=" + std::to_string(rounds_used_) + ";inv=";
  for (const auto& [item, count] : inventory_) {
    text += item + "*" + std::to_string(count) + ";";
  }
  return text;
}

std::vector<std::string> craft_plan(const std::vector<Recipe>& recipes,
                                    const std::set<std::string>& base_items,
                                    const std::string& target) {
  std::map<std::string, const Recipe*> by_output;
  for (const auto& recipe : recipes) by_output[recipe.output] = &recipe;

  std::vector<std::string> plan;
  std::set<std::string> in_progress;
  std::function<void(const std::string&, int)> acquire = [&](const std::string& item, int needed) {
    if (base_items.count(item) > 0) {
      for (int i = 0; i < needed; ++i) plan.push_back("get " + item);
      return;
    }
    auto it = by_output.find(item);
    if (it == by_output.end()) {
      throw core::DomainError("craft plan: item is neither base nor craftable: " + item);
    }
    if (!in_progress.insert(item).second) {
      throw core::DomainError("craft plan: recipe cycle through " + item);
    }
    const Recipe& recipe = *it->second;
    const int crafts = (needed + recipe.output_count - 1) / recipe.output_count;
    for (const auto& [count, input] : recipe.inputs) acquire(input, count * crafts);
    for (int i = 0; i < crafts; ++i) plan.push_back(recipe.command());
    in_progress.erase(item);
  };
  acquire(target, 1);
  return plan;
}

std::unique_ptr<CraftWorld> generate_craft(std::uint64_t seed, int max_depth,
                                           const std::vector<Recipe>& global_recipes) {
  if (max_depth < 1 || max_depth > 4) {
    throw core::DomainError("craft depth must be in [1,4], got " + std::to_string(max_depth));
  }
  auto rng = util::make_rng(util::mix(util::mix(seed, "craft"), static_cast<std::uint64_t>(max_depth)));
  const auto depths = recipe_depths(global_recipes);

  const int instance_depth = 1 + static_cast<int>(util::next_below(rng, max_depth));
  std::vector<std::string> candidates;
  for (const auto& [item, depth] : depths) {
    if (depth == instance_depth) candidates.push_back(item);
  }
  if (candidates.empty()) {
    throw core::DomainError("no craftable item at depth " + std::to_string(instance_depth));
  }
  const std::string target = candidates[util::next_below(rng, candidates.size())];

  std::map<std::string, const Recipe*> by_output;
  for (const auto& recipe : global_recipes) by_output[recipe.output] = &recipe;

  // Dependency closure of the target plus its raw ingredients.
  std::vector<Recipe> closure;
  std::set<std::string> closure_outputs;
  std::set<std::string> closure_inputs;
  std::function<void(const std::string&)> expand = [&](const std::string& item) {
    auto it = by_output.find(item);
    if (it == by_output.end() || closure_outputs.count(item) > 0) return;
    closure_outputs.insert(item);
    closure.push_back(*it->second);
    for (const auto& [count, input] : it->second->inputs) {
      closure_inputs.insert(input);
      expand(input);
    }
  };
  expand(target);

  // Distractor commands; none may shadow an ingredient the plan must `get`.
  std::vector<Recipe> distractors;
  for (const auto& recipe : global_recipes) {
    if (closure_outputs.count(recipe.output) > 0) continue;
    if (closure_inputs.count(recipe.output) > 0) continue;
    distractors.push_back(recipe);
  }
  util::seeded_shuffle(distractors, rng);
  const std::size_t keep = std::min<std::size_t>(distractors.size(), 3 + util::next_below(rng, 4));
  distractors.resize(keep);

  std::vector<Recipe> instance = closure;
  instance.insert(instance.end(), distractors.begin(), distractors.end());
  util::seeded_shuffle(instance, rng);
  return std::make_unique<CraftWorld>(std::move(instance), target);
}

}  // namespace evolgym::envs
