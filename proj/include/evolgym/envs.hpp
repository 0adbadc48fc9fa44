#pragma once

#include <array>
#include <map>
#include <optional>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "evolgym/core.hpp"
#include "evolgym/protocol.hpp"

namespace evolgym::envs {

// --- Maze ---

struct MazeCell {
  int x = 1;  // row; moving down increases x
  int y = 1;  // column; moving right increases y
  bool operator==(const MazeCell&) const = default;
};

class MazeWorld final : public protocol::Environment {
 public:
  static constexpr int kMaxRounds = 15;

  MazeWorld(int size, std::vector<std::array<bool, 4>> blocked, MazeCell start, MazeCell goal);

  const protocol::EnvDescriptor& descriptor() const override;
  protocol::StepResult step(const std::string& action) override;
  std::vector<std::string> available_actions() const override;
  bool done() const override { return done_; }
  double trajectory_reward() const override { return reward_; }
  std::string fingerprint() const override;

  /// "The goal is at position gx, gy. Your current position is at position
  /// px, py. There are walls ..." for the current state.
  std::string state_text() const;
  std::string instruction_text() const;

  int size() const { return size_; }
  MazeCell position() const { return position_; }
  MazeCell goal() const { return goal_; }
  bool blocked(MazeCell cell, int direction) const;  // 0=up 1=down 2=left 3=right

  /// Optimal action sequence from `from` to the goal; empty if from == goal.
  std::vector<std::string> shortest_path(MazeCell from) const;

 private:
  int cell_index(MazeCell cell) const { return (cell.x - 1) * size_ + (cell.y - 1); }

  int size_;
  std::vector<std::array<bool, 4>> blocked_;
  MazeCell start_;
  MazeCell goal_;
  MazeCell position_;
  int rounds_used_ = 0;
  bool done_ = false;
  double reward_ = 0.0;
};

std::unique_ptr<MazeWorld> generate_maze(std::uint64_t seed, int size);

// --- Wordle ---

/// Count-limited two-pass scoring; returns five space-separated marks over
/// {b,y,g}, e.g. "b y g g b".
std::string wordle_feedback(const std::string& target, const std::string& guess);

class WordleWorld final : public protocol::Environment {
 public:
  static constexpr int kMaxRounds = 8;
  static constexpr int kMaxAttempts = 6;

  WordleWorld(std::vector<std::string> vocabulary, std::string target);

  const protocol::EnvDescriptor& descriptor() const override;
  protocol::StepResult step(const std::string& action) override;
  std::vector<std::string> available_actions() const override { return {}; }
  bool done() const override { return done_; }
  double trajectory_reward() const override { return reward_; }
  std::string fingerprint() const override;

  std::string instruction_text() const;
  const std::vector<std::string>& vocabulary() const { return vocabulary_; }
  const std::string& target() const { return target_; }
  int attempts_used() const { return attempts_used_; }

 private:
  std::vector<std::string> vocabulary_;  // sorted
  std::string target_;
  int attempts_used_ = 0;
  int rounds_used_ = 0;
  bool done_ = false;
  double reward_ = 0.0;
};

std::vector<std::string> load_vocabulary(const std::string& path);
std::unique_ptr<WordleWorld> generate_wordle(std::uint64_t seed, int vocab_size,
                                             const std::vector<std::string>& base_vocabulary);

// --- Craft ---

struct Recipe {
  std::string output;
  int output_count = 1;
  std::vector<std::pair<int, std::string>> inputs;

  std::string command() const;  // "craft 1 golden sword using 1 stick, 2 gold ingot"
  bool operator==(const Recipe&) const = default;
};

std::vector<Recipe> load_recipes(const std::string& path);
/// Parses one "craft N OUT using C1 IN1, C2 IN2" command; nullopt otherwise.
std::optional<Recipe> parse_recipe_command(const std::string& text);
/// Crafting depth per item: base items 0, otherwise 1 + max input depth.
std::map<std::string, int> recipe_depths(const std::vector<Recipe>& recipes);

class CraftWorld final : public protocol::Environment {
 public:
  static constexpr int kMaxRounds = 20;

  CraftWorld(std::vector<Recipe> recipes, std::string target);

  const protocol::EnvDescriptor& descriptor() const override;
  protocol::StepResult step(const std::string& action) override;
  std::vector<std::string> available_actions() const override;
  bool done() const override { return done_; }
  double trajectory_reward() const override { return reward_; }
  std::string fingerprint() const override;

  std::string instruction_text() const;
  const std::vector<Recipe>& recipes() const { return recipes_; }
  const std::string& target() const { return target_; }
  const std::map<std::string, int>& inventory() const { return inventory_; }
  const std::set<std::string>& base_items() const { return base_items_; }

 private:
  std::vector<Recipe> recipes_;
  std::string target_;
  std::set<std::string> base_items_;  // inputs never produced by a listed recipe
  std::map<std::string, int> inventory_;
  int rounds_used_ = 0;
  bool done_ = false;
  double reward_ = 0.0;
};

std::unique_ptr<CraftWorld> generate_craft(std::uint64_t seed, int max_depth,
                                           const std::vector<Recipe>& global_recipes);

/// Action sequence that crafts `target` from an empty inventory using the
/// instance's recipes and base items; used by the expert oracle and tests.
std::vector<std::string> craft_plan(const std::vector<Recipe>& recipes,
                                    const std::set<std::string>& base_items,
                                    const std::string& target);

// --- Instance generation & registry ---

struct Assets {
  std::vector<std::string> wordle_vocabulary;
  std::vector<Recipe> craft_recipes;
};

Assets load_assets(const std::string& assets_dir);
std::string default_assets_dir();

int default_difficulty(const std::string& env_name);

const protocol::EnvDescriptor& maze_descriptor();
const protocol::EnvDescriptor& wordle_descriptor();
const protocol::EnvDescriptor& craft_descriptor();
const protocol::EnvDescriptor& builtin_descriptor(const std::string& env_name);

/// Deterministic in (env, seed, difficulty); the instruction's text is the
/// first observation served for the instance.
std::pair<core::Instruction, std::unique_ptr<protocol::Environment>> generate_instance(
    const std::string& env_name, std::uint64_t seed, int difficulty, const Assets& assets);

/// Registers maze/wordle/craft with the given per-env difficulty.
void register_builtin(protocol::EnvRegistry& registry, const Assets& assets,
                      const std::map<std::string, int>& difficulties);

}  // namespace evolgym::envs
