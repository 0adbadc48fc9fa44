#include <cstdlib>
#include <memory>

#include "evolgym/envs.hpp"
#include "evolgym/util.hpp"

namespace evolgym::envs {

Assets load_assets(const std::string& assets_dir) {
  Assets assets;
  assets.wordle_vocabulary = load_vocabulary(assets_dir + "/wordle_vocab.txt");
  assets.craft_recipes = load_recipes(assets_dir + "/recipes.jsonl");
  return assets;
}

std::string default_assets_dir() {
  if (const char* dir = std::getenv("EVOLGYM_ASSETS")) return dir;
#ifdef EVOLGYM_DEFAULT_ASSET_DIR
  return EVOLGYM_DEFAULT_ASSET_DIR;
#else
  return "assets";
#endif
}

int default_difficulty(const std::string& env_name) {
  if (env_name == "maze") return 7;     // grid size
  if (env_name == "wordle") return 100; // instance vocabulary size
  if (env_name == "craft") return 3;    // maximum recipe depth
  throw core::DomainError("unknown environment: " + env_name);
}

std::pair<core::Instruction, std::unique_ptr<protocol::Environment>> generate_instance(
    const std::string& env_name, std::uint64_t seed, int difficulty, const Assets& assets) {
  std::unique_ptr<protocol::Environment> world;
  std::string text;
  if (env_name == "maze") {
    auto maze = generate_maze(seed, difficulty);
    text = maze->instruction_text();
    world = std::move(maze);
  } else if (env_name == "wordle") {
    auto wordle = generate_wordle(seed, difficulty, assets.wordle_vocabulary);
    text = wordle->instruction_text();
    world = std::move(wordle);
  } else if (env_name == "craft") {
    auto craft = generate_craft(seed, difficulty, assets.craft_recipes);
    text = craft->instruction_text();
    world = std::move(craft);
  } else {
    throw core::DomainError("unknown environment: " + env_name);
  }

  core::Instruction instruction;
  instruction.env_name = env_name;
  instruction.instruction_id = env_name + "-seed-" + std::to_string(seed);
  instruction.text = std::move(text);
  instruction.seed = seed;
  instruction.split = core::Split::kEvolve;
  return {std::move(instruction), std::move(world)};
}

const protocol::EnvDescriptor& builtin_descriptor(const std::string& env_name) {
  if (env_name == "maze") return maze_descriptor();
  if (env_name == "wordle") return wordle_descriptor();
  if (env_name == "craft") return craft_descriptor();
  throw core::DomainError("unknown environment: " + env_name);
}

void register_builtin(protocol::EnvRegistry& registry, const Assets& assets,
                      const std::map<std::string, int>& difficulties) {
  auto shared_assets = std::make_shared<Assets>(assets);
  for (const std::string& env_name : {"maze", "wordle", "craft"}) {
    int difficulty = default_difficulty(env_name);
    if (auto it = difficulties.find(env_name); it != difficulties.end()) difficulty = it->second;

    registry.register_env(
        env_name, builtin_descriptor(env_name),
        [env_name, difficulty, shared_assets](std::uint64_t seed,
                                              core::Instruction* instruction_out)
            -> std::unique_ptr<protocol::Environment> {
          auto [instruction, world] = generate_instance(env_name, seed, difficulty, *shared_assets);
          if (instruction_out != nullptr) *instruction_out = std::move(instruction);
          return std::move(world);
        });
  }
}

}  // namespace evolgym::envs
