#include "evolgym/core.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_set>

#include <json.hpp>

namespace evolgym::core {

using nlohmann::json;

std::string to_string(Split split) {
  switch (split) {
    case Split::kBc: return "bc";
    case Split::kEvolve: return "evolve";
    case Split::kEval: return "eval";
  }
  throw DomainError("invalid split value");
}

Split split_from_string(const std::string& text) {
  if (text == "bc") return Split::kBc;
  if (text == "evolve") return Split::kEvolve;
  if (text == "eval") return Split::kEval;
  throw ParseError("split", "unknown split: " + text);
}

std::string to_string(DoneReason reason) {
  switch (reason) {
    case DoneReason::kSuccess: return "success";
    case DoneReason::kFailure: return "failure";
    case DoneReason::kMaxRounds: return "max_rounds";
    case DoneReason::kParseError: return "parse_error";
  }
  throw DomainError("invalid done_reason value");
}

DoneReason done_reason_from_string(const std::string& text) {
  if (text == "success") return DoneReason::kSuccess;
  if (text == "failure") return DoneReason::kFailure;
  if (text == "max_rounds") return DoneReason::kMaxRounds;
  if (text == "parse_error") return DoneReason::kParseError;
  throw ParseError("done_reason", "unknown done_reason: " + text);
}

std::string to_string(const Provenance& provenance) {
  if (provenance.expert) return "expert";
  return "sampled:" + std::to_string(provenance.iteration);
}

Provenance provenance_from_string(const std::string& text) {
  if (text == "expert") return Provenance::Expert();
  if (text.rfind("sampled:", 0) == 0) {
    const std::string suffix = text.substr(8);
    try {
      std::size_t used = 0;
      const int iteration = std::stoi(suffix, &used);
      if (used == suffix.size() && iteration >= 0) return Provenance::Sampled(iteration);
    } catch (const std::exception&) {
    }
  }
  throw ParseError("provenance", "unknown provenance: " + text);
}

const Instruction* InstructionSet::find(const std::string& env_name,
                                        const std::string& instruction_id) const {
  for (const auto& instruction : instructions) {
    if (instruction.env_name == env_name && instruction.instruction_id == instruction_id) {
      return &instruction;
    }
  }
  return nullptr;
}

std::vector<const Instruction*> InstructionSet::by_split(Split split) const {
  std::vector<const Instruction*> result;
  for (const auto& instruction : instructions) {
    if (instruction.split == split) result.push_back(&instruction);
  }
  return result;
}

std::vector<const Instruction*> InstructionSet::evolve_pool() const {
  std::vector<const Instruction*> result;
  for (const auto& instruction : instructions) {
    if (instruction.split == Split::kBc || instruction.split == Split::kEvolve) {
      result.push_back(&instruction);
    }
  }
  return result;
}

void InstructionSet::validate() const {
  std::unordered_set<std::string> seen;
  for (const auto& instruction : instructions) {
    const std::string key = instruction.env_name + "/" + instruction.instruction_id;
    if (!seen.insert(key).second) {
      throw DomainError("duplicate instruction id: " + key);
    }
  }
}

namespace {

const json& require_field(const json& object, const char* field) {
  auto it = object.find(field);
  if (it == object.end()) {
    throw ParseError(field, std::string("missing field: ") + field);
  }
  return *it;
}

std::string require_string(const json& object, const char* field) {
  const json& value = require_field(object, field);
  if (!value.is_string()) {
    throw ParseError(field, std::string("field is not a string: ") + field);
  }
  return value.get<std::string>();
}

double require_number(const json& object, const char* field) {
  const json& value = require_field(object, field);
  if (!value.is_number()) {
    throw ParseError(field, std::string("field is not a number: ") + field);
  }
  return value.get<double>();
}

}  // namespace

std::string serialize_trajectory(const Trajectory& trajectory) {
  json steps = json::array();
  for (const auto& step : trajectory.steps) {
    steps.push_back({{"thought", step.thought},
                     {"action", step.action},
                     {"observation", step.observation}});
  }
  const json record = {{"env", trajectory.env_name},
                       {"id", trajectory.instruction_id},
                       {"steps", steps},
                       {"reward", trajectory.reward},
                       {"done_reason", to_string(trajectory.done_reason)},
                       {"provenance", to_string(trajectory.provenance)}};
  return record.dump();
}

Trajectory parse_trajectory(const std::string& line) {
  json record;
  try {
    record = json::parse(line);
  } catch (const json::parse_error& error) {
    throw ParseError("", std::string("malformed trajectory line: ") + error.what());
  }
  if (!record.is_object()) throw ParseError("", "trajectory line is not a JSON object");

  Trajectory trajectory;
  trajectory.env_name = require_string(record, "env");
  trajectory.instruction_id = require_string(record, "id");
  trajectory.reward = require_number(record, "reward");
  if (trajectory.reward < 0.0 || trajectory.reward > 1.0) {
    throw ParseError("reward", "reward out of [0,1]: " + std::to_string(trajectory.reward));
  }
  trajectory.done_reason = done_reason_from_string(require_string(record, "done_reason"));
  trajectory.provenance = provenance_from_string(require_string(record, "provenance"));

  const json& steps = require_field(record, "steps");
  if (!steps.is_array() || steps.empty()) {
    throw ParseError("steps", "steps must be a non-empty array");
  }
  for (const auto& item : steps) {
    if (!item.is_object()) throw ParseError("steps", "step is not an object");
    Step step;
    step.thought = require_string(item, "thought");
    step.action = require_string(item, "action");
    step.observation = require_string(item, "observation");
    trajectory.steps.push_back(std::move(step));
  }
  return trajectory;
}

std::string serialize_instruction(const Instruction& instruction) {
  const json record = {{"env", instruction.env_name},
                       {"id", instruction.instruction_id},
                       {"text", instruction.text},
                       {"seed", instruction.seed},
                       {"split", to_string(instruction.split)}};
  return record.dump();
}

Instruction parse_instruction(const std::string& line) {
  json record;
  try {
    record = json::parse(line);
  } catch (const json::parse_error& error) {
    throw ParseError("", std::string("malformed instruction line: ") + error.what());
  }
  if (!record.is_object()) throw ParseError("", "instruction line is not a JSON object");

  Instruction instruction;
  instruction.env_name = require_string(record, "env");
  instruction.instruction_id = require_string(record, "id");
  instruction.text = require_string(record, "text");
  const json& seed = require_field(record, "seed");
  if (!seed.is_number_integer() && !seed.is_number_unsigned()) {
    throw ParseError("seed", "seed must be an integer");
  }
  instruction.seed = seed.get<std::uint64_t>();
  instruction.split = split_from_string(require_string(record, "split"));
  return instruction;
}

std::vector<Trajectory> load_trajectories(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DomainError("cannot open trajectory file: " + path);
  std::vector<Trajectory> records;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    records.push_back(parse_trajectory(line));
  }
  return records;
}

void save_trajectories(const std::string& path, const std::vector<Trajectory>& records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DomainError("cannot write trajectory file: " + path);
  for (const auto& record : records) {
    out << serialize_trajectory(record) << '\n';
  }
}

InstructionSet load_instruction_set(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DomainError("cannot open instruction file: " + path);
  InstructionSet set;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    set.instructions.push_back(parse_instruction(line));
  }
  set.validate();
  return set;
}

InstructionSet load_instruction_sets(const std::vector<std::string>& paths) {
  InstructionSet merged;
  for (const auto& path : paths) {
    InstructionSet set = load_instruction_set(path);
    merged.instructions.insert(merged.instructions.end(), set.instructions.begin(),
                               set.instructions.end());
  }
  merged.validate();
  return merged;
}

void save_instruction_set(const std::string& path, const InstructionSet& set) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DomainError("cannot write instruction file: " + path);
  for (const auto& instruction : set.instructions) {
    out << serialize_instruction(instruction) << '\n';
  }
}

int binarize_reward(double reward) {
  constexpr double kTolerance = 1e-12;
  if (!std::isfinite(reward) || reward < -kTolerance || reward > 1.0 + kTolerance) {
    throw DomainError("reward outside [0,1]: " + std::to_string(reward));
  }
  return std::abs(reward - 1.0) <= kTolerance ? 1 : 0;
}

std::string to_string(MergeStrategy strategy) {
  return strategy == MergeStrategy::kWithInitial ? "with_initial" : "with_previous";
}

MergeStrategy merge_strategy_from_string(const std::string& text) {
  if (text == "with_initial") return MergeStrategy::kWithInitial;
  if (text == "with_previous") return MergeStrategy::kWithPrevious;
  throw ParseError("merge_strategy", "unknown merge strategy: " + text);
}

TrajectoryDataset merge_datasets(MergeStrategy strategy, const TrajectoryDataset& d_s,
                                 const TrajectoryDataset& d_prev, const TrajectoryDataset& d_new) {
  TrajectoryDataset merged;
  merged.records = d_new.records;
  const TrajectoryDataset& extra = strategy == MergeStrategy::kWithInitial ? d_s : d_prev;
  merged.records.insert(merged.records.end(), extra.records.begin(), extra.records.end());
  std::stable_sort(merged.records.begin(), merged.records.end(),
                   [](const Trajectory& a, const Trajectory& b) {
                     return std::tie(a.env_name, a.instruction_id) <
                                std::tie(b.env_name, b.instruction_id) ||
                            (std::tie(a.env_name, a.instruction_id) ==
                                 std::tie(b.env_name, b.instruction_id) &&
                             to_string(a.provenance) < to_string(b.provenance));
                   });
  merged.label = d_new.label + "+" + (strategy == MergeStrategy::kWithInitial ? d_s.label : d_prev.label);
  return merged;
}

}  // namespace evolgym::core
