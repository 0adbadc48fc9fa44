#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace evolgym::core {

/// Raised when a serialized record cannot be decoded. `field` names the
/// offending field ("" for framing-level problems such as truncated JSON).
class ParseError : public std::runtime_error {
 public:
  ParseError(std::string field, const std::string& message)
      : std::runtime_error(message), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

class DomainError : public std::runtime_error {
 public:
  explicit DomainError(const std::string& message) : std::runtime_error(message) {}
};

enum class Split { kBc, kEvolve, kEval };

std::string to_string(Split split);
Split split_from_string(const std::string& text);

struct Instruction {
  std::string env_name;
  std::string instruction_id;
  std::string text;
  std::uint64_t seed = 0;
  Split split = Split::kEvolve;

  bool operator==(const Instruction&) const = default;
};

struct Step {
  std::string thought;
  std::string action;
  std::string observation;  // empty on a terminal step when the env returns none

  bool operator==(const Step&) const = default;
};

enum class DoneReason { kSuccess, kFailure, kMaxRounds, kParseError };

std::string to_string(DoneReason reason);
DoneReason done_reason_from_string(const std::string& text);

/// Either expert data or data sampled at evolution iteration `iteration`.
struct Provenance {
  bool expert = true;
  int iteration = 0;  // meaningful only when expert == false

  static Provenance Expert() { return Provenance{true, 0}; }
  static Provenance Sampled(int iteration) { return Provenance{false, iteration}; }

  bool operator==(const Provenance&) const = default;
};

std::string to_string(const Provenance& provenance);
Provenance provenance_from_string(const std::string& text);

struct Trajectory {
  std::string env_name;
  std::string instruction_id;
  std::vector<Step> steps;
  double reward = 0.0;  // in [0,1]
  DoneReason done_reason = DoneReason::kFailure;
  Provenance provenance = Provenance::Expert();

  bool operator==(const Trajectory&) const = default;
};

struct TrajectoryDataset {
  std::vector<Trajectory> records;
  std::string label;

  std::size_t size() const { return records.size(); }
};

struct InstructionSet {
  std::vector<Instruction> instructions;

  const Instruction* find(const std::string& env_name, const std::string& instruction_id) const;
  std::vector<const Instruction*> by_split(Split split) const;
  /// Evolution pool Q_e: the bc subset plus the evolve-only instructions.
  std::vector<const Instruction*> evolve_pool() const;
  void validate() const;  // unique ids, eval split disjointness by construction
};

// --- Serialization (UTF-8 JSONL, one record per line) ---

std::string serialize_trajectory(const Trajectory& trajectory);
Trajectory parse_trajectory(const std::string& line);

std::string serialize_instruction(const Instruction& instruction);
Instruction parse_instruction(const std::string& line);

std::vector<Trajectory> load_trajectories(const std::string& path);
void save_trajectories(const std::string& path, const std::vector<Trajectory>& records);

InstructionSet load_instruction_set(const std::string& path);
InstructionSet load_instruction_sets(const std::vector<std::string>& paths);
void save_instruction_set(const std::string& path, const InstructionSet& set);

// --- Reward handling ---

/// Maps a trajectory reward to {0,1}: 1 iff r == 1 within 1e-12.
int binarize_reward(double reward);

enum class MergeStrategy { kWithInitial, kWithPrevious };

std::string to_string(MergeStrategy strategy);
MergeStrategy merge_strategy_from_string(const std::string& text);

/// with_initial: d_new ∪ d_s; with_previous: d_new ∪ d_prev. No dedup;
/// output order is the stable concatenation sorted by (env, id, provenance).
TrajectoryDataset merge_datasets(MergeStrategy strategy, const TrajectoryDataset& d_s,
                                 const TrajectoryDataset& d_prev, const TrajectoryDataset& d_new);

}  // namespace evolgym::core
