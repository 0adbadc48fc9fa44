#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "evolgym/core.hpp"

namespace evolgym::policy {

struct ReActOutput {
  std::string thought;
  std::string action;

  bool operator==(const ReActOutput&) const = default;
};

class ReactParseError : public std::runtime_error {
 public:
  explicit ReactParseError(const std::string& message) : std::runtime_error(message) {}
};

/// Extracts the last "Thought:" and "Action:" blocks (case-insensitive
/// labels). Throws ReactParseError when no action label is present; a missing
/// thought label yields an empty thought.
ReActOutput parse_react(const std::string& text);
std::string render_react(const ReActOutput& output);

struct PolicyContext {
  std::string system_prompt;
  std::string instruction;               // instruction text u (= first observation)
  std::vector<core::Step> history;       // c_{t-1}
  std::string current_observation;       // latest feedback (instruction text at t=0)
  std::vector<std::string> available_actions;  // sorted; empty for open spaces
};

struct ActResult {
  std::string thought;
  std::string action;
  double log_prob = 0.0;  // ln pi at temperature 1 of the chosen action
};

/// Agent interface. The full Instruction record is passed alongside the
/// rendered context so scripted oracles can rebuild the seeded instance;
/// trained and remote policies read only the context.
class Policy {
 public:
  virtual ~Policy() = default;
  virtual ActResult act(const core::Instruction& instruction, const PolicyContext& context,
                        double temperature, std::mt19937_64& rng) = 0;
};

// --- Feature map ---

constexpr std::size_t kFeatureDimension = 1u << 16;
constexpr int kFeatureMapVersion = 1;

/// Sparse presence vector: sorted unique indices, value 1.0 each.
using FeatureVector = std::vector<std::uint32_t>;

/// Deterministic hashed features of (context, candidate action): action
/// n-grams, observation n-grams crossed with the action, observation-token by
/// action-token products, and history summaries (last action, previous
/// observation keywords).
FeatureVector featurize(const PolicyContext& context, const std::string& action);
/// The distinct 64-bit keys behind featurize, before reduction to the table
/// size; lets tests measure the real collision rate.
std::vector<std::uint64_t> featurize_raw_keys(const PolicyContext& context,
                                              const std::string& action);

// --- Trainable log-linear policy over closed action sets ---

class LogLinearPolicy final : public Policy {
 public:
  LogLinearPolicy();
  explicit LogLinearPolicy(std::vector<double> weights);

  ActResult act(const core::Instruction& instruction, const PolicyContext& context,
                double temperature, std::mt19937_64& rng) override;
  /// Context-only variant used by the trainer and tests.
  ActResult act(const PolicyContext& context, double temperature, std::mt19937_64& rng);

  /// ln pi(action | context) at temperature 1; action must be available.
  double log_prob(const PolicyContext& context, const std::string& action) const;
  /// phi(context, action) - sum_a pi(a|context) phi(context, a).
  std::vector<std::pair<std::uint32_t, double>> grad_log_prob(const PolicyContext& context,
                                                              const std::string& action) const;
  /// Log-probabilities over context.available_actions in order.
  std::vector<double> log_probs(const PolicyContext& context) const;
  std::vector<double> log_probs(const std::vector<FeatureVector>& features) const;

  double score(const FeatureVector& features) const;

  const std::vector<double>& weights() const { return weights_; }
  std::vector<double>& mutable_weights() { return weights_; }

  std::string to_json() const;
  static LogLinearPolicy from_json(const std::string& text);
  void save(const std::string& path) const;
  static LogLinearPolicy load(const std::string& path);
  std::uint64_t snapshot_hash() const;

 private:
  std::vector<double> weights_;
};

/// The closed action set the trainable policy uses for an instance, derived
/// from the instruction text alone so training contexts can be rebuilt from
/// stored trajectories. Sorted lexicographically.
std::vector<std::string> resolve_action_space(const std::string& env_name,
                                              const std::string& instruction_text);

}  // namespace evolgym::policy
