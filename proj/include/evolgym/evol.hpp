#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "evolgym/controller.hpp"
#include "evolgym/core.hpp"
#include "evolgym/policy.hpp"

namespace evolgym::evol {

enum class RestartFrom { kBase, kPrevious };

struct TrainConfig {
  int iterations = 4;                  // M
  int samples_per_instruction = 1;     // K
  core::MergeStrategy merge_strategy = core::MergeStrategy::kWithInitial;
  double learning_rate = 0.5;
  int epochs = 3;
  double l2_penalty = 0.0;  // toward-zero shrinkage per update
  double exploration_temperature = 0.7;
  RestartFrom restart_from = RestartFrom::kBase;
};

class DatasetError : public std::runtime_error {
 public:
  explicit DatasetError(const std::string& message) : std::runtime_error(message) {}
};

using ActionSpaceResolver =
    std::function<std::vector<std::string>(const std::string& env_name,
                                           const std::string& instruction_text)>;

enum class ObjectiveKind { kBehavioralCloning, kRewardWeighted };

/// One decision point: featurized candidates plus the index of the taken
/// action, ready for repeated objective/gradient evaluation.
struct StepExample {
  std::vector<policy::FeatureVector> candidates;
  int action_index = 0;
};

struct PreparedTrajectory {
  double weight = 1.0;  // trajectory reward for the reward-weighted objective
  std::vector<StepExample> steps;
};

struct PreparedDataset {
  std::vector<PreparedTrajectory> trajectories;

  double weighted_step_count() const;
};

/// Rebuilds every per-step context of the dataset against the instruction
/// set and featurizes all candidate actions. `strict_membership` applies the
/// availability precondition to every record; otherwise zero-weight records
/// are skipped entirely.
PreparedDataset prepare_dataset(const core::TrajectoryDataset& dataset,
                                const core::InstructionSet& instructions,
                                ObjectiveKind kind, bool strict_membership,
                                const ActionSpaceResolver& resolver = policy::resolve_action_space);

/// Sum objective and its dense gradient:
///   BC:    J = sum_tau sum_t log pi(a_t | c_t)
///   Evol:  J = sum_tau r(tau) sum_t log pi(a_t | c_t)
double objective(const policy::LogLinearPolicy& agent, const PreparedDataset& dataset,
                 ObjectiveKind kind);
std::vector<double> gradient(const policy::LogLinearPolicy& agent, const PreparedDataset& dataset,
                             ObjectiveKind kind, double* objective_out = nullptr);

struct TrainResult {
  policy::LogLinearPolicy policy;
  std::vector<double> epoch_objectives;  // sum-form objective after each epoch
};

/// Full-batch gradient ascent (per-step-normalized updates) on the expert
/// log-likelihood, starting from `start`.
TrainResult bc_train(const policy::LogLinearPolicy& start, const core::TrajectoryDataset& expert,
                     const core::InstructionSet& instructions, const TrainConfig& config,
                     const ActionSpaceResolver& resolver = policy::resolve_action_space);

/// Reward-weighted refit on a merged dataset, starting from theta_base.
TrainResult learn_step(const policy::LogLinearPolicy& theta_base,
                       const core::TrajectoryDataset& merged,
                       const core::InstructionSet& instructions, const TrainConfig& config,
                       const ActionSpaceResolver& resolver = policy::resolve_action_space);

// --- The alternating exploration/learning loop ---

struct IterationRecord {
  int iteration = 0;  // 0 is the pre-evolution baseline entry
  int explored = 0;
  int merged_size = 0;
  int expert_size = 0;
  std::map<std::string, int> successes_per_env;
  std::map<std::string, int> attempts_per_env;
  controller::EvalReport eval;
  double train_split_success_rate = 0.0;  // successes over exploration attempts
};

struct EvolRun {
  policy::LogLinearPolicy final_policy;
  std::vector<IterationRecord> iterations;   // baseline + one per iteration
  std::vector<policy::LogLinearPolicy> snapshots;  // per-iteration policies
  std::vector<core::TrajectoryDataset> exploration_datasets;
};

/// Exploration hook: (policy, iteration) -> scored dataset. The default is
/// controller::explore over the evolve pool with binarized rewards.
using ExploreFn =
    std::function<controller::ExploreResult(policy::LogLinearPolicy&, int iteration)>;
using EvalFn = std::function<controller::EvalReport(policy::LogLinearPolicy&)>;

EvolRun agent_evol(const policy::LogLinearPolicy& base, const core::TrajectoryDataset& expert,
                   const core::InstructionSet& instructions, const TrainConfig& config,
                   const ExploreFn& explore_fn, const EvalFn& eval_fn,
                   const ActionSpaceResolver& resolver = policy::resolve_action_space);

/// Convenience wiring of agent_evol to a controller transport.
EvolRun agent_evol_with_controller(const policy::LogLinearPolicy& base,
                                   const core::TrajectoryDataset& expert,
                                   const core::InstructionSet& instructions,
                                   const TrainConfig& config,
                                   const controller::TransportFactory& transports,
                                   const controller::RolloutConfig& rollout_config);

// --- RL-as-inference verification oracles on enumerable spaces ---

struct EnumeratedSpace {
  std::vector<double> policy_probabilities;  // pi(tau), sums to 1
  std::vector<double> success_likelihood;    // p(O=1 | tau), each in [0,1]

  void validate() const;
};

/// ln sum_tau pi(tau) p(O=1|tau); -inf when the evidence is zero.
double log_evidence(const EnumeratedSpace& space);

/// E_q[ln p] - KL(q || pi). Throws when q is not a distribution or puts mass
/// where pi has none.
double elbo(const std::vector<double>& q, const EnumeratedSpace& space);

/// Normalized p(O=1|tau) pi(tau); throws on zero evidence.
std::vector<double> optimal_q(const EnumeratedSpace& space);

/// Central finite differences of the chosen objective against the analytic
/// gradient over >= min_coordinates sampled active coordinates; returns the
/// maximum relative error.
double grad_check(ObjectiveKind kind, const PreparedDataset& dataset,
                  const policy::LogLinearPolicy& at, double h, std::size_t min_coordinates = 200,
                  std::uint64_t seed = 0);

}  // namespace evolgym::evol
