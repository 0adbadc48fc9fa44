#include "evolgym/evol.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "evolgym/util.hpp"

namespace evolgym::evol {

double PreparedDataset::weighted_step_count() const {
  double total = 0.0;
  for (const auto& trajectory : trajectories) {
    total += trajectory.weight * static_cast<double>(trajectory.steps.size());
  }
  return total;
}

PreparedDataset prepare_dataset(const core::TrajectoryDataset& dataset,
                                const core::InstructionSet& instructions, ObjectiveKind kind,
                                bool strict_membership, const ActionSpaceResolver& resolver) {
  PreparedDataset prepared;
  for (const core::Trajectory& record : dataset.records) {
    const double weight = kind == ObjectiveKind::kBehavioralCloning ? 1.0 : record.reward;
    if (!strict_membership && weight == 0.0) continue;

    const core::Instruction* instruction =
        instructions.find(record.env_name, record.instruction_id);
    if (instruction == nullptr) {
      throw DatasetError("trajectory references unknown instruction " + record.env_name + "/" +
                         record.instruction_id);
    }
    const std::vector<std::string> actions =
        resolver(record.env_name, instruction->text);

    PreparedTrajectory entry;
    entry.weight = weight;
    policy::PolicyContext context;
    context.instruction = instruction->text;
    context.current_observation = instruction->text;
    context.available_actions = actions;
    for (const core::Step& step : record.steps) {
      const auto it = std::find(actions.begin(), actions.end(), step.action);
      if (it == actions.end()) {
        throw DatasetError("action not in available set for " + record.env_name + "/" +
                           record.instruction_id + ": " + step.action);
      }
      StepExample example;
      example.action_index = static_cast<int>(it - actions.begin());
      example.candidates.reserve(actions.size());
      for (const std::string& action : actions) {
        example.candidates.push_back(policy::featurize(context, action));
      }
      entry.steps.push_back(std::move(example));
      context.history.push_back(step);
      context.current_observation = step.observation;
    }
    prepared.trajectories.push_back(std::move(entry));
  }
  return prepared;
}

namespace {

/// Shared accumulation for objective and gradient; gradient_out may be null.
double accumulate(const policy::LogLinearPolicy& agent, const PreparedDataset& dataset,
                  std::vector<double>* gradient_out) {
  double objective_value = 0.0;
  for (const auto& trajectory : dataset.trajectories) {
    if (trajectory.weight == 0.0) continue;
    for (const auto& step : trajectory.steps) {
      const std::vector<double> logp = agent.log_probs(step.candidates);
      objective_value += trajectory.weight * logp[step.action_index];
      if (gradient_out == nullptr) continue;
      std::vector<double>& gradient = *gradient_out;
      const auto& chosen = step.candidates[step.action_index];
      if (!chosen.empty()) {
        const double scale = trajectory.weight / std::sqrt(double(chosen.size()));
        for (const std::uint32_t index : chosen) gradient[index] += scale;
      }
      for (std::size_t i = 0; i < step.candidates.size(); ++i) {
        if (step.candidates[i].empty()) continue;
        const double scaled = trajectory.weight * std::exp(logp[i]) /
                              std::sqrt(double(step.candidates[i].size()));
        for (const std::uint32_t index : step.candidates[i]) {
          gradient[index] -= scaled;
        }
      }
    }
  }
  return objective_value;
}

}  // namespace

double objective(const policy::LogLinearPolicy& agent, const PreparedDataset& dataset,
                 ObjectiveKind kind) {
  (void)kind;  // weights were fixed at preparation time
  return accumulate(agent, dataset, nullptr);
}

std::vector<double> gradient(const policy::LogLinearPolicy& agent, const PreparedDataset& dataset,
                             ObjectiveKind kind, double* objective_out) {
  (void)kind;
  std::vector<double> result(policy::kFeatureDimension, 0.0);
  const double value = accumulate(agent, dataset, &result);
  if (objective_out != nullptr) *objective_out = value;
  return result;
}

namespace {

TrainResult ascend(const policy::LogLinearPolicy& start, const PreparedDataset& prepared,
                   const TrainConfig& config) {
  TrainResult result{start, {}};
  const double normalizer = prepared.weighted_step_count();
  if (normalizer == 0.0) {
    // Nothing carries weight; parameters stay unchanged.
    result.epoch_objectives.assign(static_cast<std::size_t>(std::max(0, config.epochs)), 0.0);
    return result;
  }
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    double value = 0.0;
    const std::vector<double> grad =
        gradient(result.policy, prepared, ObjectiveKind::kBehavioralCloning, &value);
    std::vector<double>& weights = result.policy.mutable_weights();
    const double scale = config.learning_rate / normalizer;
    const double shrink = 1.0 - config.learning_rate * config.l2_penalty;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (config.l2_penalty > 0.0) weights[i] *= shrink;
      if (grad[i] != 0.0) weights[i] += scale * grad[i];
    }
    result.epoch_objectives.push_back(
        objective(result.policy, prepared, ObjectiveKind::kBehavioralCloning));
  }
  return result;
}

}  // namespace

TrainResult bc_train(const policy::LogLinearPolicy& start, const core::TrajectoryDataset& expert,
                     const core::InstructionSet& instructions, const TrainConfig& config,
                     const ActionSpaceResolver& resolver) {
  const PreparedDataset prepared = prepare_dataset(expert, instructions,
                                                   ObjectiveKind::kBehavioralCloning,
                                                   /*strict_membership=*/true, resolver);
  return ascend(start, prepared, config);
}

TrainResult learn_step(const policy::LogLinearPolicy& theta_base,
                       const core::TrajectoryDataset& merged,
                       const core::InstructionSet& instructions, const TrainConfig& config,
                       const ActionSpaceResolver& resolver) {
  const PreparedDataset prepared = prepare_dataset(merged, instructions,
                                                   ObjectiveKind::kRewardWeighted,
                                                   /*strict_membership=*/false, resolver);
  return ascend(theta_base, prepared, config);
}

EvolRun agent_evol(const policy::LogLinearPolicy& base, const core::TrajectoryDataset& expert,
                   const core::InstructionSet& instructions, const TrainConfig& config,
                   const ExploreFn& explore_fn, const EvalFn& eval_fn,
                   const ActionSpaceResolver& resolver) {
  EvolRun run{base, {}, {}, {}};

  IterationRecord baseline;
  baseline.iteration = 0;
  baseline.expert_size = static_cast<int>(expert.records.size());
  baseline.eval = eval_fn(run.final_policy);
  run.iterations.push_back(std::move(baseline));

  core::TrajectoryDataset previous;  // previous iteration's exploration data
  previous.label = "D_0";
  for (int m = 1; m <= config.iterations; ++m) {
    controller::ExploreResult explored = explore_fn(run.final_policy, m);
    const core::TrajectoryDataset merged =
        core::merge_datasets(config.merge_strategy, expert, previous, explored.dataset);

    const policy::LogLinearPolicy& start_point =
        config.restart_from == RestartFrom::kBase ? base : run.final_policy;
    TrainResult trained = learn_step(start_point, merged, instructions, config, resolver);
    run.final_policy = std::move(trained.policy);

    IterationRecord record;
    record.iteration = m;
    record.explored = static_cast<int>(explored.dataset.records.size());
    record.merged_size = static_cast<int>(merged.records.size());
    record.expert_size = static_cast<int>(expert.records.size());
    record.successes_per_env = explored.successes_per_env;
    record.attempts_per_env = explored.attempts_per_env;
    int successes = 0, attempts = 0;
    for (const auto& [env_name, count] : explored.successes_per_env) successes += count;
    for (const auto& [env_name, count] : explored.attempts_per_env) attempts += count;
    record.train_split_success_rate =
        attempts > 0 ? static_cast<double>(successes) / attempts : 0.0;
    record.eval = eval_fn(run.final_policy);
    run.iterations.push_back(std::move(record));

    run.snapshots.push_back(run.final_policy);
    run.exploration_datasets.push_back(explored.dataset);
    previous = std::move(explored.dataset);
  }
  return run;
}

EvolRun agent_evol_with_controller(const policy::LogLinearPolicy& base,
                                   const core::TrajectoryDataset& expert,
                                   const core::InstructionSet& instructions,
                                   const TrainConfig& config,
                                   const controller::TransportFactory& transports,
                                   const controller::RolloutConfig& rollout_config) {
  const std::vector<const core::Instruction*> pool = instructions.evolve_pool();
  const std::vector<const core::Instruction*> eval_split =
      instructions.by_split(core::Split::kEval);

  // Rollout rng streams are keyed by (seed, instruction, sample) only, so
  // successive iterations share randomness: policy changes, not fresh draws,
  // drive dataset changes.
  ExploreFn explore_fn = [&](policy::LogLinearPolicy& agent, int iteration) {
    controller::RolloutConfig exploration = rollout_config;
    exploration.temperature = config.exploration_temperature;
    exploration.samples_per_instruction = config.samples_per_instruction;
    return controller::explore(agent, pool, transports, exploration, iteration,
                               "D_m@iter" + std::to_string(iteration));
  };
  EvalFn eval_fn = [&](policy::LogLinearPolicy& agent) {
    return controller::evaluate(agent, eval_split, transports, rollout_config);
  };
  return agent_evol(base, expert, instructions, config, explore_fn, eval_fn);
}

// --- Enumerated-space oracles ---

void EnumeratedSpace::validate() const {
  if (policy_probabilities.size() != success_likelihood.size() || policy_probabilities.empty()) {
    throw core::DomainError("enumerated space needs matching non-empty pi and p");
  }
  double total = 0.0;
  for (const double pi : policy_probabilities) {
    if (pi < 0.0) throw core::DomainError("pi(tau) must be non-negative");
    total += pi;
  }
  if (std::abs(total - 1.0) > 1e-12) {
    throw core::DomainError("pi(tau) must sum to 1");
  }
  for (const double p : success_likelihood) {
    if (p < 0.0 || p > 1.0) throw core::DomainError("p(O=1|tau) must lie in [0,1]");
  }
}

double log_evidence(const EnumeratedSpace& space) {
  space.validate();
  double evidence = 0.0;
  for (std::size_t i = 0; i < space.policy_probabilities.size(); ++i) {
    evidence += space.policy_probabilities[i] * space.success_likelihood[i];
  }
  if (evidence == 0.0) {
    return -std::numeric_limits<double>::infinity();
  }
  return std::log(evidence);
}

double elbo(const std::vector<double>& q, const EnumeratedSpace& space) {
  space.validate();
  if (q.size() != space.policy_probabilities.size()) {
    throw core::DomainError("q has the wrong support size");
  }
  double total = 0.0;
  for (const double value : q) {
    if (value < 0.0) throw core::DomainError("q(tau) must be non-negative");
    total += value;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw core::DomainError("q(tau) must sum to 1");
  }
  for (std::size_t i = 0; i < q.size(); ++i) {
    if (q[i] > 0.0 && space.policy_probabilities[i] == 0.0) {
      throw core::DomainError("q puts mass outside the support of pi");
    }
  }
  double bound = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    if (q[i] == 0.0) continue;
    // E_q[ln p] - KL(q||pi); a zero success likelihood drives the bound to -inf.
    if (space.success_likelihood[i] == 0.0) {
      return -std::numeric_limits<double>::infinity();
    }
    bound += q[i] * std::log(space.success_likelihood[i]);
    bound -= q[i] * std::log(q[i] / space.policy_probabilities[i]);
  }
  return bound;
}

std::vector<double> optimal_q(const EnumeratedSpace& space) {
  space.validate();
  double evidence = 0.0;
  std::vector<double> q(space.policy_probabilities.size(), 0.0);
  for (std::size_t i = 0; i < q.size(); ++i) {
    q[i] = space.policy_probabilities[i] * space.success_likelihood[i];
    evidence += q[i];
  }
  if (evidence == 0.0) {
    throw core::DomainError("zero evidence: no trajectory can succeed under pi");
  }
  for (double& value : q) value /= evidence;
  return q;
}

double grad_check(ObjectiveKind kind, const PreparedDataset& dataset,
                  const policy::LogLinearPolicy& at, double h, std::size_t min_coordinates,
                  std::uint64_t seed) {
  double value = 0.0;
  const std::vector<double> analytic = gradient(at, dataset, kind, &value);

  // Candidate coordinates: every feature index active anywhere in the data.
  std::set<std::uint32_t> active;
  for (const auto& trajectory : dataset.trajectories) {
    for (const auto& step : trajectory.steps) {
      for (const auto& features : step.candidates) {
        active.insert(features.begin(), features.end());
      }
    }
  }
  std::vector<std::uint32_t> coordinates(active.begin(), active.end());
  if (coordinates.size() > min_coordinates) {
    auto rng = util::make_rng(util::mix(seed, "grad_check"));
    util::seeded_shuffle(coordinates, rng);
    coordinates.resize(min_coordinates);
  }

  policy::LogLinearPolicy probe = at;
  double max_relative_error = 0.0;
  for (const std::uint32_t index : coordinates) {
    const double original = probe.weights()[index];
    probe.mutable_weights()[index] = original + h;
    const double plus = objective(probe, dataset, kind);
    probe.mutable_weights()[index] = original - h;
    const double minus = objective(probe, dataset, kind);
    probe.mutable_weights()[index] = original;
    const double estimate = (plus - minus) / (2.0 * h);
    const double denom = std::max({std::abs(analytic[index]), std::abs(estimate), 1e-3});
    max_relative_error = std::max(max_relative_error, std::abs(estimate - analytic[index]) / denom);
  }
  return max_relative_error;
}

}  // namespace evolgym::evol
