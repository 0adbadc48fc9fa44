#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "evolgym/core.hpp"
#include "evolgym/policy.hpp"
#include "evolgym/transport.hpp"

namespace evolgym::controller {

class RolloutError : public std::runtime_error {
 public:
  explicit RolloutError(const std::string& message) : std::runtime_error(message) {}
};

struct RolloutConfig {
  double temperature = 0.7;
  int samples_per_instruction = 1;  // K
  int concurrency = 8;
  std::uint64_t seed = 0;
  std::optional<int> max_rounds_override;
};

/// Builds one transport per worker; HTTP clients are not shared across
/// threads.
using TransportFactory = std::function<std::unique_ptr<transport::EnvTransport>()>;

TransportFactory inprocess_factory(protocol::SessionManager& sessions);
TransportFactory http_factory(std::string base_url);
/// Routes each env to its own service URL behind a single transport.
TransportFactory http_multi_factory(std::map<std::string, std::string> env_urls);

struct EnvStats {
  double success_rate = 0.0;
  double mean_reward = 0.0;
  double mean_rounds = 0.0;
  int n = 0;
};

struct EvalReport {
  std::map<std::string, EnvStats> per_env;
  EnvStats overall;
  int transport_failures = 0;

  std::string to_json() const;
  static EvalReport from_json(const std::string& text);
  /// One row per env in the score-table style: env columns, one score per cell.
  std::string render_table() const;
};

/// Runs one episode: create session, loop act/step, record every
/// (thought, action, observation), attach the final reward.
core::Trajectory rollout(policy::Policy& agent, const core::Instruction& instruction,
                         transport::EnvTransport& transport, const RolloutConfig& config,
                         int sample_index = 0);

struct ExploreResult {
  core::TrajectoryDataset dataset;
  int transport_failures = 0;
  std::map<std::string, int> attempts_per_env;
  std::map<std::string, int> successes_per_env;
};

/// Samples K trajectories per instruction at the exploration temperature and
/// binarizes their rewards. Deterministic per (seed, instruction, sample):
/// concurrency never changes the result.
ExploreResult explore(policy::Policy& agent, const std::vector<const core::Instruction*>& pool,
                      const TransportFactory& transports, const RolloutConfig& config,
                      int iteration, const std::string& label);

/// One greedy rollout per instruction; failed episodes contribute their full
/// round count to mean_rounds.
EvalReport evaluate(policy::Policy& agent, const std::vector<const core::Instruction*>& eval_split,
                    const TransportFactory& transports, const RolloutConfig& config);

struct CollectResult {
  core::TrajectoryDataset dataset;
  int attempted = 0;
  int transport_failures = 0;
  std::map<std::string, int> kept_per_env;
  std::map<std::string, double> mean_rounds_per_env;  // over kept trajectories
};

/// Rolls the source policy over the instructions and keeps only trajectories
/// whose binarized reward is 1, labelled as expert data.
CollectResult collect_expert(policy::Policy& source,
                             const std::vector<const core::Instruction*>& instructions,
                             const TransportFactory& transports, const RolloutConfig& config);

/// Feeds a stored action sequence through a fresh session and checks that
/// observations and the final reward reproduce byte-for-byte.
bool replay_matches(const core::Trajectory& trajectory, transport::EnvTransport& transport);

}  // namespace evolgym::controller
