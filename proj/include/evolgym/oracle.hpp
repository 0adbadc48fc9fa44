#pragma once

#include <map>
#include <memory>
#include <string>

#include "evolgym/policy.hpp"

namespace evolgym::oracle {

/// Scripted expert solvers that stand in for external annotators when
/// collecting the initial trajectory set: BFS for maze, entropy-greedy
/// elimination for wordle, a recipe-tree planner for craft. All are pure
/// functions of (instruction, context) and therefore thread-safe.
std::unique_ptr<policy::Policy> make_oracle(const std::string& env_name, int difficulty);

/// Routes instructions from mixed pools to the per-env solvers above.
std::unique_ptr<policy::Policy> make_multi_oracle(const std::map<std::string, int>& difficulties);

}  // namespace evolgym::oracle
