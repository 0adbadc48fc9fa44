#pragma once

#include <optional>
#include <string>

#include "evolgym/config.hpp"

namespace evolgym::cli {

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;  // overrides rollout.seed
  std::optional<std::string> out;     // overrides the command's output directory
};

// Exit codes: 0 success, 1 user error, 2 internal error.
int run_serve(const CommonOptions& options);
int run_gen_instructions(const CommonOptions& options);
int run_collect(const CommonOptions& options);
int run_train_bc(const CommonOptions& options);
int run_evolve(const CommonOptions& options);
int run_eval(const CommonOptions& options);
int run_report(const CommonOptions& options);

}  // namespace evolgym::cli
