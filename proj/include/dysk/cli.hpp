#pragma once

#include "dysk/config.hpp"

#include <string>
#include <vector>

namespace dysk {

// Subcommand dispatch for `dyskernel <subcommand> [--config PATH]
// [--key value ...]`. Exit codes: 0 success, 1 validation error, 2 runtime
// failure.
int run_cli(const std::vector<std::string>& args);

// Flag/env/file resolution (config file < DYSK_SEED < flags), validated.
RunConfig build_config(const std::string& task, const std::vector<std::string>& args);

void cmd_train(const RunConfig& cfg);
void cmd_register(const RunConfig& cfg);
void cmd_eval(const RunConfig& cfg);
void cmd_gradcheck(const RunConfig& cfg);
void cmd_analyze_complexity(const RunConfig& cfg);
void cmd_bench(const RunConfig& cfg);

}  // namespace dysk
