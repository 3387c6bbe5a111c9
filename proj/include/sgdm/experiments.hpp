#pragma once

#include <string>
#include <vector>

#include "sgdm/config.hpp"

namespace sgdm {

struct CheckResult {
    std::string name;
    bool passed = false;
    double value = 0.0;
    double threshold = 0.0;
    std::string detail;
};

struct CommandResult {
    std::string command;
    std::vector<CheckResult> checks;
    std::vector<std::string> files;  // written, relative to the output directory
    bool passed() const;
};

struct RunOptions {
    int workers = 1;
    bool quiet = false;  // no progress lines on stderr
};

/// Each command writes its CSV tables, summary.json and manifest.json into cfg.output.
CommandResult cmd_run(const ExperimentConfig& cfg, const RunOptions& opts = {});
CommandResult cmd_indicators(const ExperimentConfig& cfg, const RunOptions& opts = {});
CommandResult cmd_probe(const ExperimentConfig& cfg, const RunOptions& opts = {});
CommandResult cmd_oracle(const ExperimentConfig& cfg, const RunOptions& opts = {});
CommandResult cmd_convergence(const ExperimentConfig& cfg, const RunOptions& opts = {});

/// Dispatch by subcommand name; throws std::invalid_argument for unknown names.
CommandResult run_command(const std::string& name, const ExperimentConfig& cfg, const RunOptions& opts = {});

/// 17 significant digits ("%.17g"), used in every CSV.
std::string format_double(double x);

const char* library_version();

}  // namespace sgdm
