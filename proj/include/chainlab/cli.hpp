#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

namespace chainlab {

inline constexpr const char* kVersion = "0.1.0";

/// Experiment names accepted as subcommands and as "experiment" in configs.
const std::vector<std::string>& experiment_names();

/// Runs one experiment from a config object (flag names without the
/// leading dashes as keys, plus "experiment"). Writes manifest.json,
/// result.json, optional result.csv and extras, and summary.txt. Returns the
/// process exit status; failures print a JSON error object to err.
int run_experiment(const nlohmann::json& config, std::ostream& out, std::ostream& err);

/// Full command line entry point.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace chainlab
