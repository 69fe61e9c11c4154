#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "dk/config.hpp"

namespace dk {

/// One line of the summary: a statistic, its standard error and the pass band.
struct ResultEntry {
  std::string suite;
  std::string statistic;
  double value = 0.0;
  double std_error = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  bool pass = true;
  std::string note;
};

struct RunOutcome {
  std::vector<ResultEntry> entries;
  std::vector<std::string> warnings;
  bool pass() const;
};

/// Runs every selected suite and writes summary.json and <suite>.csv files into
/// out_dir (created if needed). Results do not depend on `workers`.
RunOutcome run_experiment(const ExperimentConfig& config, const std::string& out_dir,
                          unsigned workers, std::ostream* log = nullptr);

/// Exit codes of `dk run`.
enum ExitCode { kExitPass = 0, kExitFail = 1, kExitConfig = 2, kExitNumerical = 3 };

int run_command(const std::string& config_path, const std::string& out_override, unsigned workers,
                std::ostream& out, std::ostream& err);

/// SDE, SPDE counterpart, parameters and caveats; throws std::invalid_argument
/// for an unknown kind.
std::string describe_model(const std::string& kind);

std::string version_string();

} // namespace dk
