#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "calibr8/core.hpp"
#include "calibr8/io.hpp"
#include "calibr8/observation.hpp"

namespace calibr8::cli {

enum ExitCode : int { ok = 0, failure = 1, schema_error = 2, budget_exhausted = 3 };

inline const std::vector<std::string>& method_names() {
  static const std::vector<std::string> names{"mh", "abc", "smc", "hm", "eki", "vi", "surrogate_mh", "mle"};
  return names;
}

/// Validated run configuration. `resolved` repeats the config with every
/// default filled in; it is what the manifest records.
struct RunConfig {
  io::Json raw;
  io::Json resolved;
  std::string simulator_name;
  std::optional<BlackBoxSimulator> simulator;
  ParameterSpace space;
  ObservationSet observations;
  std::string method;
  io::Json fragment;
  std::uint64_t budget = 0;
  std::uint64_t seed = 0;
  std::string output_dir = "calibr8_out";
};

/// Throws ConfigurationError with the offending field path. Relative file
/// paths resolve against `base_dir`.
RunConfig parse_run_config(const io::Json& j, const std::string& base_dir = ".");
RunConfig load_run_config(const std::string& path);

struct CommonOptions {
  unsigned threads = 0;  // 0: machine parallelism
  std::optional<std::string> output;
};

int cmd_run(const std::string& config_path, const CommonOptions& opts);
int cmd_predict(const std::string& config_path, const std::string& posterior_csv, const std::vector<double>& u_p,
                const CommonOptions& opts, std::size_t draws = 1000);
int cmd_validate(const std::string& pred_csv, const std::string& y_test_file, const std::vector<double>& levels,
                 const CommonOptions& opts);

/// Entry point of the calibr8 executable.
int main(int argc, char** argv);

}  // namespace calibr8::cli
