#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "kbr/kernel.hpp"
#include "kbr/loss.hpp"
#include "kbr/solver.hpp"

namespace kbr::cli {

/// Inclusive equispaced grid "lo:hi:count".
struct GridSpec {
  double lo = 0.0;
  double hi = 0.0;
  int count = 1;

  static GridSpec parse(const std::string& text, const std::string& field);
  std::vector<double> values() const;
};

/// A fully validated invocation.
struct RunConfig {
  std::string subcommand;
  /// Set when --help was requested; run() prints it and exits 0.
  std::string help_text;

  LossModel loss = LossModel::eps_insensitive(0.1);
  KernelModel kernel = KernelModel::rbf(0.1);
  double lambda = 0.05;
  FitOptions fit;

  std::string data_path;
  /// Scenario used as data source (or generated by `scenario`).
  std::string scenario;
  std::map<std::string, double> scenario_overrides;
  std::uint64_t seed = 0;
  std::string out_path;

  // influence / bounds contamination point
  Point z_x;
  double z_y = 0.0;

  std::optional<GridSpec> grid_x;
  std::optional<GridSpec> grid_y;
  std::vector<double> eps_values;

  std::string schedule;
  std::vector<int> ns;
  int seeds = 11;
  int test_size = 100000;
  int threads = 0;
};

/// Parses argv (argv[0] is the program name). Values from --config FILE are
/// overridden by flags; unknown keys and invalid values raise UsageError
/// naming the field.
RunConfig parse_config(const std::vector<std::string>& args);

/// Executes a validated config and returns the process exit code.
int run(const RunConfig& config, std::ostream& out, std::ostream& err);

/// parse_config + run with error mapping: 0 success, 1 computational
/// failure, 2 usage error.
int main_entry(int argc, const char* const* argv);

std::string usage();

}  // namespace kbr::cli
