#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "kbr/distribution.hpp"
#include "kbr/kernel.hpp"
#include "kbr/loss.hpp"
#include "kbr/solver.hpp"

namespace kbr {

/// Named synthetic design. Overrides recognised per scenario:
///   all:         sigma (noise standard deviation, default 1)
///   fig1c:       copies (1..3, default 3)
///   fig1d:       caption_points (nonzero: add (100, 0) and (100, 100) instead
///                of (100, 100) and (0, 100))
///   consistency: n (default 100), x_min (-5), x_max (5)
struct ScenarioSpec {
  std::string name;
  std::uint64_t seed = 0;
  std::map<std::string, double> overrides;
};

struct ScenarioData {
  Dataset data;
  /// Indices of planted outliers or leverage points.
  std::vector<Eigen::Index> outliers;
};

/// Throws UnknownScenario for names outside {fig1a, fig1b, fig1c, fig1d, consistency}.
ScenarioData generate(const ScenarioSpec& spec);

/// Additive N(0, sigma^2) noise around f*(x) = x.
struct GaussianNoise {
  double sigma = 1.0;
};

/// Offset t* of the Bayes predictor f*(x) = x + t* (0 for symmetric losses).
double bayes_offset(const LossModel& loss, const GaussianNoise& noise);
/// R* = E l(e - t*), e ~ N(0, sigma^2). Closed forms for least squares,
/// eps-insensitive and pinball; adaptive quadrature otherwise.
double bayes_risk(const LossModel& loss, const GaussianNoise& noise);
/// E l(e - offset) by adaptive Gauss-Kronrod quadrature split at the kinks.
double expected_loss_quadrature(const LossModel& loss, const GaussianNoise& noise, double offset = 0.0);

/// lambda_n = scale * n^(-exponent).
struct LambdaSchedule {
  double scale = 1.0;
  double exponent = 0.25;

  /// Parses "lambda=n^-0.25" or "lambda=0.5*n^-0.25" (the "lambda=" prefix is optional).
  static LambdaSchedule parse(std::string_view text);
  double operator()(double n) const;
  std::string spec() const;
};

/// p* = max{2p, p^2}.
double consistency_exponent(const LossModel& loss);

/// Requires lambda_n -> 0 and lambda_n^{p*} n -> infinity, both for the
/// power law itself and strictly along the sorted n-grid. Throws InvalidSchedule.
void validate_schedule(const LossModel& loss, const LambdaSchedule& schedule, const std::vector<int>& ns);

struct ConsistencyCell {
  int n = 0;
  int seed = 0;
  double lambda = 0.0;
  double risk = 0.0;
  double gap = 0.0;
  double wall_seconds = 0.0;
};

struct ConsistencyOptions {
  int test_size = 100000;
  double sigma = 1.0;
  double x_min = -5.0;
  double x_max = 5.0;
  std::uint64_t base_seed = 0;
  /// Worker threads; 0 uses KBR_THREADS or the hardware concurrency.
  int threads = 0;
  FitOptions fit;
};

struct ConsistencyRunResult {
  std::vector<int> n_values;
  std::vector<double> lambda_values;
  std::vector<ConsistencyCell> cells;
  /// Median over seeds of risk - bayes_risk, per n.
  std::vector<double> median_gaps;
  double bayes_risk = 0.0;
  /// Test-set risk of f*(x) = x + t* and its standard error.
  double bayes_predictor_risk = 0.0;
  double bayes_predictor_stderr = 0.0;
  /// Median gaps non-increasing across consecutive n.
  bool decreasing_trend = false;
};

/// Fits on fresh training sets for every (n, seed) and measures risk on a
/// shared held-out test set. Validates the schedule first.
ConsistencyRunResult consistency_study(const LossModel& loss, const KernelModel& kernel,
                                       const LambdaSchedule& schedule, const std::vector<int>& ns, int seeds,
                                       const ConsistencyOptions& opts = {});

/// Hyperparameters of the figure scenarios.
struct Fig1Hyperparams {
  double eps = 0.1;
  double gamma = 0.1;
  double lambda = 0.05;
  /// The rich "RBF, b" curve of fig1d.
  double gamma_b = 0.00001;
  double lambda_b = 0.00005;
  int grid_points = 101;
  FitOptions fit;
};

struct ComparisonRow {
  std::string label;
  std::string loss;
  std::string kernel;
  double lambda = 0.0;
  int copies = 0;
  /// |f(-2) - f_clean(-2)|.
  double deviation_at_minus2 = 0.0;
  /// max over the x-grid on [-5, 5] of |f - f_clean|.
  double max_deviation = 0.0;
  /// max |f| over the grid.
  double max_abs = 0.0;
  /// fig1c: max |f_copies - f_1| / max |f_1| over the grid, same configuration.
  double change_vs_one_copy = 0.0;
};

struct Fig1Comparison {
  std::string scenario;
  std::vector<ComparisonRow> rows;
  /// max over the grid of |f_eps-rbf - f_ls-rbf| on the scenario data.
  double eps_ls_max_gap = 0.0;

  const ComparisonRow& row(std::string_view label, int copies = 0) const;
};

/// Fits each configuration of the scenario and compares it with the same
/// configuration fitted on the clean fig1a data of the same seed.
Fig1Comparison fig1_comparison(const ScenarioSpec& scenario, const Fig1Hyperparams& hp = {});

/// Number of worker threads: `requested` if positive, else KBR_THREADS, else
/// the hardware concurrency.
int worker_count(int requested = 0);

}  // namespace kbr
