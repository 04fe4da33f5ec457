#pragma once

#include <optional>
#include <string>

#include <Eigen/Dense>

#include "kbr/distribution.hpp"
#include "kbr/kernel.hpp"
#include "kbr/loss.hpp"

namespace kbr {

enum class SolverKind {
  automatic,        ///< newton for C1/C2 losses, smoothed_newton for C0 losses
  newton,           ///< damped (semismooth for Huber) Newton on the coefficients
  smoothed_newton,  ///< Newton on kink-smoothed losses with a shrinking band
  subgradient,      ///< projected subgradient, step 1/(2 lambda (t + 1))
  closed_form,      ///< linear solve, least squares only
};

std::string to_string(SolverKind kind);

struct FitOptions {
  /// Required stationarity residual (H-norm).
  double tol = 1e-6;
  /// Newton iterations per smoothing stage.
  int max_newton_iterations = 200;
  int subgradient_budget = 50000;
  /// Residuals within this distance of a kink count as sitting on it when
  /// certifying C0 losses. Also the final smoothing band width.
  double kink_tol = 1e-8;
  SolverKind solver = SolverKind::automatic;
  /// Starting coefficients (one per support point); zero when absent.
  std::optional<Eigen::VectorXd> initial_coefficients;
};

/// Minimizer of sum_i w_i L(y_i, f(x_i)) + lambda ||f||_H^2 over the span of
/// the support points.
struct FitResult {
  RkhsFunction f_hat;
  double lambda = 0.0;
  double objective = 0.0;
  double stationarity_residual = 0.0;
  int iterations = 0;
  SolverKind solver_kind = SolverKind::automatic;

  double norm() const { return f_hat.norm(); }
  const Eigen::VectorXd& coefficients() const { return f_hat.coefficients(); }
};

/// sum_i w_i l(y_i - (G alpha)_i) + lambda alpha^T G alpha.
double objective(const LossModel& loss, const KernelModel& kernel, const DiscreteDistribution& p, double lambda,
                 const Eigen::VectorXd& alpha);
double objective(const LossModel& loss, const KernelModel& kernel, const Dataset& data, double lambda,
                 const Eigen::VectorXd& alpha);

/// E_P L(Y, f(X)).
double risk(const LossModel& loss, const DiscreteDistribution& p, const RkhsFunction& f);

/// sqrt(R_{L,P}(0) / lambda), the a-priori bound on ||f_{P,lambda}||_H.
double norm_bound(const LossModel& loss, const DiscreteDistribution& p, double lambda);

/// Fits the regularized risk minimizer. Weights of `p` must be nonnegative.
/// Throws InvalidLambda for lambda <= 0 and NonConvergence if the final
/// stationarity residual exceeds opts.tol.
FitResult fit(const LossModel& loss, const KernelModel& kernel, const DiscreteDistribution& p, double lambda,
              const FitOptions& opts = {});
FitResult fit(const LossModel& loss, const KernelModel& kernel, const Dataset& data, double lambda,
              const FitOptions& opts = {});

/// Least squares minimizer from (G + lambda W^{-1}) alpha = y (uniform
/// weights: (G + n lambda I) alpha = y).
FitResult closed_form_ls(const KernelModel& kernel, const DiscreteDistribution& p, double lambda);
FitResult closed_form_ls(const KernelModel& kernel, const Dataset& data, double lambda);

/// Smallest H-norm of 2 lambda f + sum_i w_i h_i Phi(x_i) over admissible
/// h_i in -subdifferential of l at y_i - f(x_i). `f_hat` must be centered on
/// the support points of `p`, in order. For C0 losses the subdifferential is
/// taken over [r - kink_tol, r + kink_tol].
double stationarity_certificate(const LossModel& loss, const DiscreteDistribution& p, double lambda,
                                const RkhsFunction& f_hat, double kink_tol = FitOptions{}.kink_tol);
double stationarity_certificate(const LossModel& loss, const Dataset& data, double lambda,
                                const RkhsFunction& f_hat, double kink_tol = FitOptions{}.kink_tol);

}  // namespace kbr
