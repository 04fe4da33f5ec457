#pragma once

#include <optional>
#include <string>

#include <Eigen/Dense>

#include "kbr/distribution.hpp"
#include "kbr/kernel.hpp"
#include "kbr/loss.hpp"
#include "kbr/solver.hpp"

namespace kbr {

/// Contamination point z = (x, y).
struct ContaminationPoint {
  Point x;
  double y = 0.0;
};

/// Hessian of the regularized risk at f_{P,lambda}:
///   S g = 2 lambda g + E_P l''(Y - f(X)) g(X) Phi(X).
/// Applies S and its inverse exactly on the span of P's support points and
/// the centers of the argument.
class HessianOperator {
 public:
  /// `fit` must be the fit of `loss` on `p`; the loss must be C2.
  HessianOperator(const LossModel& loss, const FitResult& fit, const DiscreteDistribution& p);

  RkhsFunction apply(const RkhsFunction& g) const;
  /// Returns g with S g = rhs. Verifies ||S g - rhs||_H <= 1e-8 (1 + ||rhs||_H)
  /// and throws SingularSystem otherwise.
  RkhsFunction apply_inverse(const RkhsFunction& rhs) const;

  double lambda() const { return lambda_; }
  const KernelModel& kernel() const { return kernel_; }

 private:
  KernelModel kernel_;
  double lambda_;
  Points support_;
  /// w_j l''(y_j - f(x_j)).
  Eigen::VectorXd curvature_;
};

RkhsFunction hessian_apply_inverse(const LossModel& loss, const FitResult& fit, const DiscreteDistribution& p,
                                   const RkhsFunction& rhs);

struct InfluenceResult {
  RkhsFunction if_function;
  double if_norm = 0.0;
  ContaminationPoint z;
  /// S^{-1} E_P L'(Y, f(X)) Phi(X), independent of z.
  RkhsFunction first_term;
  /// -L'(y, f(x)) S^{-1} Phi(x).
  RkhsFunction second_term;
  /// The first term via E_P L' Phi = -2 lambda f_{P,lambda}, i.e. -2 lambda S^{-1} f.
  RkhsFunction first_term_via_stationarity;
  /// ||first_term - first_term_via_stationarity||_H.
  double stationarity_identity_gap = 0.0;
};

/// Influence function of P -> f_{P,lambda} at z. Requires a C2 loss
/// (throws NotTwiceDifferentiable) and a bounded kernel.
InfluenceResult influence_function(const LossModel& loss, const KernelModel& kernel, const DiscreteDistribution& p,
                                   double lambda, const ContaminationPoint& z, const FitOptions& opts = {});
/// Same, reusing an existing fit of `p`.
InfluenceResult influence_function(const LossModel& loss, const FitResult& fit, const DiscreteDistribution& p,
                                   const ContaminationPoint& z);

/// (f_{(1-eps)P + eps Delta_z} - f_P) / eps.
RkhsFunction difference_quotient(const LossModel& loss, const KernelModel& kernel, const DiscreteDistribution& p,
                                 double lambda, const ContaminationPoint& z, double eps,
                                 const FitOptions& opts = {});
/// Same, reusing an existing fit of `p`.
RkhsFunction difference_quotient(const LossModel& loss, const FitResult& base, const DiscreteDistribution& p,
                                 const ContaminationPoint& z, double eps, const FitOptions& opts = {});

struct SensitivityResult {
  RkhsFunction sc;
  double norm = 0.0;
};

/// n (f on data + z - f on data), where data holds n - 1 observations.
SensitivityResult sensitivity_curve(const LossModel& loss, const KernelModel& kernel, const Dataset& data,
                                    double lambda, const ContaminationPoint& z, const FitOptions& opts = {});
/// Same, reusing an existing fit of `data`.
SensitivityResult sensitivity_curve(const LossModel& loss, const FitResult& base, const Dataset& data,
                                    const ContaminationPoint& z, const FitOptions& opts = {});

/// 2 lambda^{-1} ||k||_inf |L|_1, or nullopt for non-Lipschitz losses.
std::optional<double> sensitivity_bound(const LossModel& loss, const KernelModel& kernel, double lambda);

/// Theoretical shift bounds for f_{(1-eps)P + eps Q} against the measured shift.
struct BoundsReport {
  double eps = 0.0;
  double lambda = 0.0;
  /// sqrt(R_{L,P}(0) / lambda).
  double delta_p_lambda = 0.0;
  double delta_shift_bound = 0.0;
  /// Informational only; see README for the grouping used.
  std::optional<double> order_p_shift_bound;
  std::optional<double> lipschitz_shift_bound;
  std::optional<double> sc_bound;
  /// ||f_{(1-eps)P + eps Q} - f_P||_H.
  double observed_shift = 0.0;
  /// ||f_P||_H, checked against delta_p_lambda.
  double observed_norm = 0.0;

  // Constants the bounds were evaluated with.
  double type_constant = 0.0;
  double order_p = 0.0;
  double kernel_sup_norm = 0.0;
  std::optional<double> lipschitz_constant;
  double moment_p_a = 0.0;
  double moment_q_a = 0.0;
  double moment_diff_p_minus_1 = 0.0;
  double moment_diff_0 = 0.0;
  double moment_p_p = 0.0;

  bool norm_bound_violated = false;
  bool delta_shift_violated = false;
  bool lipschitz_shift_violated = false;
  bool any_violation() const { return norm_bound_violated || delta_shift_violated || lipschitz_shift_violated; }
};

/// Throws UnboundedKernel for kernels without a finite sup norm.
BoundsReport bounds_report(const LossModel& loss, const KernelModel& kernel, const DiscreteDistribution& p,
                           const DiscreteDistribution& q, double lambda, double eps, const FitOptions& opts = {});
/// Same, reusing an existing fit of `p`.
BoundsReport bounds_report(const LossModel& loss, const FitResult& base, const DiscreteDistribution& p,
                           const DiscreteDistribution& q, double eps, const FitOptions& opts = {});

}  // namespace kbr
