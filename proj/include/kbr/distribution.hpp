#pragma once

#include <Eigen/Dense>

#include "kbr/kernel.hpp"

namespace kbr {

class LossModel;

/// Observations (x_i, y_i), i = 1..n.
struct Dataset {
  Points xs;
  Eigen::VectorXd ys;

  Dataset() = default;
  /// Validates n >= 1, matching lengths and finite entries.
  Dataset(Points xs, Eigen::VectorXd ys);

  Eigen::Index size() const { return ys.size(); }
  Eigen::Index dim() const { return xs.cols(); }
  /// Copy with (x, y) appended.
  Dataset with_point(const Eigen::Ref<const Eigen::VectorXd>& x, double y) const;
};

/// Weighted point set on X x Y. Weights may be signed so that differences of
/// distributions can be represented; coincident points are never merged.
class DiscreteDistribution {
 public:
  DiscreteDistribution(Points xs, Eigen::VectorXd ys, Eigen::VectorXd weights);

  /// Empirical distribution, weight 1/n per observation.
  static DiscreteDistribution empirical(const Dataset& data);
  /// Dirac mass at z = (x, y).
  static DiscreteDistribution point_mass(const Eigen::Ref<const Eigen::VectorXd>& x, double y);
  /// (1 - eps) p + eps q, points of p first.
  static DiscreteDistribution mixture(const DiscreteDistribution& p, const DiscreteDistribution& q, double eps);
  /// p - q as a concatenated signed representation.
  static DiscreteDistribution difference(const DiscreteDistribution& p, const DiscreteDistribution& q);

  const Points& xs() const { return xs_; }
  const Eigen::VectorXd& ys() const { return ys_; }
  const Eigen::VectorXd& weights() const { return weights_; }
  Eigen::Index size() const { return ys_.size(); }
  Eigen::Index dim() const { return xs_.cols(); }

  double total_mass() const { return weights_.sum(); }
  bool is_nonnegative() const { return (weights_.array() >= 0.0).all(); }
  /// All weights >= 0 and summing to one within `tol`.
  bool is_probability(double tol = 1e-12) const;

 private:
  Points xs_;
  Eigen::VectorXd ys_;
  Eigen::VectorXd weights_;
};

/// |mu|_q = sum |w_i| |y_i|^q for q > 0, sum |w_i| for q = 0.
double moment(const DiscreteDistribution& mu, double q);
/// |mu|_a with a(y) = |y|^p of the loss.
double moment(const DiscreteDistribution& mu, const LossModel& loss);

}  // namespace kbr
