#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace kbr {

enum class LossKind { least_squares, eps_insensitive, huber, logistic, pinball };
enum class Smoothness { C0, C1, C2 };

/// Closed interval [lo, hi].
struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double v) const { return lo <= v && v <= hi; }
  double width() const { return hi - lo; }
};

/// A point where a piecewise-linear loss changes slope.
struct Kink {
  double location;
  double slope_left;
  double slope_right;
};

/// Convex invariant loss L(y, t) = l(y - t) with l(0) = 0.
///
/// All member functions take the residual r = y - t. The derivative with
/// respect to the prediction is therefore -l'(r).
///
/// Huber uses l(r) = r^2 / 2 on |r| <= c and c|r| - c^2/2 outside, which is
/// the only scaling of the quadratic branch that joins the linear branch
/// continuously (and convexly).
class LossModel {
 public:
  static LossModel least_squares();
  static LossModel eps_insensitive(double eps);
  static LossModel huber(double c);
  static LossModel logistic();
  static LossModel pinball(double tau);

  /// Parses "ls", "eps:0.1", "huber:1.345", "logistic", "pinball:0.5".
  static LossModel parse(std::string_view spec);

  LossKind kind() const { return kind_; }
  /// ε, c or τ depending on kind; 0 for parameter-free losses.
  double parameter() const { return param_; }
  std::string spec() const;
  std::string name() const;

  /// |L|_1, or nullopt when l is not globally Lipschitz (least squares).
  std::optional<double> lipschitz_constant() const;
  bool is_lipschitz() const { return lipschitz_constant().has_value(); }
  /// Upper and lower order p (2 for least squares, 1 otherwise).
  double order_p() const;
  /// Constant c with L(y, t) <= c(|y|^p + |t|^p + 1).
  double type_constant() const;
  /// Constant c with l(r) <= c(|r|^p + 1).
  double upper_order_constant() const;
  /// Constant c with l(r) >= c(|r|^p - 1), when one exists. The
  /// ε-insensitive loss with ε > 1 admits none of this form.
  std::optional<double> lower_order_constant() const;
  Smoothness smoothness() const;

  double value(double r) const;
  /// l'(r). Throws KinkError at a non-differentiable point.
  double derivative(double r) const;
  /// l''(r). Throws NotTwiceDifferentiable unless the loss is C2.
  double second_derivative(double r) const;
  double left_derivative(double r) const;
  double right_derivative(double r) const;
  /// Convex subdifferential of l at r.
  Interval subdifferential(double r) const;
  /// V(r): Lipschitz constant of l restricted to [-r, r].
  double slope(double r) const;
  /// a(y) = |y|^p.
  double a_moment(double y) const;

  /// Slope changes of a piecewise-linear loss, ordered by location.
  std::vector<Kink> kinks() const;

  bool operator==(const LossModel&) const = default;

 private:
  LossModel(LossKind kind, double param) : kind_(kind), param_(param) {}

  LossKind kind_;
  double param_;
};

}  // namespace kbr
