#pragma once

#include <optional>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace kbr {

/// A single input point in R^d.
using Point = Eigen::VectorXd;
/// A point set, one point per row.
using Points = Eigen::MatrixXd;

/// Axis-aligned box [lo_1, hi_1] x ... x [lo_d, hi_d].
struct Box {
  Eigen::VectorXd lo;
  Eigen::VectorXd hi;

  /// Parses "lo1,hi1[,lo2,hi2,...]".
  static Box parse(std::string_view text);
  bool operator==(const Box& other) const {
    return lo.size() == other.lo.size() && lo == other.lo && hi == other.hi;
  }
};

enum class KernelKind { rbf, linear, polynomial };

/// Positive semidefinite kernel k(x, x').
class KernelModel {
 public:
  /// exp(-gamma * |x - x'|^2)
  static KernelModel rbf(double gamma);
  /// <x, x'>
  static KernelModel linear();
  /// (c + <x, x'>)^m
  static KernelModel polynomial(double c, int m);

  /// Parses "rbf:0.1", "linear", "poly:c,m".
  static KernelModel parse(std::string_view spec);

  KernelModel with_domain_box(Box box) const;

  KernelKind kind() const { return kind_; }
  double gamma() const { return gamma_; }
  double offset() const { return offset_; }
  int degree() const { return degree_; }
  const std::optional<Box>& domain_box() const { return box_; }
  std::string spec() const;

  /// sup_x sqrt(k(x, x)); nullopt when the kernel is unbounded on its domain.
  std::optional<double> sup_norm() const;
  /// Like sup_norm() but throws UnboundedKernel.
  double require_sup_norm() const;

  double operator()(const Eigen::Ref<const Eigen::VectorXd>& x,
                    const Eigen::Ref<const Eigen::VectorXd>& xp) const;

  bool operator==(const KernelModel& other) const;

 private:
  KernelModel(KernelKind kind, double gamma, double offset, int degree)
      : kind_(kind), gamma_(gamma), offset_(offset), degree_(degree) {}

  double eval_unchecked(const double* x, const double* xp, Eigen::Index d) const;
  friend Eigen::MatrixXd cross_gram(const KernelModel&, const Points&, const Points&);

  KernelKind kind_;
  double gamma_ = 0.0;
  double offset_ = 0.0;
  int degree_ = 1;
  std::optional<Box> box_;
};

/// G[i][j] = k(p_i, p_j).
Eigen::MatrixXd gram(const KernelModel& k, const Points& points);
/// C[i][j] = k(a_i, b_j).
Eigen::MatrixXd cross_gram(const KernelModel& k, const Points& a, const Points& b);

/// Finite expansion f = sum_i c_i k(., u_i) in the RKHS of `kernel`.
class RkhsFunction {
 public:
  RkhsFunction(KernelModel kernel, Points centers, Eigen::VectorXd coefficients);
  /// The zero function with no centers, in dimension d.
  static RkhsFunction zero(KernelModel kernel, Eigen::Index dim);

  const KernelModel& kernel() const { return kernel_; }
  const Points& centers() const { return centers_; }
  const Eigen::VectorXd& coefficients() const { return coefficients_; }
  Eigen::Index size() const { return coefficients_.size(); }
  Eigen::Index dim() const { return centers_.cols(); }

  double operator()(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  /// Evaluates at every row of `xs`.
  Eigen::VectorXd evaluate(const Points& xs) const;
  /// ||f||_H.
  double norm() const;

 private:
  KernelModel kernel_;
  Points centers_;
  Eigen::VectorXd coefficients_;
};

double eval_f(const RkhsFunction& f, const Eigen::Ref<const Eigen::VectorXd>& x);
double norm_h(const RkhsFunction& f);
/// Expansion of alpha*f + beta*g over the concatenated center lists.
RkhsFunction combine(const RkhsFunction& f, const RkhsFunction& g, double alpha, double beta);

/// sqrt(max(0, c^T G c)).
double quadratic_norm(const Eigen::MatrixXd& gram, const Eigen::VectorXd& c);

/// Solves A x = b for symmetric positive (semi)definite A by Cholesky.
/// On failure adds 1e-10 * trace/n to the diagonal and retries, growing the
/// jitter by a decade per attempt (up to three retries); throws SingularSystem.
Eigen::VectorXd solve_spd(const Eigen::MatrixXd& a, const Eigen::VectorXd& b);

}  // namespace kbr
