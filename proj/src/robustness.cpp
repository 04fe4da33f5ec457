#include "kbr/robustness.hpp"

#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "kbr/errors.hpp"
#include "linalg_detail.hpp"

namespace kbr {

namespace {

RkhsFunction feature(const KernelModel& kernel, const Point& x) {
  Points c = x.transpose();
  return {kernel, std::move(c), Eigen::VectorXd::Ones(1)};
}

void check_fit_matches(const FitResult& fit, const DiscreteDistribution& p) {
  if (fit.f_hat.size() != p.size() || fit.f_hat.centers() != p.xs()) {
    throw InvalidArgument("fit is not centered on the support points of the distribution");
  }
}

}  // namespace

HessianOperator::HessianOperator(const LossModel& loss, const FitResult& fit, const DiscreteDistribution& p)
    : kernel_(fit.f_hat.kernel()), lambda_(fit.lambda), support_(p.xs()), curvature_(p.size()) {
  if (loss.smoothness() != Smoothness::C2) {
    throw NotTwiceDifferentiable(
        fmt::format("the Hessian operator needs a twice differentiable loss; {} is not", loss.name()));
  }
  check_fit_matches(fit, p);
  const Eigen::VectorXd fx = gram(kernel_, support_) * fit.coefficients();
  for (Eigen::Index j = 0; j < p.size(); ++j) {
    curvature_[j] = p.weights()[j] * loss.second_derivative(p.ys()[j] - fx[j]);
  }
}

RkhsFunction HessianOperator::apply(const RkhsFunction& g) const {
  if (!(g.kernel() == kernel_)) throw KernelMismatch("Hessian applied to an expansion over another kernel");
  const Eigen::VectorXd gx = g.evaluate(support_);
  const RkhsFunction data_part(kernel_, support_, curvature_.cwiseProduct(gx));
  return combine(data_part, g, 1.0, 2.0 * lambda_);
}

RkhsFunction HessianOperator::apply_inverse(const RkhsFunction& rhs) const {
  if (!(rhs.kernel() == kernel_)) throw KernelMismatch("Hessian inverse of an expansion over another kernel");
  const Eigen::Index n = support_.rows();
  const Eigen::Index m = rhs.size();
  Points basis(n + m, support_.cols());
  basis << support_, rhs.centers();
  Eigen::VectorXd c = Eigen::VectorXd::Zero(n + m);
  c.tail(m) = rhs.coefficients();
  Eigen::VectorXd d = Eigen::VectorXd::Zero(n + m);
  d.head(n) = curvature_;
  // Matching coefficients of S g = rhs on the basis gives (2 lambda I + D K) b = c.
  const Eigen::VectorXd b = detail::solve_shifted(gram(kernel_, basis), d, c, 2.0 * lambda_);
  RkhsFunction g(kernel_, std::move(basis), b);

  const double err = combine(apply(g), rhs, 1.0, -1.0).norm();
  const double rhs_norm = rhs.norm();
  if (!(err <= 1e-8 * (1.0 + rhs_norm))) {
    throw SingularSystem(fmt::format("Hessian solve residual {:.3e} exceeds {:.3e}", err, 1e-8 * (1.0 + rhs_norm)));
  }
  return g;
}

RkhsFunction hessian_apply_inverse(const LossModel& loss, const FitResult& fit, const DiscreteDistribution& p,
                                   const RkhsFunction& rhs) {
  return HessianOperator(loss, fit, p).apply_inverse(rhs);
}

InfluenceResult influence_function(const LossModel& loss, const FitResult& fit, const DiscreteDistribution& p,
                                   const ContaminationPoint& z) {
  const KernelModel& kernel = fit.f_hat.kernel();
  kernel.require_sup_norm();
  if (z.x.size() != p.dim()) {
    throw DimensionMismatch(fmt::format("contamination point has dimension {}, data {}", z.x.size(), p.dim()));
  }
  const HessianOperator s(loss, fit, p);

  const Eigen::VectorXd fx = fit.f_hat.evaluate(p.xs());
  Eigen::VectorXd expected_grad(p.size());
  for (Eigen::Index j = 0; j < p.size(); ++j) {
    // L'(y, t) = -l'(y - t)
    expected_grad[j] = -p.weights()[j] * loss.derivative(p.ys()[j] - fx[j]);
  }
  RkhsFunction first = s.apply_inverse(RkhsFunction(kernel, p.xs(), expected_grad));
  RkhsFunction via = s.apply_inverse(RkhsFunction(kernel, p.xs(), -2.0 * fit.lambda * fit.coefficients()));
  const double gap = combine(first, via, 1.0, -1.0).norm();

  const double dl = loss.derivative(z.y - fit.f_hat(z.x));
  const RkhsFunction inv_feature = s.apply_inverse(feature(kernel, z.x));
  RkhsFunction second(kernel, inv_feature.centers(), dl * inv_feature.coefficients());

  RkhsFunction total = combine(first, second, 1.0, 1.0);
  const double total_norm = total.norm();
  return {std::move(total), total_norm, z, std::move(first), std::move(second), std::move(via), gap};
}

InfluenceResult influence_function(const LossModel& loss, const KernelModel& kernel, const DiscreteDistribution& p,
                                   double lambda, const ContaminationPoint& z, const FitOptions& opts) {
  if (loss.smoothness() != Smoothness::C2) {
    throw NotTwiceDifferentiable(fmt::format(
        "the influence function needs a twice differentiable loss; use the sensitivity curve for {}", loss.name()));
  }
  kernel.require_sup_norm();
  return influence_function(loss, fit(loss, kernel, p, lambda, opts), p, z);
}

RkhsFunction difference_quotient(const LossModel& loss, const FitResult& base, const DiscreteDistribution& p,
                                 const ContaminationPoint& z, double eps, const FitOptions& opts) {
  if (!(eps > 0.0 && eps < 1.0)) throw InvalidArgument(fmt::format("eps must lie in (0, 1), got {}", eps));
  check_fit_matches(base, p);
  const auto contaminated = DiscreteDistribution::mixture(p, DiscreteDistribution::point_mass(z.x, z.y), eps);
  const FitResult moved = fit(loss, base.f_hat.kernel(), contaminated, base.lambda, opts);
  return combine(moved.f_hat, base.f_hat, 1.0 / eps, -1.0 / eps);
}

RkhsFunction difference_quotient(const LossModel& loss, const KernelModel& kernel, const DiscreteDistribution& p,
                                 double lambda, const ContaminationPoint& z, double eps, const FitOptions& opts) {
  return difference_quotient(loss, fit(loss, kernel, p, lambda, opts), p, z, eps, opts);
}

SensitivityResult sensitivity_curve(const LossModel& loss, const FitResult& base, const Dataset& data,
                                    const ContaminationPoint& z, const FitOptions& opts) {
  if (base.f_hat.size() != data.size() || base.f_hat.centers() != data.xs) {
    throw InvalidArgument("base fit is not centered on the data");
  }
  const double n = static_cast<double>(data.size() + 1);
  const FitResult with_z = fit(loss, base.f_hat.kernel(), data.with_point(z.x, z.y), base.lambda, opts);
  RkhsFunction sc = combine(with_z.f_hat, base.f_hat, n, -n);
  const double norm = sc.norm();
  return {std::move(sc), norm};
}

SensitivityResult sensitivity_curve(const LossModel& loss, const KernelModel& kernel, const Dataset& data,
                                    double lambda, const ContaminationPoint& z, const FitOptions& opts) {
  return sensitivity_curve(loss, fit(loss, kernel, data, lambda, opts), data, z, opts);
}

std::optional<double> sensitivity_bound(const LossModel& loss, const KernelModel& kernel, double lambda) {
  const auto lip = loss.lipschitz_constant();
  const auto sup = kernel.sup_norm();
  if (!lip || !sup) return std::nullopt;
  return 2.0 / lambda * *sup * *lip;
}

BoundsReport bounds_report(const LossModel& loss, const FitResult& base, const DiscreteDistribution& p,
                           const DiscreteDistribution& q, double eps, const FitOptions& opts) {
  const KernelModel& kernel = base.f_hat.kernel();
  const double sup = kernel.require_sup_norm();
  if (!(eps >= 0.0 && eps <= 1.0)) throw InvalidArgument(fmt::format("eps must lie in [0, 1], got {}", eps));
  check_fit_matches(base, p);

  BoundsReport rep;
  rep.eps = eps;
  rep.lambda = base.lambda;
  rep.type_constant = loss.type_constant();
  rep.order_p = loss.order_p();
  rep.kernel_sup_norm = sup;
  rep.lipschitz_constant = loss.lipschitz_constant();
  rep.delta_p_lambda = norm_bound(loss, p, base.lambda);
  rep.observed_norm = base.norm();

  const double lambda = base.lambda;
  const double c = rep.type_constant;
  const double pp = rep.order_p;
  const double delta = rep.delta_p_lambda;
  const auto diff = DiscreteDistribution::difference(p, q);
  rep.moment_p_a = moment(p, loss);
  rep.moment_q_a = moment(q, loss);
  rep.moment_diff_p_minus_1 = moment(diff, pp - 1.0);
  rep.moment_diff_0 = moment(diff, 0.0);
  rep.moment_p_p = moment(p, pp);

  if (eps == 0.0) {
    rep.delta_shift_bound = 0.0;
  } else if (delta == 0.0) {
    rep.delta_shift_bound = std::numeric_limits<double>::infinity();
  } else {
    rep.delta_shift_bound =
        2.0 * c / (lambda * delta) * eps *
        (rep.moment_p_a + rep.moment_q_a + std::pow(2.0, pp + 1.0) * std::pow(delta, pp) * std::pow(sup, pp) + 2.0);
  }
  rep.order_p_shift_bound =
      c / lambda * sup * eps *
      (rep.moment_diff_p_minus_1 +
       rep.moment_diff_0 * (std::pow(sup, pp - 1.0) * std::pow(rep.moment_p_p, (pp - 1.0) / 2.0) *
                                std::pow(lambda, (1.0 - pp) / 2.0) +
                            1.0));
  if (rep.lipschitz_constant) {
    rep.lipschitz_shift_bound = sup * *rep.lipschitz_constant * rep.moment_diff_0 * eps / lambda;
  }
  rep.sc_bound = sensitivity_bound(loss, kernel, lambda);

  if (eps > 0.0) {
    const auto mixed = DiscreteDistribution::mixture(p, q, eps);
    const FitResult moved = fit(loss, kernel, mixed, lambda, opts);
    rep.observed_shift = combine(moved.f_hat, base.f_hat, 1.0, -1.0).norm();
  }

  auto exceeds = [](double observed, double bound) { return observed > bound * (1.0 + 1e-9) + 1e-12; };
  rep.norm_bound_violated = exceeds(rep.observed_norm, delta);
  rep.delta_shift_violated = exceeds(rep.observed_shift, rep.delta_shift_bound);
  rep.lipschitz_shift_violated = rep.lipschitz_shift_bound && exceeds(rep.observed_shift, *rep.lipschitz_shift_bound);
  return rep;
}

BoundsReport bounds_report(const LossModel& loss, const KernelModel& kernel, const DiscreteDistribution& p,
                           const DiscreteDistribution& q, double lambda, double eps, const FitOptions& opts) {
  kernel.require_sup_norm();
  return bounds_report(loss, fit(loss, kernel, p, lambda, opts), p, q, eps, opts);
}

}  // namespace kbr
