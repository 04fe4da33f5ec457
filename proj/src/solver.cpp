#include "kbr/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <fmt/format.h>

#include "kbr/errors.hpp"
#include "linalg_detail.hpp"

namespace kbr {

std::string to_string(SolverKind kind) {
  switch (kind) {
    case SolverKind::automatic: return "automatic";
    case SolverKind::newton: return "newton";
    case SolverKind::smoothed_newton: return "smoothed_newton";
    case SolverKind::subgradient: return "subgradient";
    case SolverKind::closed_form: return "closed_form";
  }
  return {};
}

namespace {

void check_lambda(double lambda) {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) {
    throw InvalidLambda(fmt::format("lambda must be > 0, got {}", lambda));
  }
}

// The loss as seen by the Newton solver. With band > 0 every kink of a
// piecewise-linear loss is replaced by a quadratic on [k - band/2, k + band/2]
// whose derivative interpolates the two one-sided slopes linearly. Huber gets
// its generalized second derivative.
class WorkingLoss {
 public:
  WorkingLoss(const LossModel& loss, double band) : loss_(loss), band_(band), kinks_(loss.kinks()) {}

  double value(double r) const {
    if (const Kink* k = band_of(r)) {
      const double s = r - (k->location - 0.5 * band_);
      return loss_.value(k->location - 0.5 * band_) + k->slope_left * s +
             (k->slope_right - k->slope_left) * s * s / (2.0 * band_);
    }
    return loss_.value(r);
  }

  double derivative(double r) const {
    if (const Kink* k = band_of(r)) {
      const double t = (r - (k->location - 0.5 * band_)) / band_;
      return k->slope_left + (k->slope_right - k->slope_left) * t;
    }
    if (!kinks_.empty()) return loss_.right_derivative(r);
    return loss_.derivative(r);
  }

  double curvature(double r) const {
    switch (loss_.kind()) {
      case LossKind::least_squares:
      case LossKind::logistic: return loss_.second_derivative(r);
      case LossKind::huber: return std::abs(r) <= loss_.parameter() ? 1.0 : 0.0;
      default: break;
    }
    if (const Kink* k = band_of(r)) return (k->slope_right - k->slope_left) / band_;
    return 0.0;
  }

 private:
  const Kink* band_of(double r) const {
    if (band_ <= 0.0) return nullptr;
    for (const auto& k : kinks_) {
      if (std::abs(r - k.location) <= 0.5 * band_) return &k;
    }
    return nullptr;
  }

  const LossModel& loss_;
  double band_;
  std::vector<Kink> kinks_;
};

// Weighted regularized risk over the span of the support points.
struct Problem {
  const LossModel& loss;
  KernelModel kernel;
  Points xs;
  Eigen::VectorXd ys;
  Eigen::VectorXd w;
  double lambda;
  Eigen::MatrixXd g;

  Problem(const LossModel& l, const KernelModel& k, const DiscreteDistribution& p, double lam)
      : loss(l), kernel(k), xs(p.xs()), ys(p.ys()), w(p.weights()), lambda(lam), g(gram(k, p.xs())) {}

  Eigen::Index n() const { return ys.size(); }

  template <class Loss>
  double objective(const Loss& l, const Eigen::VectorXd& alpha, const Eigen::VectorXd& f) const {
    double data = 0.0;
    for (Eigen::Index i = 0; i < n(); ++i) data += w[i] * l.value(ys[i] - f[i]);
    return data + lambda * std::max(0.0, alpha.dot(f));
  }

  FitResult result(const Eigen::VectorXd& alpha, SolverKind kind, int iterations, double kink_tol) const {
    const Eigen::VectorXd f = g * alpha;
    FitResult out{RkhsFunction(kernel, xs, alpha), lambda, objective(loss, alpha, f), 0.0, iterations, kind};
    out.stationarity_residual = certificate(alpha, kink_tol);
    return out;
  }

  double certificate(const Eigen::VectorXd& alpha, double kink_tol) const {
    const Eigen::VectorXd f = g * alpha;
    const double widen = loss.smoothness() == Smoothness::C0 ? kink_tol : 0.0;
    // v = 2 lambda alpha + w h with h_i in [lo_i, hi_i].
    Eigen::VectorXd v(n()), lo(n()), hi(n());
    for (Eigen::Index i = 0; i < n(); ++i) {
      const double r = ys[i] - f[i];
      // h = -l'(r), so the admissible range flips.
      const double h_lo = -loss.right_derivative(r + widen);
      const double h_hi = -loss.left_derivative(r - widen);
      const double base = 2.0 * lambda * alpha[i];
      lo[i] = base + w[i] * h_lo;
      hi[i] = base + w[i] * h_hi;
      if (lo[i] > hi[i]) std::swap(lo[i], hi[i]);
      v[i] = std::clamp(0.0, lo[i], hi[i]);
    }
    std::vector<Eigen::Index> free;
    for (Eigen::Index i = 0; i < n(); ++i) {
      if (hi[i] > lo[i] && g(i, i) > 0.0) free.push_back(i);
    }
    if (!free.empty()) {
      // Projected coordinate descent on v^T G v over the box.
      Eigen::VectorXd gv = g * v;
      for (int sweep = 0; sweep < 200; ++sweep) {
        double moved = 0.0;
        for (auto i : free) {
          const double target = std::clamp(v[i] - gv[i] / g(i, i), lo[i], hi[i]);
          const double delta = target - v[i];
          if (delta != 0.0) {
            v[i] = target;
            gv += delta * g.col(i);
            moved = std::max(moved, std::abs(delta));
          }
        }
        if (moved <= 1e-15 * (1.0 + v.cwiseAbs().maxCoeff())) break;
      }
    }
    return quadratic_norm(g, v);
  }

  double objective(const LossModel& l, const Eigen::VectorXd& alpha, const Eigen::VectorXd& f) const {
    return objective<LossModel>(l, alpha, f);
  }

  // Solves (2 lambda I + D G) d = -v.
  Eigen::VectorXd newton_direction(const Eigen::VectorXd& d_curv, const Eigen::VectorXd& v) const {
    return detail::solve_shifted(g, d_curv, -v, 2.0 * lambda);
  }

  struct NewtonOutcome {
    int iterations = 0;
    double residual = 0.0;
  };

  // Damped Newton on the working loss, Armijo backtracking with c = 1e-4.
  NewtonOutcome newton(const WorkingLoss& l, Eigen::VectorXd& alpha, int max_iter, double target) const {
    NewtonOutcome out;
    Eigen::VectorXd f = g * alpha;
    double obj = objective(l, alpha, f);
    Eigen::VectorXd s(n()), curv(n());
    for (; out.iterations < max_iter; ++out.iterations) {
      for (Eigen::Index i = 0; i < n(); ++i) {
        const double r = ys[i] - f[i];
        s[i] = l.derivative(r);
        curv[i] = w[i] * l.curvature(r);
      }
      const Eigen::VectorXd v = 2.0 * lambda * alpha - w.cwiseProduct(s);
      const Eigen::VectorXd gv = g * v;
      out.residual = std::sqrt(std::max(0.0, v.dot(gv)));
      if (out.residual <= target) break;
      const Eigen::VectorXd d = newton_direction(curv, v);
      const Eigen::VectorXd gd = g * d;
      const double slope = gv.dot(d);
      if (!(slope < 0.0)) break;
      double t = 1.0;
      bool accepted = false;
      const double slack = 8.0 * std::numeric_limits<double>::epsilon() * (std::abs(obj) + 1e-300);
      for (int k = 0; k < 60; ++k, t *= 0.5) {
        const Eigen::VectorXd a_new = alpha + t * d;
        const Eigen::VectorXd f_new = f + t * gd;
        const double obj_new = objective(l, a_new, f_new);
        if (obj_new <= obj + 1e-4 * t * slope + slack) {
          alpha = a_new;
          f = f_new;
          obj = obj_new;
          accepted = true;
          break;
        }
      }
      if (!accepted) break;
    }
    return out;
  }
};

Eigen::VectorXd initial_alpha(const Problem& prob, const FitOptions& opts) {
  if (!opts.initial_coefficients) return Eigen::VectorXd::Zero(prob.n());
  if (opts.initial_coefficients->size() != prob.n()) {
    throw DimensionMismatch(fmt::format("initial coefficients have length {}, expected {}",
                                        opts.initial_coefficients->size(), prob.n()));
  }
  return *opts.initial_coefficients;
}

FitResult checked(FitResult result, double tol) {
  if (!(result.stationarity_residual <= tol)) {
    throw NonConvergence(fmt::format("{} solver stopped after {} iterations with stationarity residual {:.3e} > {:.3e}",
                                     to_string(result.solver_kind), result.iterations,
                                     result.stationarity_residual, tol),
                         result.stationarity_residual);
  }
  return result;
}

FitResult fit_newton(const Problem& prob, const FitOptions& opts) {
  Eigen::VectorXd alpha = initial_alpha(prob, opts);
  if (auto start = prob.result(alpha, SolverKind::newton, 0, opts.kink_tol);
      start.stationarity_residual <= 1e-3 * opts.tol) {
    return start;
  }
  const WorkingLoss l(prob.loss, 0.0);
  const auto out = prob.newton(l, alpha, opts.max_newton_iterations, 1e-3 * opts.tol);
  return prob.result(alpha, SolverKind::newton, out.iterations, opts.kink_tol);
}

FitResult fit_smoothed_newton(const Problem& prob, const FitOptions& opts) {
  Eigen::VectorXd alpha = initial_alpha(prob, opts);
  if (auto start = prob.result(alpha, SolverKind::smoothed_newton, 0, opts.kink_tol);
      start.stationarity_residual <= 1e-3 * opts.tol) {
    return start;
  }
  const auto kinks = prob.loss.kinks();
  double band = 1.0;
  for (std::size_t i = 1; i < kinks.size(); ++i) {
    band = std::min(band, kinks[i].location - kinks[i - 1].location);
  }
  const double final_band = opts.kink_tol;
  int iterations = 0;
  while (true) {
    band = std::max(band, final_band);
    const WorkingLoss l(prob.loss, band);
    iterations += prob.newton(l, alpha, opts.max_newton_iterations, 1e-3 * opts.tol).iterations;
    if (band <= final_band) break;
    band *= 0.1;
  }
  return prob.result(alpha, SolverKind::smoothed_newton, iterations, opts.kink_tol);
}

FitResult fit_subgradient(const Problem& prob, const FitOptions& opts) {
  Eigen::VectorXd alpha = initial_alpha(prob, opts);
  const double radius = std::sqrt(prob.objective(prob.loss, Eigen::VectorXd::Zero(prob.n()),
                                                 Eigen::VectorXd::Zero(prob.n())) /
                                  prob.lambda);
  Eigen::VectorXd best = alpha;
  double best_obj = std::numeric_limits<double>::infinity();
  Eigen::VectorXd s(prob.n());
  int t = 0;
  for (; t < opts.subgradient_budget; ++t) {
    const Eigen::VectorXd f = prob.g * alpha;
    const double obj = prob.objective(prob.loss, alpha, f);
    if (obj < best_obj) {
      best_obj = obj;
      best = alpha;
    }
    for (Eigen::Index i = 0; i < prob.n(); ++i) {
      const auto sub = prob.loss.subdifferential(prob.ys[i] - f[i]);
      s[i] = 0.5 * (sub.lo + sub.hi);
    }
    const double step = 1.0 / (2.0 * prob.lambda * (t + 1.0));
    alpha -= step * (2.0 * prob.lambda * alpha - prob.w.cwiseProduct(s));
    const double nrm = quadratic_norm(prob.g, alpha);
    if (nrm > radius) alpha *= radius / nrm;
  }
  {
    const Eigen::VectorXd f = prob.g * alpha;
    if (prob.objective(prob.loss, alpha, f) < best_obj) best = alpha;
  }
  return prob.result(best, SolverKind::subgradient, t, opts.kink_tol);
}

FitResult fit_closed_form(const Problem& prob) {
  if (prob.loss.kind() != LossKind::least_squares) {
    throw InvalidArgument("closed-form solve is only available for the least squares loss");
  }
  std::vector<Eigen::Index> support;
  for (Eigen::Index i = 0; i < prob.n(); ++i) {
    if (prob.w[i] > 0.0) support.push_back(i);
  }
  Eigen::VectorXd alpha = Eigen::VectorXd::Zero(prob.n());
  if (!support.empty()) {
    Eigen::MatrixXd a = prob.g(support, support);
    Eigen::VectorXd b(static_cast<Eigen::Index>(support.size()));
    for (std::size_t k = 0; k < support.size(); ++k) {
      a(k, k) += prob.lambda / prob.w[support[k]];
      b[k] = prob.ys[support[k]];
    }
    const Eigen::VectorXd sol = solve_spd(a, b);
    for (std::size_t k = 0; k < support.size(); ++k) alpha[support[k]] = sol[k];
  }
  return prob.result(alpha, SolverKind::closed_form, 1, 0.0);
}

void check_weights(const DiscreteDistribution& p) {
  if (p.size() < 1) throw InvalidArgument("fitting needs at least one support point");
  if (!p.is_nonnegative()) throw InvalidArgument("fitting needs nonnegative weights");
}

void check_centers(const DiscreteDistribution& p, const RkhsFunction& f) {
  if (f.size() != p.size() || f.dim() != p.dim()) {
    throw DimensionMismatch(fmt::format("expansion has {} centers, expected the {} support points", f.size(), p.size()));
  }
  if (f.centers() != p.xs()) {
    throw InvalidArgument("expansion centers differ from the support points");
  }
}

}  // namespace

double objective(const LossModel& loss, const KernelModel& kernel, const DiscreteDistribution& p, double lambda,
                 const Eigen::VectorXd& alpha) {
  check_lambda(lambda);
  if (alpha.size() != p.size()) {
    throw DimensionMismatch(fmt::format("{} coefficients for {} points", alpha.size(), p.size()));
  }
  const Problem prob(loss, kernel, p, lambda);
  return prob.objective(loss, alpha, prob.g * alpha);
}

double objective(const LossModel& loss, const KernelModel& kernel, const Dataset& data, double lambda,
                 const Eigen::VectorXd& alpha) {
  return objective(loss, kernel, DiscreteDistribution::empirical(data), lambda, alpha);
}

double risk(const LossModel& loss, const DiscreteDistribution& p, const RkhsFunction& f) {
  const Eigen::VectorXd fx = f.evaluate(p.xs());
  double sum = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) sum += p.weights()[i] * loss.value(p.ys()[i] - fx[i]);
  return sum;
}

double norm_bound(const LossModel& loss, const DiscreteDistribution& p, double lambda) {
  check_lambda(lambda);
  double r0 = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) r0 += p.weights()[i] * loss.value(p.ys()[i]);
  return std::sqrt(std::max(0.0, r0) / lambda);
}

FitResult fit(const LossModel& loss, const KernelModel& kernel, const DiscreteDistribution& p, double lambda,
              const FitOptions& opts) {
  check_lambda(lambda);
  check_weights(p);
  const Problem prob(loss, kernel, p, lambda);
  SolverKind kind = opts.solver;
  if (kind == SolverKind::automatic) {
    kind = loss.smoothness() == Smoothness::C0 ? SolverKind::smoothed_newton : SolverKind::newton;
  }
  switch (kind) {
    case SolverKind::closed_form: return checked(fit_closed_form(prob), opts.tol);
    case SolverKind::newton:
      if (loss.smoothness() == Smoothness::C0) {
        throw InvalidArgument(fmt::format("plain Newton needs a C1 loss; {} has kinks", loss.name()));
      }
      return checked(fit_newton(prob, opts), opts.tol);
    case SolverKind::smoothed_newton: return checked(fit_smoothed_newton(prob, opts), opts.tol);
    case SolverKind::subgradient: return checked(fit_subgradient(prob, opts), opts.tol);
    case SolverKind::automatic: break;
  }
  throw InvalidArgument("unreachable solver selection");
}

FitResult fit(const LossModel& loss, const KernelModel& kernel, const Dataset& data, double lambda,
              const FitOptions& opts) {
  return fit(loss, kernel, DiscreteDistribution::empirical(data), lambda, opts);
}

FitResult closed_form_ls(const KernelModel& kernel, const DiscreteDistribution& p, double lambda) {
  check_lambda(lambda);
  check_weights(p);
  static const LossModel ls = LossModel::least_squares();
  return fit_closed_form(Problem(ls, kernel, p, lambda));
}

FitResult closed_form_ls(const KernelModel& kernel, const Dataset& data, double lambda) {
  return closed_form_ls(kernel, DiscreteDistribution::empirical(data), lambda);
}

double stationarity_certificate(const LossModel& loss, const DiscreteDistribution& p, double lambda,
                                const RkhsFunction& f_hat, double kink_tol) {
  check_lambda(lambda);
  check_centers(p, f_hat);
  const Problem prob(loss, f_hat.kernel(), p, lambda);
  return prob.certificate(f_hat.coefficients(), kink_tol);
}

double stationarity_certificate(const LossModel& loss, const Dataset& data, double lambda,
                                const RkhsFunction& f_hat, double kink_tol) {
  return stationarity_certificate(loss, DiscreteDistribution::empirical(data), lambda, f_hat, kink_tol);
}

}  // namespace kbr
