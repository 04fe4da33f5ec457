#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "kbr/errors.hpp"
#include "kbr/experiments.hpp"
#include "kbr/robustness.hpp"
#include "kbr/solver.hpp"
#include "test_util.hpp"

using namespace kbr;
using kbr::testing::all_losses;
using kbr::testing::random_dataset;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void criterion(int id, const std::string& name, double time_limit, const std::function<Verdict()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Verdict v;
  try {
    v = body();
  } catch (const std::exception& e) {
    v = {false, fmt::format("exception: {}", e.what())};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::string timing = fmt::format("time={:.2f}s", secs);
  if (time_limit > 0.0) {
    timing += fmt::format(" (limit {:g}s)", time_limit);
    if (secs >= time_limit) {
      v.pass = false;
      timing += " over limit";
    }
  }
  if (!v.pass) ++failures;
  std::printf("%s criterion %d [%s]: %s; %s\n", v.pass ? "PASS" : "FAIL", id, name.c_str(), v.detail.c_str(),
              timing.c_str());
  std::fflush(stdout);
}

const KernelModel kRbf = KernelModel::rbf(0.1);
constexpr double kLambda = 0.05;

std::vector<Dataset> figure_datasets() {
  std::vector<Dataset> out;
  for (auto name : {"fig1a", "fig1b", "fig1c", "fig1d"}) out.push_back(generate({name, 0, {}}).data);
  return out;
}

Verdict oracle_equivalence() {
  std::mt19937_64 rng(101);
  FitOptions opts;
  opts.solver = SolverKind::newton;
  double worst = 0.0;
  int fits = 0;
  for (int d = 0; d < 20; ++d) {
    const Dataset data = random_dataset(rng, 20);
    const Eigen::MatrixXd g = gram(kRbf, data.xs);
    for (double lambda : {0.01, 0.05, 0.5}) {
      const FitResult it = fit(LossModel::least_squares(), kRbf, data, lambda, opts);
      const FitResult cf = closed_form_ls(kRbf, data, lambda);
      worst = std::max(worst, quadratic_norm(g, it.coefficients() - cf.coefficients()));
      ++fits;
    }
  }
  return {worst <= 1e-8, fmt::format("{} fits, max ||f_newton - f_closed||_H = {:.3e} (tol 1e-8)", fits, worst)};
}

Verdict norm_bound_property() {
  double min_slack = INFINITY;
  int fits = 0;
  auto check = [&](const LossModel& loss, const KernelModel& kernel, const Dataset& data, double lambda) {
    const FitResult r = fit(loss, kernel, data, lambda);
    min_slack = std::min(min_slack, norm_bound(loss, DiscreteDistribution::empirical(data), lambda) - r.norm());
    ++fits;
  };
  const auto figs = figure_datasets();
  for (const auto& loss : all_losses()) {
    for (const auto& data : figs) {
      check(loss, kRbf, data, kLambda);
      check(loss, KernelModel::linear(), data, kLambda);
    }
  }
  for (const auto& data : figs) check(LossModel::eps_insensitive(0.1), KernelModel::rbf(0.00001), data, 0.00005);
  std::mt19937_64 rng(202);
  std::uniform_real_distribution<double> log_lambda(-3.0, 0.0);
  std::uniform_int_distribution<int> size(1, 60);
  for (int t = 0; t < 40; ++t) {
    const Dataset data = random_dataset(rng, size(rng), 2.0);
    const double lambda = std::pow(10.0, log_lambda(rng));
    for (const auto& loss : all_losses()) check(loss, kRbf, data, lambda);
  }
  return {min_slack >= 0.0, fmt::format("{} fits (5 losses, figure scenarios, random designs), min slack = {:.4g}",
                                        fits, min_slack)};
}

Verdict stationarity() {
  double worst_smooth = 0.0, worst_kinked = 0.0;
  int fits = 0;
  auto figs = figure_datasets();
  figs.push_back(generate({"fig1c", 0, {{"copies", 1}}}).data);
  std::mt19937_64 rng(303);
  for (int n : {5, 20, 50, 101}) figs.push_back(random_dataset(rng, n, 1.5));
  for (const auto& loss : all_losses()) {
    const bool smooth = loss.smoothness() != Smoothness::C0;
    for (const auto& data : figs) {
      const FitResult r = fit(loss, kRbf, data, kLambda);
      // Recomputed independently of the value the solver reported.
      const double cert = stationarity_certificate(loss, data, kLambda, r.f_hat);
      (smooth ? worst_smooth : worst_kinked) = std::max(smooth ? worst_smooth : worst_kinked, cert);
      ++fits;
    }
  }
  return {worst_smooth <= 1e-6 && worst_kinked <= 1e-4,
          fmt::format("{} fits, n <= 104; max certificate ls/huber/logistic = {:.3e} (tol 1e-6), eps/pinball = {:.3e} "
                      "(tol 1e-4)",
                      fits, worst_smooth, worst_kinked)};
}

Verdict sensitivity_grid() {
  const auto loss = LossModel::eps_insensitive(0.1);
  const Dataset data = generate({"fig1a", 0, {}}).data;
  const FitResult base = fit(loss, kRbf, data, kLambda);
  const double bound = sensitivity_bound(loss, kRbf, kLambda).value();
  double worst = 0.0;
  int violations = 0, cells = 0;
  for (int x = -5; x <= 5; ++x) {
    for (double y : {-1e4, -1e2, 0.0, 1e2, 1e4}) {
      const double s = sensitivity_curve(loss, base, data, {Eigen::VectorXd::Constant(1, x), y}).norm;
      worst = std::max(worst, s);
      violations += s > 40.0;
      ++cells;
    }
  }
  return {violations == 0 && std::abs(bound - 40.0) < 1e-12,
          fmt::format("{} grid points, max ||SC||_H = {:.4f}, bound = {:g} (expected 40), violations = {}", cells,
                      worst, bound, violations)};
}

Verdict least_squares_shift() {
  const auto loss = LossModel::least_squares();
  const Dataset data = generate({"fig1a", 0, {}}).data;
  const auto p = DiscreteDistribution::empirical(data);
  const FitResult base = fit(loss, kRbf, p, kLambda);
  int violations = 0;
  double worst_ratio = 0.0;
  for (const auto& [zx, zy] : std::vector<std::pair<double, double>>{{-2, 100}, {100, 0}, {0, 0}}) {
    const auto q = DiscreteDistribution::point_mass(Eigen::VectorXd::Constant(1, zx), zy);
    for (double eps : {0.01, 0.05, 0.1}) {
      const BoundsReport r = bounds_report(loss, base, p, q, eps);
      violations += r.delta_shift_violated || !(r.observed_shift <= r.delta_shift_bound);
      worst_ratio = std::max(worst_ratio, r.observed_shift / r.delta_shift_bound);
    }
  }
  return {violations == 0,
          fmt::format("9 (z, eps) pairs, max shift/bound = {:.4g}, violations = {}", worst_ratio, violations)};
}

Dataset fifty_points() { return generate({"consistency", 6, {{"n", 50}}}).data; }

Verdict influence_accuracy() {
  const auto p = DiscreteDistribution::empirical(fifty_points());
  FitOptions opts;
  const double eps = 1e-4;
  const double dq_tol = std::max(1e-3, 50.0 * opts.tol / eps);
  const double id_tol = 10.0 * opts.tol / (2.0 * kLambda);
  double worst_dq = 0.0, worst_id = 0.0;
  int cases = 0;
  for (const auto& loss : {LossModel::logistic(), LossModel::least_squares()}) {
    const FitResult base = fit(loss, kRbf, p, kLambda, opts);
    for (const auto& [zx, zy] : std::vector<std::pair<double, double>>{{-2, 100}, {0, 0}, {3, -10}, {4.5, 7}}) {
      const ContaminationPoint z{Eigen::VectorXd::Constant(1, zx), zy};
      const auto inf = influence_function(loss, base, p, z);
      const auto dq = difference_quotient(loss, base, p, z, eps, opts);
      worst_dq = std::max(worst_dq, norm_h(combine(dq, inf.if_function, 1.0, -1.0)));
      worst_id = std::max(worst_id, inf.stationarity_identity_gap);
      ++cases;
    }
  }
  return {worst_dq <= dq_tol && worst_id <= id_tol,
          fmt::format("{} cases (logistic, ls; n=50); max ||DQ - IF||_H = {:.3e} (tol {:.3g}); max first-term gap "
                      "= {:.3e} (tol {:.3g})",
                      cases, worst_dq, dq_tol, worst_id, id_tol)};
}

Verdict dichotomy() {
  const auto p = DiscreteDistribution::empirical(fifty_points());
  auto norms = [&](const LossModel& loss, double x) {
    const FitResult base = fit(loss, kRbf, p, kLambda);
    std::vector<double> v;
    for (double y : {1e4, 1e5, 1e6}) v.push_back(influence_function(loss, base, p, {Eigen::VectorXd::Constant(1, x), y}).if_norm);
    return v;
  };
  bool ok = true;
  double worst_change = 0.0, ratio_lo = INFINITY, ratio_hi = 0.0;
  for (double x : {-2.0, 0.0, 3.0}) {
    const auto lg = norms(LossModel::logistic(), x);
    worst_change = std::max(worst_change, std::abs(lg[2] - lg[0]) / lg[0]);
    const auto ls = norms(LossModel::least_squares(), x);
    for (int i = 0; i < 2; ++i) {
      ratio_lo = std::min(ratio_lo, ls[i + 1] / ls[i]);
      ratio_hi = std::max(ratio_hi, ls[i + 1] / ls[i]);
    }
  }
  ok = worst_change < 0.01 && ratio_lo >= 9.5 && ratio_hi <= 10.5;
  return {ok, fmt::format("x in {{-2,0,3}}: logistic ||IF|| change 1e4->1e6 = {:.3e} (< 1%); least-squares decade "
                          "ratios in [{:.4f}, {:.4f}] (need [9.5, 10.5])",
                          worst_change, ratio_lo, ratio_hi)};
}

Verdict figure_direction() {
  const auto b = fig1_comparison({"fig1b", 0, {}});
  const double ls = b.row("ls_rbf").deviation_at_minus2;
  const double ep = b.row("eps_rbf").deviation_at_minus2;
  const auto c = fig1_comparison({"fig1c", 0, {}});
  const double change = c.row("eps_rbf", 3).change_vs_one_copy;
  const bool pass = ls >= 5.0 * ep && change < 0.1;
  return {pass, fmt::format("fig1b seed 0: LS deviation at -2 = {:.4g}, eps = {:.4g}, ratio = {:.4g} (need >= 5); "
                            "fig1c RBF max|f_3 - f_1| / max|f_1| = {:.4f} (need < 0.1)",
                            ls, ep, ls / ep, change)};
}

Verdict consistency_trend() {
  const auto loss = LossModel::eps_insensitive(0.1);
  const std::vector<int> ns{25, 50, 100, 200, 400, 800};
  const auto res = consistency_study(loss, kRbf, LambdaSchedule{1.0, 0.25}, ns, 11);
  const double quad = expected_loss_quadrature(loss, {1.0});
  std::vector<double> medians;
  for (int n : ns) {
    std::vector<double> gaps;
    for (const auto& c : res.cells) {
      if (c.n == n) gaps.push_back(c.risk - quad);
    }
    std::nth_element(gaps.begin(), gaps.begin() + gaps.size() / 2, gaps.end());
    medians.push_back(gaps[gaps.size() / 2]);
  }
  bool monotone = true;
  for (std::size_t i = 1; i < medians.size(); ++i) monotone = monotone && medians[i] <= medians[i - 1];
  const double ratio = medians.back() / medians.front();
  return {monotone && ratio < 0.5,
          fmt::format("Bayes risk (quadrature) = {:.6f}; median gaps = [{:.4f}]; non-increasing = {}; final/initial = "
                      "{:.3f} (need < 0.5)",
                      quad, fmt::join(medians, ", "), monotone ? "yes" : "no", ratio)};
}

bool at_kink(const LossModel& loss, double r) {
  for (const auto& k : loss.kinks()) {
    if (std::abs(r - k.location) < 1e-4) return true;
  }
  return false;
}

Verdict loss_calculus() {
  const double h = 1e-5;
  int checks = 0, bad = 0;
  double worst = 0.0;
  for (const auto& loss : all_losses()) {
    for (int i = -400; i <= 400; ++i) {
      const double r = 0.025 * i + 0.0013;
      if (at_kink(loss, r)) continue;
      const double d = loss.derivative(r);
      const double fd = (loss.value(r + h) - loss.value(r - h)) / (2.0 * h);
      const double e1 = std::abs(fd - d) / std::max(1.0, std::abs(d));
      worst = std::max(worst, e1);
      bad += e1 > 1e-6;
      ++checks;
      if (loss.smoothness() == Smoothness::C2) {
        const double d2 = loss.second_derivative(r);
        const double fd2 = (loss.derivative(r + h) - loss.derivative(r - h)) / (2.0 * h);
        const double e2 = std::abs(fd2 - d2) / std::max(1.0, d2);
        worst = std::max(worst, e2);
        bad += e2 > 1e-6;
        ++checks;
      }
    }
    // V(r) <= (2/r) sup_{|s| <= 2r} l(s) <= 4 V(2r).
    for (double r : {0.1, 0.5, 1.0, 2.0, 5.0, 10.0}) {
      double sup = 0.0;
      for (int i = 0; i <= 4000; ++i) sup = std::max(sup, loss.value(-2.0 * r + r * i / 1000.0));
      const double mid = 2.0 / r * sup;
      bad += loss.slope(r) > mid * (1.0 + 1e-12);
      bad += mid > 4.0 * loss.slope(2.0 * r) * (1.0 + 1e-12);
      checks += 2;
    }
  }
  const auto logistic = LossModel::logistic();
  double sup_d = 0.0, sup_d2 = 0.0;
  for (int i = -20000; i <= 20000; ++i) {
    const double r = 0.005 * i;
    sup_d = std::max(sup_d, std::abs(logistic.derivative(r)));
    sup_d2 = std::max(sup_d2, logistic.second_derivative(r));
  }
  for (double r : {-1e8, -1e3, 1e3, 1e8}) sup_d = std::max(sup_d, std::abs(logistic.derivative(r)));
  const bool ok = bad == 0 && sup_d <= 1.0 && sup_d2 <= 0.5;
  return {ok, fmt::format("{} checks, {} failed, max relative FD error = {:.3e} (tol 1e-6); logistic sup|l'| = {:.6f}, "
                          "sup l'' = {:.6f}",
                          checks, bad, worst, sup_d, sup_d2)};
}

}  // namespace

int main() {
  criterion(1, "least-squares oracle equivalence", 5.0, oracle_equivalence);
  criterion(2, "norm bound sqrt(R(0)/lambda)", 30.0, norm_bound_property);
  criterion(3, "stationarity certificate", 0.0, stationarity);
  criterion(4, "Lipschitz sensitivity-curve bound", 180.0, sensitivity_grid);
  criterion(5, "least-squares contamination bound", 0.0, least_squares_shift);
  criterion(6, "influence function accuracy", 0.0, influence_accuracy);
  criterion(7, "boundedness dichotomy", 0.0, dichotomy);
  criterion(8, "outlier direction and leverage stability", 0.0, figure_direction);
  criterion(9, "consistency trend", 600.0, consistency_trend);
  criterion(10, "loss calculus", 5.0, loss_calculus);
  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
