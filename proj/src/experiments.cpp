#include "kbr/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <random>
#include <thread>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <fmt/format.h>

#include "kbr/errors.hpp"
#include "parallel.hpp"
#include "parse_util.hpp"

namespace kbr {

namespace {

double override_or(const ScenarioSpec& spec, const std::string& key, double fallback) {
  auto it = spec.overrides.find(key);
  return it == spec.overrides.end() ? fallback : it->second;
}

void check_overrides(const ScenarioSpec& spec, std::initializer_list<std::string_view> allowed) {
  for (const auto& [key, value] : spec.overrides) {
    if (key == "sigma") continue;
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw InvalidArgument(fmt::format("scenario {} does not accept override '{}'", spec.name, key));
    }
  }
}

Dataset fig1a_data(std::uint64_t seed, double sigma) {
  constexpr int n = 101;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  Points xs(n, 1);
  Eigen::VectorXd ys(n);
  for (int i = 0; i < n; ++i) {
    xs(i, 0) = (i - 50) / 10.0;
    ys[i] = xs(i, 0) + sigma * noise(rng);
  }
  return {std::move(xs), std::move(ys)};
}

Dataset append(const Dataset& data, std::initializer_list<std::pair<double, double>> points,
               std::vector<Eigen::Index>& outliers) {
  Dataset out = data;
  for (auto [x, y] : points) {
    outliers.push_back(out.size());
    out = out.with_point(Eigen::VectorXd::Constant(1, x), y);
  }
  return out;
}

Dataset uniform_design(std::mt19937_64& rng, int n, double sigma, double x_min, double x_max, double offset = 0.0) {
  std::uniform_real_distribution<double> ux(x_min, x_max);
  std::normal_distribution<double> noise(0.0, 1.0);
  Points xs(n, 1);
  Eigen::VectorXd ys(n);
  for (int i = 0; i < n; ++i) {
    xs(i, 0) = ux(rng);
    ys[i] = xs(i, 0) + offset + sigma * noise(rng);
  }
  return {std::move(xs), std::move(ys)};
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

// Risk of f on the test set, evaluated in row blocks.
double test_risk(const LossModel& loss, const RkhsFunction& f, const Dataset& test) {
  constexpr Eigen::Index block = 4096;
  double sum = 0.0;
  for (Eigen::Index start = 0; start < test.size(); start += block) {
    const auto len = std::min(block, test.size() - start);
    const Eigen::VectorXd fx = f.evaluate(test.xs.middleRows(start, len));
    for (Eigen::Index i = 0; i < len; ++i) sum += loss.value(test.ys[start + i] - fx[i]);
  }
  return sum / static_cast<double>(test.size());
}

}  // namespace

int worker_count(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("KBR_THREADS")) {
    try {
      const long v = detail::parse_long(env, "KBR_THREADS");
      if (v > 0) return static_cast<int>(v);
    } catch (const Error&) {
    }
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

ScenarioData generate(const ScenarioSpec& spec) {
  const double sigma = override_or(spec, "sigma", 1.0);
  if (!(sigma >= 0.0)) throw InvalidArgument("scenario noise sigma must be >= 0");
  ScenarioData out;
  if (spec.name == "fig1a") {
    check_overrides(spec, {});
    out.data = fig1a_data(spec.seed, sigma);
  } else if (spec.name == "fig1b") {
    check_overrides(spec, {});
    out.data = fig1a_data(spec.seed, sigma);
    // The observation at x = -2 becomes (-2, 100).
    constexpr Eigen::Index at_minus2 = 30;
    out.data.ys[at_minus2] = 100.0;
    out.outliers.push_back(at_minus2);
  } else if (spec.name == "fig1c") {
    check_overrides(spec, {"copies"});
    const double copies = override_or(spec, "copies", 3.0);
    if (copies != std::floor(copies) || copies < 1.0 || copies > 3.0) {
      throw InvalidArgument(fmt::format("fig1c copies must be 1, 2 or 3, got {}", copies));
    }
    out.data = fig1a_data(spec.seed, sigma);
    for (int c = 0; c < static_cast<int>(copies); ++c) out.data = append(out.data, {{100.0, 0.0}}, out.outliers);
  } else if (spec.name == "fig1d") {
    check_overrides(spec, {"caption_points"});
    out.data = fig1a_data(spec.seed, sigma);
    if (override_or(spec, "caption_points", 0.0) != 0.0) {
      out.data = append(out.data, {{100.0, 0.0}, {100.0, 100.0}}, out.outliers);
    } else {
      out.data = append(out.data, {{100.0, 100.0}, {0.0, 100.0}}, out.outliers);
    }
  } else if (spec.name == "consistency") {
    check_overrides(spec, {"n", "x_min", "x_max"});
    const double n = override_or(spec, "n", 100.0);
    if (n < 1.0 || n != std::floor(n)) throw InvalidArgument("consistency scenario needs integer n >= 1");
    const double lo = override_or(spec, "x_min", -5.0);
    const double hi = override_or(spec, "x_max", 5.0);
    if (!(lo < hi)) throw InvalidArgument("consistency scenario needs x_min < x_max");
    std::mt19937_64 rng(spec.seed);
    out.data = uniform_design(rng, static_cast<int>(n), sigma, lo, hi);
  } else {
    throw UnknownScenario(fmt::format("unknown scenario '{}'", spec.name));
  }
  return out;
}

double bayes_offset(const LossModel& loss, const GaussianNoise& noise) {
  if (loss.kind() == LossKind::pinball) {
    return noise.sigma * boost::math::quantile(boost::math::normal(), loss.parameter());
  }
  return 0.0;
}

double expected_loss_quadrature(const LossModel& loss, const GaussianNoise& noise, double offset) {
  if (!(noise.sigma > 0.0)) throw UnsupportedNoiseModel("quadrature needs sigma > 0");
  const boost::math::normal dist(0.0, noise.sigma);
  auto integrand = [&](double e) { return loss.value(e - offset) * boost::math::pdf(dist, e); };
  std::vector<double> breaks;
  for (const auto& k : loss.kinks()) breaks.push_back(k.location + offset);
  if (loss.kind() == LossKind::huber) {
    breaks.push_back(-loss.parameter() + offset);
    breaks.push_back(loss.parameter() + offset);
  }
  breaks.push_back(offset);
  std::sort(breaks.begin(), breaks.end());
  breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());

  using gk = boost::math::quadrature::gauss_kronrod<double, 61>;
  constexpr unsigned depth = 20;
  constexpr double tol = 1e-13;
  double total = gk::integrate(integrand, -std::numeric_limits<double>::infinity(), breaks.front(), depth, tol);
  for (std::size_t i = 1; i < breaks.size(); ++i) {
    total += gk::integrate(integrand, breaks[i - 1], breaks[i], depth, tol);
  }
  total += gk::integrate(integrand, breaks.back(), std::numeric_limits<double>::infinity(), depth, tol);
  return total;
}

double bayes_risk(const LossModel& loss, const GaussianNoise& noise) {
  const double s = noise.sigma;
  if (!(s > 0.0) || !std::isfinite(s)) throw UnsupportedNoiseModel("bayes risk needs gaussian noise with sigma > 0");
  const boost::math::normal std_normal;
  switch (loss.kind()) {
    case LossKind::least_squares: return s * s;
    case LossKind::eps_insensitive: {
      const double e = loss.parameter();
      return 2.0 * (s * boost::math::pdf(std_normal, e / s) - e * boost::math::cdf(boost::math::complement(std_normal, e / s)));
    }
    case LossKind::pinball:
      return s * boost::math::pdf(std_normal, boost::math::quantile(std_normal, loss.parameter()));
    default: return expected_loss_quadrature(loss, noise, bayes_offset(loss, noise));
  }
}

LambdaSchedule LambdaSchedule::parse(std::string_view text) {
  auto s = detail::trim(text);
  if (s.substr(0, 7) == "lambda=") s.remove_prefix(7);
  LambdaSchedule out;
  const auto star = s.find('*');
  if (star != std::string_view::npos) {
    out.scale = detail::parse_double(s.substr(0, star), "schedule scale");
    s.remove_prefix(star + 1);
  }
  s = detail::trim(s);
  if (s.substr(0, 2) != "n^") {
    throw InvalidArgument(fmt::format("schedule '{}' must look like lambda=n^-0.25 or lambda=C*n^-0.25", text));
  }
  out.exponent = -detail::parse_double(s.substr(2), "schedule exponent");
  if (!(out.scale > 0.0)) throw InvalidArgument("schedule scale must be > 0");
  return out;
}

double LambdaSchedule::operator()(double n) const { return scale * std::pow(n, -exponent); }

std::string LambdaSchedule::spec() const {
  if (scale == 1.0) return fmt::format("lambda=n^{}", -exponent);
  return fmt::format("lambda={}*n^{}", scale, -exponent);
}

double consistency_exponent(const LossModel& loss) {
  const double p = loss.order_p();
  return std::max(2.0 * p, p * p);
}

void validate_schedule(const LossModel& loss, const LambdaSchedule& schedule, const std::vector<int>& ns) {
  const double pstar = consistency_exponent(loss);
  if (!(schedule.exponent > 0.0)) {
    throw InvalidSchedule(fmt::format("{} does not tend to 0", schedule.spec()));
  }
  if (!(1.0 - schedule.exponent * pstar > 0.0)) {
    throw InvalidSchedule(fmt::format("lambda_n^{} n = O(n^{}) does not diverge for {} (p* = {})", pstar,
                                      1.0 - schedule.exponent * pstar, schedule.spec(), pstar));
  }
  if (ns.empty()) throw InvalidSchedule("empty n-grid");
  for (std::size_t i = 0; i < ns.size(); ++i) {
    if (ns[i] < 1) throw InvalidSchedule(fmt::format("n-grid entry {} is not positive", ns[i]));
    if (i == 0) continue;
    if (ns[i] <= ns[i - 1]) throw InvalidSchedule("n-grid must be strictly increasing");
    const double l0 = schedule(ns[i - 1]), l1 = schedule(ns[i]);
    if (!(l1 < l0)) throw InvalidSchedule(fmt::format("lambda_n does not decrease between n={} and n={}", ns[i - 1], ns[i]));
    if (!(std::pow(l1, pstar) * ns[i] > std::pow(l0, pstar) * ns[i - 1])) {
      throw InvalidSchedule(
          fmt::format("lambda_n^p* n does not increase between n={} and n={}", ns[i - 1], ns[i]));
    }
  }
}

ConsistencyRunResult consistency_study(const LossModel& loss, const KernelModel& kernel,
                                       const LambdaSchedule& schedule, const std::vector<int>& ns, int seeds,
                                       const ConsistencyOptions& opts) {
  validate_schedule(loss, schedule, ns);
  if (seeds < 1) throw InvalidArgument("consistency study needs at least one seed");
  if (opts.test_size < 2) throw InvalidArgument("consistency study needs a test set of at least two points");
  const GaussianNoise noise{opts.sigma};

  ConsistencyRunResult out;
  out.n_values = ns;
  for (int n : ns) out.lambda_values.push_back(schedule(n));
  out.bayes_risk = bayes_risk(loss, noise);

  const auto lo = static_cast<std::uint32_t>(opts.base_seed);
  const auto hi = static_cast<std::uint32_t>(opts.base_seed >> 32);
  std::seed_seq test_seq{lo, hi, 0x7e57u};
  std::mt19937_64 test_rng(test_seq);
  const Dataset test = uniform_design(test_rng, opts.test_size, opts.sigma, opts.x_min, opts.x_max);

  {
    const double t = bayes_offset(loss, noise);
    double sum = 0.0, sum_sq = 0.0;
    for (Eigen::Index i = 0; i < test.size(); ++i) {
      const double l = loss.value(test.ys[i] - test.xs(i, 0) - t);
      sum += l;
      sum_sq += l * l;
    }
    const double m = static_cast<double>(test.size());
    out.bayes_predictor_risk = sum / m;
    const double var = std::max(0.0, (sum_sq - m * out.bayes_predictor_risk * out.bayes_predictor_risk) / (m - 1.0));
    out.bayes_predictor_stderr = std::sqrt(var / m);
  }

  out.cells.resize(ns.size() * static_cast<std::size_t>(seeds));
  detail::parallel_for(out.cells.size(), worker_count(opts.threads), [&](std::size_t idx) {
    const int n = ns[idx / seeds];
    const int seed = static_cast<int>(idx % seeds);
    const auto start = std::chrono::steady_clock::now();
    std::seed_seq seq{lo, hi, static_cast<std::uint32_t>(n), static_cast<std::uint32_t>(seed)};
    std::mt19937_64 rng(seq);
    const Dataset train = uniform_design(rng, n, opts.sigma, opts.x_min, opts.x_max);
    const double lambda = schedule(n);
    const FitResult fitted = fit(loss, kernel, train, lambda, opts.fit);
    ConsistencyCell cell;
    cell.n = n;
    cell.seed = seed;
    cell.lambda = lambda;
    cell.risk = test_risk(loss, fitted.f_hat, test);
    cell.gap = cell.risk - out.bayes_risk;
    cell.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    out.cells[idx] = cell;
  });

  for (std::size_t i = 0; i < ns.size(); ++i) {
    std::vector<double> gaps;
    for (int s = 0; s < seeds; ++s) gaps.push_back(out.cells[i * seeds + s].gap);
    out.median_gaps.push_back(median(std::move(gaps)));
  }
  out.decreasing_trend = true;
  for (std::size_t i = 1; i < out.median_gaps.size(); ++i) {
    if (out.median_gaps[i] > out.median_gaps[i - 1]) out.decreasing_trend = false;
  }
  return out;
}

const ComparisonRow& Fig1Comparison::row(std::string_view label, int copies) const {
  for (const auto& r : rows) {
    if (r.label == label && r.copies == copies) return r;
  }
  throw InvalidArgument(fmt::format("comparison has no row '{}' with copies={}", label, copies));
}

Fig1Comparison fig1_comparison(const ScenarioSpec& scenario, const Fig1Hyperparams& hp) {
  struct Config {
    std::string label;
    LossModel loss;
    KernelModel kernel;
    double lambda;
  };
  const auto eps = LossModel::eps_insensitive(hp.eps);
  const Config eps_rbf{"eps_rbf", eps, KernelModel::rbf(hp.gamma), hp.lambda};
  const Config eps_linear{"eps_linear", eps, KernelModel::linear(), hp.lambda};
  const Config ls_rbf{"ls_rbf", LossModel::least_squares(), KernelModel::rbf(hp.gamma), hp.lambda};
  const Config eps_rbf_b{"eps_rbf_b", eps, KernelModel::rbf(hp.gamma_b), hp.lambda_b};

  std::vector<Config> configs;
  std::vector<int> copy_counts{0};
  if (scenario.name == "fig1a" || scenario.name == "fig1b") {
    configs = {eps_rbf, ls_rbf};
  } else if (scenario.name == "fig1c") {
    configs = {eps_linear, eps_rbf};
    const auto it = scenario.overrides.find("copies");
    const int max_copies = it == scenario.overrides.end() ? 3 : static_cast<int>(it->second);
    copy_counts.clear();
    for (int c = 1; c <= max_copies; ++c) copy_counts.push_back(c);
  } else if (scenario.name == "fig1d") {
    configs = {eps_linear, eps_rbf, eps_rbf_b};
  } else {
    throw UnknownScenario(fmt::format("no figure comparison for scenario '{}'", scenario.name));
  }

  ScenarioSpec clean_spec{"fig1a", scenario.seed, {}};
  if (auto it = scenario.overrides.find("sigma"); it != scenario.overrides.end()) clean_spec.overrides["sigma"] = it->second;
  const Dataset clean = generate(clean_spec).data;

  const int g = std::max(hp.grid_points, 2);
  Points grid(g, 1);
  Eigen::Index at_minus2 = 0;
  for (int i = 0; i < g; ++i) {
    grid(i, 0) = -5.0 + 10.0 * i / (g - 1);
    if (std::abs(grid(i, 0) + 2.0) < std::abs(grid(at_minus2, 0) + 2.0)) at_minus2 = i;
  }
  Points minus2 = Points::Constant(1, 1, -2.0);

  Fig1Comparison out;
  out.scenario = scenario.name;
  for (const auto& cfg : configs) {
    const FitResult clean_fit = fit(cfg.loss, cfg.kernel, clean, cfg.lambda, hp.fit);
    const Eigen::VectorXd clean_grid = clean_fit.f_hat.evaluate(grid);
    const double clean_m2 = clean_fit.f_hat.evaluate(minus2)[0];
    Eigen::VectorXd first_grid;
    for (int copies : copy_counts) {
      ScenarioSpec spec = scenario;
      if (copies > 0) spec.overrides["copies"] = copies;
      const Dataset data = generate(spec).data;
      const FitResult f = fit(cfg.loss, cfg.kernel, data, cfg.lambda, hp.fit);
      const Eigen::VectorXd fg = f.f_hat.evaluate(grid);
      ComparisonRow row;
      row.label = cfg.label;
      row.loss = cfg.loss.spec();
      row.kernel = cfg.kernel.spec();
      row.lambda = cfg.lambda;
      row.copies = copies;
      row.deviation_at_minus2 = std::abs(f.f_hat.evaluate(minus2)[0] - clean_m2);
      row.max_deviation = (fg - clean_grid).cwiseAbs().maxCoeff();
      row.max_abs = fg.cwiseAbs().maxCoeff();
      if (copies == 1) first_grid = fg;
      if (copies >= 1) {
        const double scale = first_grid.cwiseAbs().maxCoeff();
        row.change_vs_one_copy = (fg - first_grid).cwiseAbs().maxCoeff() / std::max(scale, 1e-300);
      }
      out.rows.push_back(std::move(row));
    }
  }

  {
    ScenarioSpec spec = scenario;
    if (copy_counts.back() > 0) spec.overrides["copies"] = copy_counts.back();
    const Dataset data = generate(spec).data;
    const Eigen::VectorXd a = fit(eps_rbf.loss, eps_rbf.kernel, data, eps_rbf.lambda, hp.fit).f_hat.evaluate(grid);
    const Eigen::VectorXd b = fit(ls_rbf.loss, ls_rbf.kernel, data, ls_rbf.lambda, hp.fit).f_hat.evaluate(grid);
    out.eps_ls_max_gap = (a - b).cwiseAbs().maxCoeff();
  }
  (void)at_minus2;
  return out;
}

}  // namespace kbr
