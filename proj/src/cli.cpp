#include "kbr/cli.hpp"

#include <cmath>
#include <cstdlib>
#include <iostream>
#include <set>

#include <fmt/format.h>
#include "CLI11.hpp"
#include "json.hpp"

#include "kbr/errors.hpp"
#include "kbr/experiments.hpp"
#include "kbr/io.hpp"
#include "kbr/robustness.hpp"
#include "parallel.hpp"
#include "parse_util.hpp"

namespace kbr::cli {

using nlohmann::json;

namespace {

const std::set<std::string> kCommands{"fit", "influence", "sensitivity", "bounds", "scenario", "consistency"};

struct RawOptions {
  std::string command;
  std::string loss = "eps:0.1";
  std::string kernel = "rbf:0.1";
  std::string domain_box;
  double lambda = 0.05;
  double tol = FitOptions{}.tol;
  std::string solver = "automatic";
  int max_newton_iterations = FitOptions{}.max_newton_iterations;
  int subgradient_budget = FitOptions{}.subgradient_budget;
  std::string data;
  std::string scenario;
  std::string name;
  std::int64_t seed = 0;
  double sigma = 1.0;
  int copies = 3;
  bool caption_points = false;
  std::string out;
  std::string z = "x=-2,y=100";
  std::string grid_x;
  std::string grid_y;
  std::string eps = "0.01,0.05,0.1";
  std::string schedule = "lambda=n^-0.25";
  std::string ns = "25,50,100,200,400,800";
  int seeds = 11;
  int test_size = 100000;
  int threads = 0;
};

[[noreturn]] void field_error(const std::string& field, const std::string& message) {
  throw UsageError(fmt::format("{}: {}", field, message));
}

template <class Fn>
auto field(const std::string& name, Fn&& fn) {
  try {
    return fn();
  } catch (const UsageError&) {
    throw;
  } catch (const Error& e) {
    field_error(name, e.what());
  }
}

SolverKind parse_solver(const std::string& s) {
  for (auto k : {SolverKind::automatic, SolverKind::newton, SolverKind::smoothed_newton, SolverKind::subgradient,
                 SolverKind::closed_form}) {
    if (to_string(k) == s) return k;
  }
  field_error("solver", fmt::format("unknown solver '{}'", s));
}

void parse_point(const std::string& text, Point& x, double& y) {
  std::vector<double> coords;
  std::optional<double> yv;
  for (auto part : detail::split(text, ',')) {
    const auto eq = part.find('=');
    if (eq == std::string_view::npos) field_error("z", "expected key=value pairs like x=-2,y=100");
    const auto key = detail::trim(part.substr(0, eq));
    const double v = field("z", [&] { return detail::parse_double(part.substr(eq + 1), "z"); });
    if (key == "y") {
      yv = v;
    } else if (key == "x" && coords.empty()) {
      coords.push_back(v);
    } else if (key == fmt::format("x{}", coords.size() + 1)) {
      coords.push_back(v);
    } else {
      field_error("z", fmt::format("unexpected key '{}'", key));
    }
  }
  if (coords.empty() || !yv) field_error("z", "needs x and y");
  x = Eigen::Map<Eigen::VectorXd>(coords.data(), static_cast<Eigen::Index>(coords.size()));
  y = *yv;
}

Dataset load_data(const RunConfig& cfg) {
  if (!cfg.data_path.empty()) return read_dataset_csv(cfg.data_path);
  return generate({cfg.scenario, cfg.seed, cfg.scenario_overrides}).data;
}

std::string data_label(const RunConfig& cfg) {
  return cfg.data_path.empty() ? fmt::format("{}(seed={})", cfg.scenario, cfg.seed) : cfg.data_path;
}

void emit(const RunConfig& cfg, const std::string& content, std::ostream& out) {
  if (cfg.out_path.empty()) {
    out << content;
  } else {
    write_atomic(cfg.out_path, content);
  }
}

json function_json(const RkhsFunction& f) {
  json centers = json::array();
  for (Eigen::Index i = 0; i < f.centers().rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < f.centers().cols(); ++j) row.push_back(f.centers()(i, j));
    centers.push_back(row);
  }
  const auto& a = f.coefficients();
  return {{"centers", centers}, {"coefficients", std::vector<double>(a.data(), a.data() + a.size())}};
}

int run_fit(const RunConfig& cfg, std::ostream& out) {
  const Dataset data = load_data(cfg);
  const FitResult r = fit(cfg.loss, cfg.kernel, data, cfg.lambda, cfg.fit);
  const double bound = norm_bound(cfg.loss, DiscreteDistribution::empirical(data), cfg.lambda);
  if (!cfg.out_path.empty()) write_atomic(cfg.out_path, fit_json(cfg.loss, r));
  out << fmt::format("fit: data={} n={} loss={} kernel={} lambda={} objective={:.10g} norm_h={:.10g} "
                     "norm_bound={:.10g} residual={:.3e} solver={} iterations={}\n",
                     data_label(cfg), data.size(), cfg.loss.spec(), cfg.kernel.spec(), cfg.lambda, r.objective,
                     r.norm(), bound, r.stationarity_residual, to_string(r.solver_kind), r.iterations);
  return 0;
}

int run_influence(const RunConfig& cfg, std::ostream& out) {
  const Dataset data = load_data(cfg);
  const auto p = DiscreteDistribution::empirical(data);
  const auto res = influence_function(cfg.loss, cfg.kernel, p, cfg.lambda, {cfg.z_x, cfg.z_y}, cfg.fit);
  if (!cfg.out_path.empty()) {
    json doc{{"loss", cfg.loss.spec()},
             {"kernel", cfg.kernel.spec()},
             {"lambda", cfg.lambda},
             {"z", {{"x", std::vector<double>(cfg.z_x.data(), cfg.z_x.data() + cfg.z_x.size())}, {"y", cfg.z_y}}},
             {"if_norm", res.if_norm},
             {"first_term_norm", res.first_term.norm()},
             {"second_term_norm", res.second_term.norm()},
             {"stationarity_identity_gap", res.stationarity_identity_gap},
             {"if_function", function_json(res.if_function)}};
    write_atomic(cfg.out_path, doc.dump(2) + "\n");
  }
  out << fmt::format("influence: data={} loss={} kernel={} lambda={} z=({},{}) if_norm={:.10g} "
                     "stationarity_identity_gap={:.3e}\n",
                     data_label(cfg), cfg.loss.spec(), cfg.kernel.spec(), cfg.lambda, fmt::join(cfg.z_x, ","),
                     cfg.z_y, res.if_norm, res.stationarity_identity_gap);
  return 0;
}

int run_sensitivity(const RunConfig& cfg, std::ostream& out) {
  const Dataset data = load_data(cfg);
  if (data.dim() != 1) throw DimensionMismatch("the sensitivity grid needs one-dimensional data");
  const FitResult base = fit(cfg.loss, cfg.kernel, data, cfg.lambda, cfg.fit);
  const auto bound = sensitivity_bound(cfg.loss, cfg.kernel, cfg.lambda);
  const auto xs = cfg.grid_x->values();
  const auto ys = cfg.grid_y->values();
  std::vector<double> norms(xs.size() * ys.size());
  detail::parallel_for(norms.size(), worker_count(cfg.threads), [&](std::size_t i) {
    const ContaminationPoint z{Eigen::VectorXd::Constant(1, xs[i / ys.size()]), ys[i % ys.size()]};
    norms[i] = sensitivity_curve(cfg.loss, base, data, z, cfg.fit).norm;
  });
  std::string csv = "z_x,z_y,sc_norm,bound,violated\n";
  int violations = 0;
  double worst = 0.0;
  for (std::size_t i = 0; i < norms.size(); ++i) {
    const bool violated = bound && norms[i] > *bound * (1.0 + 1e-9);
    violations += violated;
    worst = std::max(worst, norms[i]);
    csv += fmt::format("{},{},{},{},{}\n", format_double(xs[i / ys.size()]), format_double(ys[i % ys.size()]),
                       format_double(norms[i]), bound ? format_double(*bound) : "inf", violated ? 1 : 0);
  }
  emit(cfg, csv, out);
  out << fmt::format("sensitivity: data={} loss={} kernel={} lambda={} cells={} max_sc_norm={:.10g} bound={} "
                     "violations={}\n",
                     data_label(cfg), cfg.loss.spec(), cfg.kernel.spec(), cfg.lambda, norms.size(), worst,
                     bound ? fmt::format("{:.10g}", *bound) : "none", violations);
  return 0;
}

int run_bounds(const RunConfig& cfg, std::ostream& out) {
  cfg.kernel.require_sup_norm();
  const Dataset data = load_data(cfg);
  const auto p = DiscreteDistribution::empirical(data);
  const auto q = DiscreteDistribution::point_mass(cfg.z_x, cfg.z_y);
  const FitResult base = fit(cfg.loss, cfg.kernel, p, cfg.lambda, cfg.fit);
  std::vector<BoundsReport> reports;
  for (double e : cfg.eps_values) reports.push_back(bounds_report(cfg.loss, base, p, q, e, cfg.fit));
  const auto doc = bounds_json(cfg.loss, cfg.kernel, reports);
  if (cfg.out_path.empty()) out << doc;
  else write_atomic(cfg.out_path, doc);
  int violations = 0;
  for (const auto& r : reports) violations += r.any_violation();
  out << fmt::format("bounds: data={} loss={} kernel={} lambda={} eps_values={} norm_h={:.10g} violations={}\n",
                     data_label(cfg), cfg.loss.spec(), cfg.kernel.spec(), cfg.lambda, reports.size(), base.norm(),
                     violations);
  return violations == 0 ? 0 : 1;
}

int run_scenario(const RunConfig& cfg, std::ostream& out) {
  const ScenarioData s = generate({cfg.scenario, cfg.seed, cfg.scenario_overrides});
  emit(cfg, dataset_csv(s.data), out);
  out << fmt::format("scenario: name={} seed={} n={} outliers={}\n", cfg.scenario, cfg.seed, s.data.size(),
                     s.outliers.size());
  return 0;
}

int run_consistency(const RunConfig& cfg, std::ostream& out) {
  ConsistencyOptions opts;
  opts.base_seed = cfg.seed;
  opts.test_size = cfg.test_size;
  opts.threads = cfg.threads;
  opts.fit = cfg.fit;
  if (auto it = cfg.scenario_overrides.find("sigma"); it != cfg.scenario_overrides.end()) opts.sigma = it->second;
  const auto res =
      consistency_study(cfg.loss, cfg.kernel, LambdaSchedule::parse(cfg.schedule), cfg.ns, cfg.seeds, opts);
  std::string csv = "n,seed,lambda,risk,bayes_risk,gap\n";
  std::string timing = "n,seed,wall_seconds\n";
  for (const auto& c : res.cells) {
    csv += fmt::format("{},{},{},{},{},{}\n", c.n, c.seed, format_double(c.lambda), format_double(c.risk),
                       format_double(res.bayes_risk), format_double(c.gap));
    timing += fmt::format("{},{},{:.3f}\n", c.n, c.seed, c.wall_seconds);
  }
  emit(cfg, csv, out);
  if (!cfg.out_path.empty()) write_atomic(cfg.out_path + ".timing.csv", timing);
  out << fmt::format("consistency: loss={} kernel={} schedule={} bayes_risk={:.10g} median_gaps=[{:.4g}] "
                     "decreasing_trend={}\n",
                     cfg.loss.spec(), cfg.kernel.spec(), cfg.schedule, res.bayes_risk,
                     fmt::join(res.median_gaps, ","), res.decreasing_trend ? "yes" : "no");
  return 0;
}

}  // namespace

GridSpec GridSpec::parse(const std::string& text, const std::string& name) {
  const auto parts = detail::split(text, ':');
  if (parts.size() != 3) field_error(name, fmt::format("expected lo:hi:count, got '{}'", text));
  GridSpec g;
  field(name, [&] {
    g.lo = detail::parse_double(parts[0], name);
    g.hi = detail::parse_double(parts[1], name);
    g.count = static_cast<int>(detail::parse_long(parts[2], name));
    return 0;
  });
  if (g.count < 1) field_error(name, "count must be >= 1");
  if (!(g.lo <= g.hi)) field_error(name, "lo must not exceed hi");
  if (g.count == 1 && g.lo != g.hi) field_error(name, "a single-point grid needs lo == hi");
  return g;
}

std::vector<double> GridSpec::values() const {
  std::vector<double> v(count);
  for (int i = 0; i < count; ++i) v[i] = count == 1 ? lo : lo + (hi - lo) * i / (count - 1);
  return v;
}

std::string usage() {
  return "usage: kbr <fit|influence|sensitivity|bounds|scenario|consistency> [options]\n"
         "       kbr --help for the option list\n";
}

RunConfig parse_config(const std::vector<std::string>& args) {
  if (args.size() <= 1) throw UsageError(usage());

  RawOptions raw;
  CLI::App app{"Kernel-based regression: fitting and robustness diagnostics", "kbr"};
  app.set_config("--config", "", "Read options from a TOML/INI file; flags override it");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.add_option("command", raw.command, "fit | influence | sensitivity | bounds | scenario | consistency")
      ->required();
  app.add_option("--loss", raw.loss, "ls | eps:E | huber:C | logistic | pinball:TAU");
  app.add_option("--kernel", raw.kernel, "rbf:GAMMA | linear | poly:C,M");
  app.add_option("--domain-box", raw.domain_box, "lo1,hi1[,lo2,hi2,...] bounding the inputs");
  app.add_option("--lambda", raw.lambda, "Regularization parameter (> 0)");
  app.add_option("--tol", raw.tol, "Stationarity tolerance");
  app.add_option("--solver", raw.solver, "automatic | newton | smoothed_newton | subgradient | closed_form");
  app.add_option("--max-newton-iterations", raw.max_newton_iterations);
  app.add_option("--subgradient-budget", raw.subgradient_budget);
  app.add_option("--data", raw.data, "CSV with header x1,...,xd,y");
  app.add_option("--scenario", raw.scenario, "Generate the data from a named scenario instead of --data");
  app.add_option("--name", raw.name, "Scenario name for the scenario command");
  auto* seed_opt = app.add_option("--seed", raw.seed, "Random seed (default: KBR_SEED or 0)");
  app.add_option("--sigma", raw.sigma, "Noise standard deviation of generated data");
  app.add_option("--copies", raw.copies, "fig1c: number of (100, 0) copies");
  app.add_flag("--caption-points", raw.caption_points, "fig1d: add (100,0),(100,100) instead");
  app.add_option("--out", raw.out, "Output file (stdout when omitted)");
  app.add_option("--z", raw.z, "Contamination point, e.g. x=-2,y=100");
  app.add_option("--grid-x", raw.grid_x, "lo:hi:count");
  app.add_option("--grid-y", raw.grid_y, "lo:hi:count");
  app.add_option("--eps", raw.eps, "Comma-separated contamination levels");
  app.add_option("--schedule", raw.schedule, "lambda=C*n^-A");
  app.add_option("--ns", raw.ns, "Comma-separated sample sizes");
  app.add_option("--seeds", raw.seeds, "Seeds per sample size");
  app.add_option("--test-size", raw.test_size, "Held-out test set size");
  app.add_option("--threads", raw.threads, "Worker threads (default: KBR_THREADS or all cores)");

  RunConfig cfg;
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    cfg.help_text = app.help();
    return cfg;
  } catch (const CLI::ParseError& e) {
    throw UsageError(e.what());
  }

  if (!kCommands.count(raw.command)) field_error("command", fmt::format("unknown subcommand '{}'", raw.command));
  cfg.subcommand = raw.command;

  cfg.loss = field("loss", [&] { return LossModel::parse(raw.loss); });
  cfg.kernel = field("kernel", [&] { return KernelModel::parse(raw.kernel); });
  if (!raw.domain_box.empty()) {
    cfg.kernel = field("domain-box", [&] { return cfg.kernel.with_domain_box(Box::parse(raw.domain_box)); });
  }
  if (!(raw.lambda > 0.0) || !std::isfinite(raw.lambda)) field_error("lambda", "lambda must be > 0");
  cfg.lambda = raw.lambda;
  if (!(raw.tol > 0.0)) field_error("tol", "tol must be > 0");
  cfg.fit.tol = raw.tol;
  cfg.fit.solver = parse_solver(raw.solver);
  if (raw.max_newton_iterations < 1) field_error("max-newton-iterations", "must be >= 1");
  if (raw.subgradient_budget < 1) field_error("subgradient-budget", "must be >= 1");
  cfg.fit.max_newton_iterations = raw.max_newton_iterations;
  cfg.fit.subgradient_budget = raw.subgradient_budget;

  if (seed_opt->count() > 0) {
    if (raw.seed < 0) field_error("seed", "must be >= 0");
    cfg.seed = static_cast<std::uint64_t>(raw.seed);
  } else if (const char* env = std::getenv("KBR_SEED")) {
    const long v = field("KBR_SEED", [&] { return detail::parse_long(env, "KBR_SEED"); });
    if (v < 0) field_error("KBR_SEED", "must be >= 0");
    cfg.seed = static_cast<std::uint64_t>(v);
  }
  if (!(raw.sigma >= 0.0)) field_error("sigma", "must be >= 0");
  if (raw.sigma != 1.0) cfg.scenario_overrides["sigma"] = raw.sigma;
  cfg.out_path = raw.out;
  cfg.threads = raw.threads;
  if (raw.threads < 0) field_error("threads", "must be >= 0");

  const bool needs_data = cfg.subcommand == "fit" || cfg.subcommand == "influence" ||
                          cfg.subcommand == "sensitivity" || cfg.subcommand == "bounds";
  if (needs_data) {
    if (raw.data.empty() == raw.scenario.empty()) field_error("data", "give exactly one of --data or --scenario");
    cfg.data_path = raw.data;
    cfg.scenario = raw.scenario;
  }
  if (cfg.subcommand == "scenario") {
    cfg.scenario = raw.name.empty() ? raw.scenario : raw.name;
    if (cfg.scenario.empty()) field_error("name", "the scenario command needs --name");
  }
  if (cfg.scenario == "fig1c") cfg.scenario_overrides["copies"] = raw.copies;
  if (cfg.scenario == "fig1d" && raw.caption_points) cfg.scenario_overrides["caption_points"] = 1.0;
  if (!cfg.scenario.empty() && !(cfg.scenario == "fig1a" || cfg.scenario == "fig1b" || cfg.scenario == "fig1c" ||
                                  cfg.scenario == "fig1d" || cfg.scenario == "consistency")) {
    field_error("scenario", fmt::format("unknown scenario '{}'", cfg.scenario));
  }

  if (cfg.subcommand == "influence" || cfg.subcommand == "bounds") parse_point(raw.z, cfg.z_x, cfg.z_y);
  if (cfg.subcommand == "sensitivity") {
    if (raw.grid_x.empty()) field_error("grid-x", "required for sensitivity");
    if (raw.grid_y.empty()) field_error("grid-y", "required for sensitivity");
    cfg.grid_x = GridSpec::parse(raw.grid_x, "grid-x");
    cfg.grid_y = GridSpec::parse(raw.grid_y, "grid-y");
  }
  if (cfg.subcommand == "bounds") {
    cfg.eps_values = field("eps", [&] { return detail::parse_double_list(raw.eps, "eps"); });
    if (cfg.eps_values.empty()) field_error("eps", "needs at least one value");
    for (double e : cfg.eps_values) {
      if (!(e >= 0.0 && e <= 1.0)) field_error("eps", fmt::format("{} is outside [0, 1]", e));
    }
  }
  if (cfg.subcommand == "consistency") {
    cfg.schedule = raw.schedule;
    const auto schedule = field("schedule", [&] { return LambdaSchedule::parse(raw.schedule); });
    for (double v : field("ns", [&] { return detail::parse_double_list(raw.ns, "ns"); })) {
      if (v != std::floor(v) || v < 1.0) field_error("ns", fmt::format("{} is not a positive integer", v));
      cfg.ns.push_back(static_cast<int>(v));
    }
    if (raw.seeds < 1) field_error("seeds", "must be >= 1");
    if (raw.test_size < 2) field_error("test-size", "must be >= 2");
    cfg.seeds = raw.seeds;
    cfg.test_size = raw.test_size;
    field("schedule", [&] {
      validate_schedule(cfg.loss, schedule, cfg.ns);
      return 0;
    });
  }
  return cfg;
}

int run(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  if (!cfg.help_text.empty()) {
    out << cfg.help_text;
    return 0;
  }
  try {
    if (cfg.subcommand == "fit") return run_fit(cfg, out);
    if (cfg.subcommand == "influence") return run_influence(cfg, out);
    if (cfg.subcommand == "sensitivity") return run_sensitivity(cfg, out);
    if (cfg.subcommand == "bounds") return run_bounds(cfg, out);
    if (cfg.subcommand == "scenario") return run_scenario(cfg, out);
    if (cfg.subcommand == "consistency") return run_consistency(cfg, out);
    err << "error [UsageError]: no subcommand\n";
    return 2;
  } catch (const Error& e) {
    err << fmt::format("error [{}]: {}\n", e.kind(), e.what());
  } catch (const std::exception& e) {
    err << fmt::format("error: {}\n", e.what());
  }
  return 1;
}

int main_entry(int argc, const char* const* argv) {
  std::vector<std::string> args(argv, argv + argc);
  RunConfig cfg;
  try {
    cfg = parse_config(args);
  } catch (const UsageError& e) {
    std::cerr << (args.size() <= 1 ? std::string(e.what()) : fmt::format("error [UsageError]: {}\n", e.what()));
    return 2;
  }
  return run(cfg, std::cout, std::cerr);
}

}  // namespace kbr::cli
