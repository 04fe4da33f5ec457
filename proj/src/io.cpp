#include "kbr/io.hpp"

#include <fstream>
#include <sstream>
#include <system_error>

#include <fmt/format.h>
#include "json.hpp"

#include "kbr/errors.hpp"
#include "parse_util.hpp"

namespace kbr {

using nlohmann::json;

namespace {

SolverKind solver_from_string(const std::string& s) {
  for (auto k : {SolverKind::automatic, SolverKind::newton, SolverKind::smoothed_newton, SolverKind::subgradient,
                 SolverKind::closed_form}) {
    if (to_string(k) == s) return k;
  }
  throw IoError(fmt::format("unknown solver '{}' in fit file", s));
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

std::string format_double(double v) { return fmt::format("{:.17g}", v); }

void write_atomic(const std::filesystem::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(fmt::format("cannot open '{}' for writing", tmp.string()));
    out << content;
    out.close();
    if (!out) throw IoError(fmt::format("failed writing '{}'", tmp.string()));
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError(fmt::format("cannot move output into place at '{}'", path.string()));
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open '{}'", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Dataset parse_dataset_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw IoError("data CSV is empty");
  const auto header = detail::split(detail::trim(line), ',');
  if (header.size() < 2 || detail::trim(header.back()) != "y") {
    throw IoError("data CSV header must be x1,...,xd,y");
  }
  const auto d = header.size() - 1;
  for (std::size_t j = 0; j < d; ++j) {
    if (detail::trim(header[j]) != fmt::format("x{}", j + 1)) {
      throw IoError(fmt::format("data CSV header column {} must be x{}", j + 1, j + 1));
    }
  }
  std::vector<double> values;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    ++row;
    const auto cells = detail::split(detail::trim(line), ',');
    if (cells.size() != d + 1) {
      throw IoError(fmt::format("data CSV row {} has {} columns, expected {}", row, cells.size(), d + 1));
    }
    for (auto c : cells) values.push_back(detail::parse_double(c, fmt::format("data CSV row {}", row)));
  }
  if (row == 0) throw IoError("data CSV has no rows");
  Points xs(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(d));
  Eigen::VectorXd ys(static_cast<Eigen::Index>(row));
  for (std::size_t i = 0; i < row; ++i) {
    for (std::size_t j = 0; j < d; ++j) xs(i, j) = values[i * (d + 1) + j];
    ys[i] = values[i * (d + 1) + d];
  }
  return {std::move(xs), std::move(ys)};
}

Dataset read_dataset_csv(const std::filesystem::path& path) { return parse_dataset_csv(read_file(path)); }

std::string dataset_csv(const Dataset& data) {
  std::string out;
  for (Eigen::Index j = 0; j < data.dim(); ++j) out += fmt::format("x{},", j + 1);
  out += "y\n";
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    for (Eigen::Index j = 0; j < data.dim(); ++j) out += format_double(data.xs(i, j)) + ",";
    out += format_double(data.ys[i]) + "\n";
  }
  return out;
}

std::string fit_json(const LossModel& loss, const FitResult& fit) {
  const auto& k = fit.f_hat.kernel();
  json kernel{{"spec", k.spec()}};
  switch (k.kind()) {
    case KernelKind::rbf: kernel["gamma"] = k.gamma(); break;
    case KernelKind::polynomial:
      kernel["offset"] = k.offset();
      kernel["degree"] = k.degree();
      break;
    case KernelKind::linear: break;
  }
  if (k.domain_box()) {
    json box = json::array();
    for (Eigen::Index i = 0; i < k.domain_box()->lo.size(); ++i) {
      box.push_back(json::array({k.domain_box()->lo[i], k.domain_box()->hi[i]}));
    }
    kernel["domain_box"] = box;
  }
  json centers = json::array();
  for (Eigen::Index i = 0; i < fit.f_hat.centers().rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < fit.f_hat.centers().cols(); ++j) row.push_back(fit.f_hat.centers()(i, j));
    centers.push_back(row);
  }
  const auto& a = fit.coefficients();
  json doc{
      {"loss", loss.spec()},
      {"kernel", kernel},
      {"lambda", fit.lambda},
      {"objective", fit.objective},
      {"stationarity_residual", fit.stationarity_residual},
      {"norm_h", fit.norm()},
      {"solver", {{"kind", to_string(fit.solver_kind)}, {"iterations", fit.iterations}}},
      {"centers", centers},
      {"coefficients", std::vector<double>(a.data(), a.data() + a.size())},
  };
  return doc.dump(2) + "\n";
}

StoredFit parse_fit_json(const std::string& text) {
  try {
    const json doc = json::parse(text);
    const auto loss = LossModel::parse(doc.at("loss").get<std::string>());
    const json& kj = doc.at("kernel");
    auto kernel = KernelModel::parse(kj.at("spec").get<std::string>());
    if (kj.contains("domain_box")) {
      const auto& box = kj.at("domain_box");
      Box b{Eigen::VectorXd(box.size()), Eigen::VectorXd(box.size())};
      for (std::size_t i = 0; i < box.size(); ++i) {
        b.lo[i] = box[i].at(0).get<double>();
        b.hi[i] = box[i].at(1).get<double>();
      }
      kernel = kernel.with_domain_box(std::move(b));
    }
    const auto coefs = doc.at("coefficients").get<std::vector<double>>();
    const auto& cj = doc.at("centers");
    if (cj.size() != coefs.size()) throw IoError("fit file: centers and coefficients differ in length");
    const auto dim = cj.empty() ? std::size_t{1} : cj[0].size();
    Points centers(static_cast<Eigen::Index>(cj.size()), static_cast<Eigen::Index>(dim));
    for (std::size_t i = 0; i < cj.size(); ++i) {
      if (cj[i].size() != dim) throw IoError("fit file: ragged centers");
      for (std::size_t j = 0; j < dim; ++j) centers(i, j) = cj[i][j].get<double>();
    }
    FitResult fit{RkhsFunction(kernel, std::move(centers), Eigen::Map<const Eigen::VectorXd>(coefs.data(), coefs.size())),
                  doc.at("lambda").get<double>(),
                  doc.at("objective").get<double>(),
                  doc.at("stationarity_residual").get<double>(),
                  doc.at("solver").at("iterations").get<int>(),
                  solver_from_string(doc.at("solver").at("kind").get<std::string>())};
    return {loss, std::move(fit)};
  } catch (const json::exception& e) {
    throw IoError(fmt::format("malformed fit file: {}", e.what()));
  }
}

StoredFit load_fit(const std::filesystem::path& path) { return parse_fit_json(read_file(path)); }

std::string bounds_json(const LossModel& loss, const KernelModel& kernel, const std::vector<BoundsReport>& reports) {
  json rows = json::array();
  for (const auto& r : reports) {
    rows.push_back({
        {"eps", r.eps},
        {"lambda", r.lambda},
        {"delta_p_lambda", r.delta_p_lambda},
        {"observed_norm", r.observed_norm},
        {"observed_shift", r.observed_shift},
        {"delta_shift_bound", std::isfinite(r.delta_shift_bound) ? json(r.delta_shift_bound) : json("inf")},
        {"lipschitz_shift_bound", optional_json(r.lipschitz_shift_bound)},
        {"order_p_shift_bound_informational", optional_json(r.order_p_shift_bound)},
        {"sc_bound", optional_json(r.sc_bound)},
        {"constants",
         {{"type_constant_c", r.type_constant},
          {"order_p", r.order_p},
          {"kernel_sup_norm", r.kernel_sup_norm},
          {"lipschitz_constant", optional_json(r.lipschitz_constant)},
          {"moment_p_a", r.moment_p_a},
          {"moment_q_a", r.moment_q_a},
          {"moment_diff_p_minus_1", r.moment_diff_p_minus_1},
          {"moment_diff_0", r.moment_diff_0},
          {"moment_p_p", r.moment_p_p}}},
        {"violations",
         {{"norm_bound", r.norm_bound_violated},
          {"delta_shift", r.delta_shift_violated},
          {"lipschitz_shift", r.lipschitz_shift_violated}}},
    });
  }
  json doc{{"loss", loss.spec()}, {"kernel", kernel.spec()}, {"reports", rows}};
  return doc.dump(2) + "\n";
}

}  // namespace kbr
