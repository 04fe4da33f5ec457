#include "kbr/kernel.hpp"

#include <cmath>

#include <fmt/format.h>

#include "kbr/errors.hpp"
#include "parse_util.hpp"

namespace kbr {

Box Box::parse(std::string_view text) {
  const auto values = detail::parse_double_list(text, "domain box");
  if (values.empty() || values.size() % 2 != 0) {
    throw InvalidArgument("domain box needs pairs lo,hi per dimension");
  }
  const auto d = static_cast<Eigen::Index>(values.size() / 2);
  Box box{Eigen::VectorXd(d), Eigen::VectorXd(d)};
  for (Eigen::Index i = 0; i < d; ++i) {
    box.lo[i] = values[2 * i];
    box.hi[i] = values[2 * i + 1];
    if (!(box.lo[i] <= box.hi[i])) {
      throw InvalidArgument(fmt::format("domain box dimension {}: lo > hi", i + 1));
    }
  }
  return box;
}

KernelModel KernelModel::rbf(double gamma) {
  if (!(gamma > 0.0) || !std::isfinite(gamma)) {
    throw InvalidArgument(fmt::format("rbf kernel requires gamma > 0, got {}", gamma));
  }
  return {KernelKind::rbf, gamma, 0.0, 1};
}

KernelModel KernelModel::linear() { return {KernelKind::linear, 0.0, 0.0, 1}; }

KernelModel KernelModel::polynomial(double c, int m) {
  if (!(c >= 0.0) || m < 1) {
    throw InvalidArgument(fmt::format("polynomial kernel requires c >= 0 and m >= 1, got c={}, m={}", c, m));
  }
  return {KernelKind::polynomial, 0.0, c, m};
}

KernelModel KernelModel::parse(std::string_view spec) {
  spec = detail::trim(spec);
  const auto colon = spec.find(':');
  const auto head = spec.substr(0, colon);
  const bool has_arg = colon != std::string_view::npos;
  const auto arg = has_arg ? spec.substr(colon + 1) : std::string_view{};
  if (head == "rbf") {
    if (!has_arg) throw InvalidArgument("rbf kernel needs gamma, e.g. rbf:0.1");
    return rbf(detail::parse_double(arg, "rbf gamma"));
  }
  if (head == "linear") {
    if (has_arg) throw InvalidArgument("linear kernel takes no parameter");
    return linear();
  }
  if (head == "poly" || head == "polynomial") {
    const auto parts = detail::split(arg, ',');
    if (!has_arg || parts.size() != 2) throw InvalidArgument("polynomial kernel needs poly:c,m");
    return polynomial(detail::parse_double(parts[0], "poly c"),
                      static_cast<int>(detail::parse_long(parts[1], "poly m")));
  }
  throw InvalidArgument(fmt::format("unknown kernel '{}'", spec));
}

KernelModel KernelModel::with_domain_box(Box box) const {
  KernelModel k = *this;
  k.box_ = std::move(box);
  return k;
}

std::string KernelModel::spec() const {
  switch (kind_) {
    case KernelKind::rbf: return fmt::format("rbf:{}", gamma_);
    case KernelKind::linear: return "linear";
    case KernelKind::polynomial: return fmt::format("poly:{},{}", offset_, degree_);
  }
  return {};
}

std::optional<double> KernelModel::sup_norm() const {
  if (kind_ == KernelKind::rbf) return 1.0;
  if (!box_) return std::nullopt;
  double max_sq = 0.0;
  for (Eigen::Index i = 0; i < box_->lo.size(); ++i) {
    max_sq += std::max(box_->lo[i] * box_->lo[i], box_->hi[i] * box_->hi[i]);
  }
  if (kind_ == KernelKind::linear) return std::sqrt(max_sq);
  return std::pow(offset_ + max_sq, 0.5 * degree_);
}

double KernelModel::require_sup_norm() const {
  auto s = sup_norm();
  if (!s) {
    throw UnboundedKernel(fmt::format(
        "kernel '{}' is unbounded without a domain box; bounds need a bounded kernel", spec()));
  }
  return *s;
}

double KernelModel::eval_unchecked(const double* x, const double* xp, Eigen::Index d) const {
  switch (kind_) {
    case KernelKind::rbf: {
      double sq = 0.0;
      for (Eigen::Index i = 0; i < d; ++i) {
        const double diff = x[i] - xp[i];
        sq += diff * diff;
      }
      return std::exp(-gamma_ * sq);
    }
    case KernelKind::linear:
    case KernelKind::polynomial: {
      double dot = 0.0;
      for (Eigen::Index i = 0; i < d; ++i) dot += x[i] * xp[i];
      if (kind_ == KernelKind::linear) return dot;
      double base = offset_ + dot;
      double out = 1.0;
      for (int i = 0; i < degree_; ++i) out *= base;
      return out;
    }
  }
  return 0.0;
}

double KernelModel::operator()(const Eigen::Ref<const Eigen::VectorXd>& x,
                               const Eigen::Ref<const Eigen::VectorXd>& xp) const {
  if (x.size() != xp.size()) {
    throw DimensionMismatch(fmt::format("kernel arguments have dimensions {} and {}", x.size(), xp.size()));
  }
  return eval_unchecked(x.data(), xp.data(), x.size());
}

bool KernelModel::operator==(const KernelModel& other) const {
  return kind_ == other.kind_ && gamma_ == other.gamma_ && offset_ == other.offset_ &&
         degree_ == other.degree_ && box_ == other.box_;
}

Eigen::MatrixXd cross_gram(const KernelModel& k, const Points& a, const Points& b) {
  if (a.cols() != b.cols()) {
    throw DimensionMismatch(fmt::format("point sets have dimensions {} and {}", a.cols(), b.cols()));
  }
  const Eigen::Index d = a.cols();
  // Row-major copies give contiguous points.
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> ra = a, rb = b;
  Eigen::MatrixXd out(a.rows(), b.rows());
  for (Eigen::Index j = 0; j < b.rows(); ++j) {
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      out(i, j) = k.eval_unchecked(ra.row(i).data(), rb.row(j).data(), d);
    }
  }
  return out;
}

Eigen::MatrixXd gram(const KernelModel& k, const Points& points) {
  if (points.rows() == 0) throw InvalidArgument("gram matrix of an empty point set");
  Eigen::MatrixXd g = cross_gram(k, points, points);
  // Exact symmetry regardless of evaluation order.
  return 0.5 * (g + g.transpose());
}

RkhsFunction::RkhsFunction(KernelModel kernel, Points centers, Eigen::VectorXd coefficients)
    : kernel_(std::move(kernel)), centers_(std::move(centers)), coefficients_(std::move(coefficients)) {
  if (centers_.rows() != coefficients_.size()) {
    throw DimensionMismatch(fmt::format("{} centers but {} coefficients", centers_.rows(), coefficients_.size()));
  }
}

RkhsFunction RkhsFunction::zero(KernelModel kernel, Eigen::Index dim) {
  return {std::move(kernel), Points(0, dim), Eigen::VectorXd(0)};
}

double RkhsFunction::operator()(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (x.size() != centers_.cols()) {
    throw DimensionMismatch(fmt::format("evaluating a {}-dimensional function at a {}-dimensional point",
                                        centers_.cols(), x.size()));
  }
  double sum = 0.0;
  for (Eigen::Index i = 0; i < size(); ++i) {
    const Eigen::VectorXd u = centers_.row(i).transpose();
    sum += coefficients_[i] * kernel_(x, u);
  }
  return sum;
}

Eigen::VectorXd RkhsFunction::evaluate(const Points& xs) const {
  if (xs.cols() != centers_.cols()) {
    throw DimensionMismatch(fmt::format("evaluating a {}-dimensional function at {}-dimensional points",
                                        centers_.cols(), xs.cols()));
  }
  if (size() == 0) return Eigen::VectorXd::Zero(xs.rows());
  return cross_gram(kernel_, xs, centers_) * coefficients_;
}

double RkhsFunction::norm() const {
  if (size() == 0) return 0.0;
  return quadratic_norm(gram(kernel_, centers_), coefficients_);
}

double eval_f(const RkhsFunction& f, const Eigen::Ref<const Eigen::VectorXd>& x) { return f(x); }

double norm_h(const RkhsFunction& f) { return f.norm(); }

RkhsFunction combine(const RkhsFunction& f, const RkhsFunction& g, double alpha, double beta) {
  if (!(f.kernel() == g.kernel())) {
    throw KernelMismatch(fmt::format("cannot combine expansions over '{}' and '{}'", f.kernel().spec(),
                                     g.kernel().spec()));
  }
  if (f.dim() != g.dim()) {
    throw DimensionMismatch(fmt::format("cannot combine {}- and {}-dimensional functions", f.dim(), g.dim()));
  }
  Points centers(f.size() + g.size(), f.dim());
  centers << f.centers(), g.centers();
  Eigen::VectorXd coefficients(f.size() + g.size());
  coefficients << alpha * f.coefficients(), beta * g.coefficients();
  return {f.kernel(), std::move(centers), std::move(coefficients)};
}

double quadratic_norm(const Eigen::MatrixXd& gram, const Eigen::VectorXd& c) {
  return std::sqrt(std::max(0.0, c.dot(gram * c)));
}

Eigen::VectorXd solve_spd(const Eigen::MatrixXd& a, const Eigen::VectorXd& b) {
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() == Eigen::Success) return llt.solve(b);
  const double n = static_cast<double>(a.rows());
  double jitter = 1e-10 * std::max(a.trace(), 1e-300) / n;
  for (int attempt = 0; attempt < 3; ++attempt, jitter *= 10.0) {
    Eigen::MatrixXd shifted = a;
    shifted.diagonal().array() += jitter;
    llt.compute(shifted);
    if (llt.info() == Eigen::Success) return llt.solve(b);
  }
  throw SingularSystem(fmt::format("Cholesky factorization failed after jitter up to {}", jitter / 10.0));
}

}  // namespace kbr
