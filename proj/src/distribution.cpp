#include "kbr/distribution.hpp"

#include <cmath>

#include <fmt/format.h>

#include "kbr/errors.hpp"
#include "kbr/loss.hpp"

namespace kbr {

Dataset::Dataset(Points xs_in, Eigen::VectorXd ys_in) : xs(std::move(xs_in)), ys(std::move(ys_in)) {
  if (ys.size() < 1) throw InvalidArgument("dataset needs at least one observation");
  if (xs.rows() != ys.size()) {
    throw DimensionMismatch(fmt::format("dataset has {} inputs but {} responses", xs.rows(), ys.size()));
  }
  if (xs.cols() < 1) throw InvalidArgument("dataset inputs need at least one column");
  if (!xs.allFinite() || !ys.allFinite()) throw InvalidArgument("dataset contains non-finite entries");
}

Dataset Dataset::with_point(const Eigen::Ref<const Eigen::VectorXd>& x, double y) const {
  if (x.size() != dim()) {
    throw DimensionMismatch(fmt::format("appending a {}-dimensional point to {}-dimensional data", x.size(), dim()));
  }
  Points nx(xs.rows() + 1, xs.cols());
  nx << xs, x.transpose();
  Eigen::VectorXd ny(ys.size() + 1);
  ny << ys, y;
  return {std::move(nx), std::move(ny)};
}

DiscreteDistribution::DiscreteDistribution(Points xs, Eigen::VectorXd ys, Eigen::VectorXd weights)
    : xs_(std::move(xs)), ys_(std::move(ys)), weights_(std::move(weights)) {
  if (xs_.rows() != ys_.size() || weights_.size() != ys_.size()) {
    throw DimensionMismatch(fmt::format("distribution has {} points, {} responses and {} weights", xs_.rows(),
                                        ys_.size(), weights_.size()));
  }
  if (!xs_.allFinite() || !ys_.allFinite() || !weights_.allFinite()) {
    throw InvalidArgument("distribution contains non-finite entries");
  }
}

DiscreteDistribution DiscreteDistribution::empirical(const Dataset& data) {
  const auto n = data.size();
  return {data.xs, data.ys, Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n))};
}

DiscreteDistribution DiscreteDistribution::point_mass(const Eigen::Ref<const Eigen::VectorXd>& x, double y) {
  Points xs = x.transpose();
  return {std::move(xs), Eigen::VectorXd::Constant(1, y), Eigen::VectorXd::Ones(1)};
}

namespace {

DiscreteDistribution concat(const DiscreteDistribution& p, const DiscreteDistribution& q, double wp, double wq) {
  if (p.dim() != q.dim()) {
    throw DimensionMismatch(fmt::format("combining {}- and {}-dimensional distributions", p.dim(), q.dim()));
  }
  Points xs(p.size() + q.size(), p.dim());
  xs << p.xs(), q.xs();
  Eigen::VectorXd ys(p.size() + q.size());
  ys << p.ys(), q.ys();
  Eigen::VectorXd w(p.size() + q.size());
  w << wp * p.weights(), wq * q.weights();
  return {std::move(xs), std::move(ys), std::move(w)};
}

}  // namespace

DiscreteDistribution DiscreteDistribution::mixture(const DiscreteDistribution& p, const DiscreteDistribution& q,
                                                   double eps) {
  if (!(eps >= 0.0 && eps <= 1.0)) throw InvalidArgument(fmt::format("mixture weight {} outside [0, 1]", eps));
  return concat(p, q, 1.0 - eps, eps);
}

DiscreteDistribution DiscreteDistribution::difference(const DiscreteDistribution& p, const DiscreteDistribution& q) {
  return concat(p, q, 1.0, -1.0);
}

bool DiscreteDistribution::is_probability(double tol) const {
  return is_nonnegative() && std::abs(total_mass() - 1.0) <= tol;
}

double moment(const DiscreteDistribution& mu, double q) {
  if (!(q >= 0.0)) throw InvalidArgument("moment order must be >= 0");
  double sum = 0.0;
  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    const double w = std::abs(mu.weights()[i]);
    sum += q == 0.0 ? w : w * std::pow(std::abs(mu.ys()[i]), q);
  }
  return sum;
}

double moment(const DiscreteDistribution& mu, const LossModel& loss) { return moment(mu, loss.order_p()); }

}  // namespace kbr
