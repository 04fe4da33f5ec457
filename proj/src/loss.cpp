#include "kbr/loss.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "kbr/errors.hpp"
#include "parse_util.hpp"

namespace kbr {

namespace {

double sign(double r) { return (r > 0.0) - (r < 0.0); }

// 2 log cosh(r/2) without overflow or cancellation near zero.
double logistic_value(double r) {
  const double a = std::abs(r);
  if (a < 2.0) {
    const double s = std::sinh(0.25 * a);
    return 2.0 * std::log1p(2.0 * s * s);
  }
  return a + 2.0 * std::log1p(std::exp(-a)) - 2.0 * std::log(2.0);
}

}  // namespace

LossModel LossModel::least_squares() { return {LossKind::least_squares, 0.0}; }

LossModel LossModel::eps_insensitive(double eps) {
  if (!(eps > 0.0) || !std::isfinite(eps)) {
    throw InvalidArgument(fmt::format("eps-insensitive loss requires eps > 0, got {}", eps));
  }
  return {LossKind::eps_insensitive, eps};
}

LossModel LossModel::huber(double c) {
  if (!(c > 0.0) || !std::isfinite(c)) {
    throw InvalidArgument(fmt::format("huber loss requires c > 0, got {}", c));
  }
  return {LossKind::huber, c};
}

LossModel LossModel::logistic() { return {LossKind::logistic, 0.0}; }

LossModel LossModel::pinball(double tau) {
  if (!(tau > 0.0 && tau < 1.0)) {
    throw InvalidArgument(fmt::format("pinball loss requires tau in (0, 1), got {}", tau));
  }
  return {LossKind::pinball, tau};
}

LossModel LossModel::parse(std::string_view spec) {
  spec = detail::trim(spec);
  const auto colon = spec.find(':');
  const auto head = spec.substr(0, colon);
  const bool has_arg = colon != std::string_view::npos;
  auto arg = [&] {
    if (!has_arg) throw InvalidArgument(fmt::format("loss '{}' needs a parameter", head));
    return detail::parse_double(spec.substr(colon + 1), "loss parameter");
  };
  auto no_arg = [&](LossModel m) {
    if (has_arg) throw InvalidArgument(fmt::format("loss '{}' takes no parameter", head));
    return m;
  };
  if (head == "ls" || head == "least_squares") return no_arg(least_squares());
  if (head == "logistic") return no_arg(logistic());
  if (head == "eps" || head == "eps_insensitive") return eps_insensitive(arg());
  if (head == "huber") return huber(arg());
  if (head == "pinball") return pinball(arg());
  throw InvalidArgument(fmt::format("unknown loss '{}'", spec));
}

std::string LossModel::spec() const {
  switch (kind_) {
    case LossKind::least_squares: return "ls";
    case LossKind::logistic: return "logistic";
    case LossKind::eps_insensitive: return fmt::format("eps:{}", param_);
    case LossKind::huber: return fmt::format("huber:{}", param_);
    case LossKind::pinball: return fmt::format("pinball:{}", param_);
  }
  return {};
}

std::string LossModel::name() const {
  switch (kind_) {
    case LossKind::least_squares: return "least_squares";
    case LossKind::logistic: return "logistic";
    case LossKind::eps_insensitive: return "eps_insensitive";
    case LossKind::huber: return "huber";
    case LossKind::pinball: return "pinball";
  }
  return {};
}

std::optional<double> LossModel::lipschitz_constant() const {
  switch (kind_) {
    case LossKind::least_squares: return std::nullopt;
    case LossKind::eps_insensitive: return 1.0;
    case LossKind::huber: return param_;
    case LossKind::logistic: return 1.0;
    case LossKind::pinball: return std::max(param_, 1.0 - param_);
  }
  return std::nullopt;
}

double LossModel::order_p() const { return kind_ == LossKind::least_squares ? 2.0 : 1.0; }

double LossModel::type_constant() const {
  // (y - t)^2 <= 2y^2 + 2t^2; Lipschitz losses satisfy l(r) <= |L|_1 |r|.
  if (kind_ == LossKind::least_squares) return 2.0;
  return *lipschitz_constant();
}

double LossModel::upper_order_constant() const {
  if (kind_ == LossKind::least_squares) return 1.0;
  return *lipschitz_constant();
}

std::optional<double> LossModel::lower_order_constant() const {
  switch (kind_) {
    case LossKind::least_squares: return 1.0;
    case LossKind::eps_insensitive:
      if (param_ <= 1.0) return 1.0;
      return std::nullopt;
    case LossKind::huber: return std::min(param_, 1.0);
    case LossKind::logistic: return 0.5;
    case LossKind::pinball: return std::min(param_, 1.0 - param_);
  }
  return std::nullopt;
}

Smoothness LossModel::smoothness() const {
  switch (kind_) {
    case LossKind::least_squares:
    case LossKind::logistic: return Smoothness::C2;
    case LossKind::huber: return Smoothness::C1;
    case LossKind::eps_insensitive:
    case LossKind::pinball: return Smoothness::C0;
  }
  return Smoothness::C0;
}

double LossModel::value(double r) const {
  switch (kind_) {
    case LossKind::least_squares: return r * r;
    case LossKind::eps_insensitive: return std::max(std::abs(r) - param_, 0.0);
    case LossKind::huber: {
      const double a = std::abs(r);
      return a <= param_ ? 0.5 * r * r : param_ * a - 0.5 * param_ * param_;
    }
    case LossKind::logistic: return std::max(logistic_value(r), 0.0);
    case LossKind::pinball: return r >= 0.0 ? param_ * r : (param_ - 1.0) * r;
  }
  return 0.0;
}

double LossModel::derivative(double r) const {
  switch (kind_) {
    case LossKind::least_squares: return 2.0 * r;
    case LossKind::eps_insensitive: {
      const double a = std::abs(r);
      if (a == param_) {
        throw KinkError(fmt::format("eps-insensitive loss is not differentiable at r = {}", r));
      }
      return a < param_ ? 0.0 : sign(r);
    }
    case LossKind::huber: return std::abs(r) <= param_ ? r : param_ * sign(r);
    case LossKind::logistic: return std::tanh(0.5 * r);
    case LossKind::pinball:
      if (r == 0.0) throw KinkError("pinball loss is not differentiable at r = 0");
      return r > 0.0 ? param_ : param_ - 1.0;
  }
  return 0.0;
}

double LossModel::second_derivative(double r) const {
  switch (kind_) {
    case LossKind::least_squares: return 2.0;
    case LossKind::logistic: {
      const double c = std::cosh(0.5 * r);
      return 0.5 / (c * c);
    }
    default:
      throw NotTwiceDifferentiable(
          fmt::format("{} loss is not twice continuously differentiable", name()));
  }
}

double LossModel::left_derivative(double r) const {
  switch (kind_) {
    case LossKind::eps_insensitive:
      if (r <= -param_) return -1.0;
      return r <= param_ ? 0.0 : 1.0;
    case LossKind::pinball: return r <= 0.0 ? param_ - 1.0 : param_;
    default: return derivative(r);
  }
}

double LossModel::right_derivative(double r) const {
  switch (kind_) {
    case LossKind::eps_insensitive:
      if (r < -param_) return -1.0;
      return r < param_ ? 0.0 : 1.0;
    case LossKind::pinball: return r < 0.0 ? param_ - 1.0 : param_;
    default: return derivative(r);
  }
}

Interval LossModel::subdifferential(double r) const {
  return {left_derivative(r), right_derivative(r)};
}

double LossModel::slope(double r) const {
  if (r < 0.0) throw InvalidArgument("slope function requires r >= 0");
  if (r == 0.0) return 0.0;
  // A convex function on [-r, r] is steepest at the endpoints, measured from inside.
  return std::max(std::abs(right_derivative(-r)), std::abs(left_derivative(r)));
}

double LossModel::a_moment(double y) const {
  const double a = std::abs(y);
  return kind_ == LossKind::least_squares ? a * a : a;
}

std::vector<Kink> LossModel::kinks() const {
  switch (kind_) {
    case LossKind::eps_insensitive: return {{-param_, -1.0, 0.0}, {param_, 0.0, 1.0}};
    case LossKind::pinball: return {{0.0, param_ - 1.0, param_}};
    default: return {};
  }
}

}  // namespace kbr
