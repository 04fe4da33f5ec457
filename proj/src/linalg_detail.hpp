#pragma once

#include <vector>

#include <Eigen/Dense>

#include "kbr/kernel.hpp"

namespace kbr::detail {

/// Solves (shift I + diag(d) K) x = c for PSD K, d >= 0 and shift > 0.
/// Rows with negligible d are solved directly; the rest reduce to the SPD
/// system (K_AA + shift diag(1/d_A)) x_A = c_A / d_A - K_AI x_I.
inline Eigen::VectorXd solve_shifted(const Eigen::MatrixXd& k, const Eigen::VectorXd& d, const Eigen::VectorXd& c,
                                     double shift) {
  const Eigen::Index n = k.rows();
  const double scale = n > 0 ? std::max(k.diagonal().cwiseAbs().maxCoeff(), 1e-300) : 1.0;
  std::vector<Eigen::Index> active, inactive;
  for (Eigen::Index i = 0; i < n; ++i) {
    (d[i] * scale > 1e-14 * shift ? active : inactive).push_back(i);
  }
  Eigen::VectorXd x = c / shift;
  if (active.empty()) return x;
  Eigen::VectorXd coupling = Eigen::VectorXd::Zero(n);
  if (!inactive.empty()) {
    Eigen::VectorXd x_inactive = Eigen::VectorXd::Zero(n);
    for (auto i : inactive) x_inactive[i] = x[i];
    coupling = k * x_inactive;
  }
  Eigen::MatrixXd m = k(active, active);
  Eigen::VectorXd rhs(static_cast<Eigen::Index>(active.size()));
  for (std::size_t a = 0; a < active.size(); ++a) {
    const auto i = active[a];
    m(a, a) += shift / d[i];
    rhs[a] = c[i] / d[i] - coupling[i];
  }
  const Eigen::VectorXd xa = solve_spd(m, rhs);
  for (std::size_t a = 0; a < active.size(); ++a) x[active[a]] = xa[a];
  return x;
}

}  // namespace kbr::detail
