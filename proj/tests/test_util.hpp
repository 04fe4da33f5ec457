#pragma once

#include <random>
#include <vector>

#include <Eigen/Dense>

#include "kbr/distribution.hpp"
#include "kbr/loss.hpp"

namespace kbr::testing {

inline std::vector<LossModel> all_losses() {
  return {LossModel::least_squares(), LossModel::eps_insensitive(0.1), LossModel::huber(1.345),
          LossModel::logistic(), LossModel::pinball(0.3)};
}

inline std::vector<double> integer_grid(int lo, int hi) {
  std::vector<double> v;
  for (int i = lo; i <= hi; ++i) v.push_back(i);
  return v;
}

// Random 1-d regression data: x uniform on [lo, hi], y = x + sigma * noise.
inline Dataset random_dataset(std::mt19937_64& rng, int n, double sigma = 1.0, double lo = -5.0, double hi = 5.0) {
  std::uniform_real_distribution<double> ux(lo, hi);
  std::normal_distribution<double> noise;
  Points xs(n, 1);
  Eigen::VectorXd ys(n);
  for (int i = 0; i < n; ++i) {
    xs(i, 0) = ux(rng);
    ys[i] = xs(i, 0) + sigma * noise(rng);
  }
  return {xs, ys};
}

inline Eigen::VectorXd random_vector(std::mt19937_64& rng, Eigen::Index n, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Eigen::VectorXd v(n);
  for (auto& x : v) x = g(rng);
  return v;
}

inline Points random_points(std::mt19937_64& rng, Eigen::Index n, Eigen::Index d, double scale = 3.0) {
  std::normal_distribution<double> g(0.0, scale);
  Points p(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) p(i, j) = g(rng);
  return p;
}

}  // namespace kbr::testing
