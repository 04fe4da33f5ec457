#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include <Eigen/Eigenvalues>

#include "kbr/errors.hpp"
#include "kbr/kernel.hpp"
#include "test_util.hpp"

using namespace kbr;
using kbr::testing::random_points;
using kbr::testing::random_vector;

namespace {

Point pt(std::initializer_list<double> v) {
  Point p(static_cast<Eigen::Index>(v.size()));
  std::copy(v.begin(), v.end(), p.data());
  return p;
}

std::vector<KernelModel> kernels() {
  return {KernelModel::rbf(0.1), KernelModel::rbf(2.0), KernelModel::linear(), KernelModel::polynomial(1.0, 3)};
}

}  // namespace

TEST_CASE("kernel evaluation") {
  const auto rbf = KernelModel::rbf(0.1);
  CHECK(rbf(pt({1.3}), pt({1.3})) == 1.0);
  CHECK(rbf(pt({0.0}), pt({5.0})) == doctest::Approx(std::exp(-2.5)).epsilon(1e-15));
  CHECK(KernelModel::polynomial(0.0, 1)(pt({1, 2}), pt({3, 4})) == 11.0);
  CHECK(KernelModel::polynomial(1.0, 2)(pt({1, 2}), pt({3, 4})) == 144.0);
  CHECK(KernelModel::linear()(pt({1, 2}), pt({3, 4})) == 11.0);
  CHECK_THROWS_AS(rbf(pt({1}), pt({1, 2})), DimensionMismatch);
}

TEST_CASE("kernel parse and validation") {
  CHECK(KernelModel::parse("rbf:0.1") == KernelModel::rbf(0.1));
  CHECK(KernelModel::parse("linear") == KernelModel::linear());
  CHECK(KernelModel::parse("poly:1,3") == KernelModel::polynomial(1.0, 3));
  for (const auto& k : kernels()) CHECK(KernelModel::parse(k.spec()) == k);
  CHECK_THROWS_AS(KernelModel::parse("rbf:0"), InvalidArgument);
  CHECK_THROWS_AS(KernelModel::parse("poly:1"), InvalidArgument);
  CHECK_THROWS_AS(KernelModel::parse("poly:-1,2"), InvalidArgument);
  CHECK_THROWS_AS(KernelModel::parse("laplace:1"), InvalidArgument);
  CHECK_THROWS_AS(Box::parse("0,1,2"), InvalidArgument);
  CHECK_THROWS_AS(Box::parse("1,0"), InvalidArgument);
}

TEST_CASE("sup norms") {
  CHECK(*KernelModel::rbf(0.1).sup_norm() == 1.0);
  CHECK(!KernelModel::linear().sup_norm());
  CHECK(!KernelModel::polynomial(1.0, 2).sup_norm());
  CHECK_THROWS_AS(KernelModel::linear().require_sup_norm(), UnboundedKernel);
  const auto box = Box::parse("-5,5,-1,2");
  // sup sqrt(k(x,x)) over the box is attained at a corner.
  CHECK(*KernelModel::linear().with_domain_box(box).sup_norm() == doctest::Approx(std::sqrt(29.0)));
  CHECK(*KernelModel::polynomial(1.0, 2).with_domain_box(box).sup_norm() == doctest::Approx(30.0));
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> ux(-5, 5), uy(-1, 2);
  const auto poly = KernelModel::polynomial(1.0, 2).with_domain_box(box);
  for (int i = 0; i < 1000; ++i) {
    const Point x = pt({ux(rng), uy(rng)});
    CHECK(std::sqrt(poly(x, x)) <= *poly.sup_norm() + 1e-12);
  }
}

TEST_CASE("gram basics") {
  const auto rbf = KernelModel::rbf(0.1);
  const Points one = pt({0.7}).transpose();
  CHECK(gram(rbf, one)(0, 0) == 1.0);
  std::mt19937_64 rng(5);
  const Points p = random_points(rng, 7, 2);
  for (const auto& k : kernels()) {
    const auto g = gram(k, p);
    CHECK((g - g.transpose()).norm() == 0.0);
    std::vector<int> perm(7);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Points q(7, 2);
    for (int i = 0; i < 7; ++i) q.row(i) = p.row(perm[i]);
    const auto gq = gram(k, q);
    for (int i = 0; i < 7; ++i)
      for (int j = 0; j < 7; ++j) CHECK(gq(i, j) == doctest::Approx(g(perm[i], perm[j])).epsilon(1e-14));
    const auto cg = cross_gram(k, p, q);
    CHECK(cg(2, 3) == doctest::Approx(k(p.row(2).transpose(), q.row(3).transpose())).epsilon(1e-14));
  }
  CHECK_THROWS_AS(cross_gram(rbf, p, Points::Zero(2, 3)), DimensionMismatch);
}

TEST_CASE("property: Gram matrices are PSD (eigen-decomposition oracle)") {
  std::mt19937_64 rng(17);
  for (const auto& k : kernels()) {
    for (int n = 1; n <= 50; n += 7) {
      for (int d : {1, 3}) {
        const Points p = random_points(rng, n, d);
        const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram(k, p));
        const auto ev = es.eigenvalues();
        CHECK(ev.minCoeff() >= -1e-8 * std::max(ev.maxCoeff(), 0.0));
      }
    }
  }
}

TEST_CASE("expansions: evaluation and norm") {
  const auto rbf = KernelModel::rbf(0.1);
  const Points c = pt({1.0}).transpose();
  const RkhsFunction single(rbf, c, Eigen::VectorXd::Ones(1));
  CHECK(single(pt({4.0})) == doctest::Approx(std::exp(-0.9)).epsilon(1e-15));
  CHECK(single.norm() == 1.0);
  const auto zero = RkhsFunction::zero(rbf, 1);
  CHECK(zero.norm() == 0.0);
  CHECK(eval_f(zero, pt({3.0})) == 0.0);
  const RkhsFunction zc(rbf, Points::Ones(3, 1), Eigen::VectorXd::Zero(3));
  CHECK(norm_h(zc) == 0.0);
  CHECK(zc(pt({-2.0})) == 0.0);
  CHECK_THROWS_AS(single(pt({1.0, 2.0})), DimensionMismatch);
  CHECK_THROWS_AS(RkhsFunction(rbf, Points::Ones(3, 1), Eigen::VectorXd::Zero(2)), DimensionMismatch);
}

TEST_CASE("duplicate-center rewrite keeps the norm") {
  std::mt19937_64 rng(23);
  const auto rbf = KernelModel::rbf(0.3);
  for (int t = 0; t < 20; ++t) {
    const Points p = random_points(rng, 6, 2);
    const Eigen::VectorXd a = random_vector(rng, 6);
    Points p2(7, 2);
    p2 << p, p.row(2);
    Eigen::VectorXd a2(7);
    a2 << a, 0.0;
    a2[2] = 0.25 * a[2];
    a2[6] = 0.75 * a[2];
    const RkhsFunction f(rbf, p, a), g(rbf, p2, a2);
    CHECK(std::abs(f.norm() - g.norm()) <= 1e-10);
    const Point x = random_vector(rng, 2);
    CHECK(f(x) == doctest::Approx(g(x)).epsilon(1e-12));
  }
}

TEST_CASE("combine") {
  std::mt19937_64 rng(29);
  const auto rbf = KernelModel::rbf(0.1);
  for (int t = 0; t < 30; ++t) {
    const RkhsFunction f(rbf, random_points(rng, 5, 1), random_vector(rng, 5));
    const RkhsFunction g(rbf, random_points(rng, 8, 1), random_vector(rng, 8));
    CHECK(combine(f, f, 1.0, -1.0).norm() <= 1e-7 * (1.0 + f.norm()));
    CHECK(combine(f, g, 2.0, 0.0).norm() == doctest::Approx(2.0 * f.norm()).epsilon(1e-12));
    // Parallelogram law.
    const double sum = std::pow(combine(f, g, 1, 1).norm(), 2) + std::pow(combine(f, g, 1, -1).norm(), 2);
    const double rhs = 2 * std::pow(f.norm(), 2) + 2 * std::pow(g.norm(), 2);
    CHECK(std::abs(sum - rhs) <= 1e-9 * std::max(1.0, rhs));
    // Evaluation distributes.
    const Point x = random_vector(rng, 1, 3.0);
    CHECK(combine(f, g, 0.5, -3.0)(x) == doctest::Approx(0.5 * f(x) - 3.0 * g(x)).epsilon(1e-12));
  }
  const RkhsFunction f(rbf, Points::Zero(1, 1), Eigen::VectorXd::Ones(1));
  const RkhsFunction h(KernelModel::rbf(0.2), Points::Zero(1, 1), Eigen::VectorXd::Ones(1));
  CHECK_THROWS_AS(combine(f, h, 1, 1), KernelMismatch);
}

TEST_CASE("property: reproducing bound |f(x)| <= ||k|| ||f||") {
  std::mt19937_64 rng(31);
  for (const auto& k : {KernelModel::rbf(0.1), KernelModel::rbf(1.5)}) {
    for (int t = 0; t < 20; ++t) {
      const RkhsFunction f(k, random_points(rng, 10, 2), random_vector(rng, 10));
      const Points xs = random_points(rng, 100, 2, 5.0);
      const Eigen::VectorXd v = f.evaluate(xs);
      CHECK(v.cwiseAbs().maxCoeff() <= *k.sup_norm() * f.norm() * (1.0 + 1e-12) + 1e-14);
    }
  }
}

TEST_CASE("solve_spd survives duplicated points") {
  const auto rbf = KernelModel::rbf(0.1);
  Points p(4, 1);
  p << 0.0, 0.0, 1.0, 1.0;
  const auto g = gram(rbf, p);
  const Eigen::VectorXd b = g * Eigen::VectorXd::Ones(4);
  const Eigen::VectorXd x = solve_spd(g, b);
  CHECK((g * x - b).norm() <= 1e-6);
  const Eigen::MatrixXd a = g + 0.5 * Eigen::MatrixXd::Identity(4, 4);
  CHECK((a * solve_spd(a, b) - b).norm() <= 1e-12);
}
