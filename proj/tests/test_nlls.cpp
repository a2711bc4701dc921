#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "resloss/error.hpp"
#include "resloss/nlls.hpp"

using namespace resloss;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

nlls::Problem line_problem(const std::vector<double>& x, const std::vector<double>& y) {
  nlls::Problem p;
  p.n_residuals = static_cast<Eigen::Index>(x.size());
  p.parameters = {{"a", 0.3}, {"b", -2.0}};
  p.residual = [x, y](const VectorXd& q, VectorXd& r) {
    for (std::size_t i = 0; i < x.size(); ++i) r[static_cast<Eigen::Index>(i)] = q[0] * x[i] + q[1] - y[i];
  };
  return p;
}

}  // namespace

TEST_CASE("exact linear data is fitted exactly") {
  std::vector<double> x, y;
  for (int i = 0; i < 12; ++i) {
    x.push_back(0.5 * i);
    y.push_back(2.5 * x.back() - 1.25);
  }
  const auto out = nlls::fit(line_problem(x, y));
  CHECK(out.converged);
  CHECK(out.params[0] == doctest::Approx(2.5).epsilon(1e-12));
  CHECK(out.params[1] == doctest::Approx(-1.25).epsilon(1e-12));
  CHECK(out.chi_square < 1e-24);
}

TEST_CASE("linear covariance equals the normal-equation inverse") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> noise(0.0, 0.1);
  std::vector<double> x, y;
  for (int i = 0; i < 30; ++i) {
    x.push_back(0.1 * i);
    y.push_back(1.5 * x.back() + 0.2 + noise(rng));
  }
  auto prob = line_problem(x, y);
  prob.weights = VectorXd::Constant(30, 10.0);
  const auto out = nlls::fit(prob);
  MatrixXd design(30, 2);
  for (int i = 0; i < 30; ++i) design.row(i) << x[i], 1.0;
  const MatrixXd expected = (100.0 * design.transpose() * design).inverse();
  CHECK((out.covariance - expected).norm() < 1e-8 * expected.norm());
  CHECK(out.degrees_of_freedom == 28);
  CHECK(out.reduced_chi_square == doctest::Approx(out.chi_square / 28.0));
  const MatrixXd diff = out.covariance - out.covariance.transpose();
  CHECK(diff.norm() < 1e-15 * out.covariance.norm());
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(out.covariance);
  CHECK(es.eigenvalues().minCoeff() >= 0.0);
}

TEST_CASE("convex quadratic minimum is recovered") {
  nlls::Problem p;
  p.n_residuals = 3;
  p.parameters = {{"x", 5.0, -10.0, 10.0}, {"y", 1.0, 0.0, 100.0}, {"z", 0.0}};
  p.residual = [](const VectorXd& q, VectorXd& r) {
    r << q[0] - 1.234, 3.0 * (q[1] - 42.0), 0.5 * (q[2] + 7.0);
  };
  const auto out = nlls::fit(p);
  CHECK(out.converged);
  CHECK(out.params[0] == doctest::Approx(1.234).epsilon(1e-8));
  CHECK(out.params[1] == doctest::Approx(42.0).epsilon(1e-8));
  CHECK(out.params[2] == doctest::Approx(-7.0).epsilon(1e-8));
  CHECK(out.gradient_norm < 1e-6);
}

TEST_CASE("Rosenbrock valley") {
  nlls::Problem p;
  p.n_residuals = 2;
  p.parameters = {{"x", -1.2}, {"y", 1.0}};
  p.residual = [](const VectorXd& q, VectorXd& r) { r << 10.0 * (q[1] - q[0] * q[0]), 1.0 - q[0]; };
  const auto out = nlls::fit(p);
  CHECK(out.params[0] == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(out.params[1] == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("active bound stops the parameter at the bound") {
  nlls::Problem p;
  p.n_residuals = 2;
  p.parameters = {{"x", 0.5, 0.0, 1.0}, {"y", 3.0, 1.0, std::numeric_limits<double>::infinity()}};
  p.residual = [](const VectorXd& q, VectorXd& r) { r << q[0] - 2.0, q[1] + 4.0; };
  const auto out = nlls::fit(p);
  CHECK(out.params[0] == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(out.params[1] == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(out.params[0] <= 1.0);
  CHECK(out.params[1] >= 1.0);
}

TEST_CASE("log-scaled decay constant spanning decades") {
  std::vector<double> t, y;
  for (int i = 0; i < 40; ++i) {
    t.push_back(1e-7 * i);
    y.push_back(3.0 * std::exp(-t.back() * 2.5e6));
  }
  nlls::Problem p;
  p.n_residuals = 40;
  p.parameters = {{"amp", 1.0, 0.0, 10.0}, {"rate", 1e5, 1e2, 1e10, nlls::Scale::Log}};
  p.residual = [t, y](const VectorXd& q, VectorXd& r) {
    for (int i = 0; i < 40; ++i) r[i] = q[0] * std::exp(-t[i] * q[1]) - y[i];
  };
  const auto out = nlls::fit(p);
  CHECK(out.params[0] == doctest::Approx(3.0).epsilon(1e-8));
  CHECK(out.params[1] == doctest::Approx(2.5e6).epsilon(1e-8));
}

TEST_CASE("result does not depend on residual ordering") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> noise(0.0, 0.02);
  std::vector<double> t, y;
  for (int i = 0; i < 50; ++i) {
    t.push_back(0.1 * i);
    y.push_back(2.0 * std::exp(-0.7 * t.back()) + 0.1 + noise(rng));
  }
  auto make = [](std::vector<double> tt, std::vector<double> yy) {
    nlls::Problem p;
    p.n_residuals = static_cast<Eigen::Index>(tt.size());
    p.parameters = {{"a", 1.0}, {"k", 0.3, 1e-3, 100.0, nlls::Scale::Log}, {"c", 0.0}};
    p.residual = [tt, yy](const VectorXd& q, VectorXd& r) {
      for (std::size_t i = 0; i < tt.size(); ++i) {
        r[static_cast<Eigen::Index>(i)] = q[0] * std::exp(-q[1] * tt[i]) + q[2] - yy[i];
      }
    };
    return p;
  };
  const auto a = nlls::fit(make(t, y));
  std::vector<std::size_t> idx(t.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  std::vector<double> t2, y2;
  for (auto i : idx) {
    t2.push_back(t[i]);
    y2.push_back(y[i]);
  }
  const auto b = nlls::fit(make(t2, y2));
  for (int i = 0; i < 3; ++i) CHECK(std::abs(a.params[i] - b.params[i]) <= 1e-6 * std::abs(a.params[i]));
}

TEST_CASE("rank deficiency is flagged") {
  nlls::Problem p;
  p.n_residuals = 4;
  p.parameters = {{"a", 0.1}, {"b", 0.2}};
  p.residual = [](const VectorXd& q, VectorXd& r) {
    for (int i = 0; i < 4; ++i) r[i] = (q[0] + q[1]) * i - 3.0 * i;
  };
  const auto out = nlls::fit(p);
  CHECK(out.rank_deficient);
  CHECK(out.params[0] + out.params[1] == doctest::Approx(3.0));
}

TEST_CASE("non-convergence is reported after the iteration cap") {
  nlls::Problem p;
  p.n_residuals = 2;
  p.parameters = {{"x", -1.2}, {"y", 1.0}};
  p.residual = [](const VectorXd& q, VectorXd& r) { r << 10.0 * (q[1] - q[0] * q[0]), 1.0 - q[0]; };
  nlls::Options o;
  o.max_iterations = 2;
  const auto out = nlls::fit(p, o);
  CHECK_FALSE(out.converged);
  CHECK(out.iterations == 2);
}

TEST_CASE("invalid problems are rejected") {
  nlls::Problem p;
  p.n_residuals = 1;
  p.parameters = {{"a", 0.0}, {"b", 0.0}};
  p.residual = [](const VectorXd&, VectorXd& r) { r.setZero(); };
  CHECK_THROWS_AS(nlls::fit(p), Error);
  p.n_residuals = 3;
  p.parameters = {{"a", 0.0, 1.0, 0.0}, {"b", 0.0}};
  CHECK_THROWS_AS(nlls::fit(p), Error);
  p.parameters = {{"a", 1.0, 0.0, 2.0, nlls::Scale::Log}, {"b", 0.0}};
  CHECK_THROWS_AS(nlls::fit(p), Error);
}

TEST_CASE("multistart keeps the deepest minimum") {
  nlls::Problem p;
  p.n_residuals = 1;
  p.parameters = {{"x", 0.0, -3.0, 3.0}};
  // two minima: x = -1 (residual 0.3) and x = 2 (residual 0)
  p.residual = [](const VectorXd& q, VectorXd& r) {
    const double x = q[0];
    r[0] = (x + 1.0) * (x - 2.0) + 0.3 * std::exp(-4.0 * (x - 2.0) * (x - 2.0)) * 0.0 +
           0.3 * (x < 0.5 ? 1.0 : 0.0) * std::exp(-(x + 1.0) * (x + 1.0));
  };
  std::vector<VectorXd> starts{VectorXd::Constant(1, -1.5), VectorXd::Constant(1, 2.5)};
  const auto out = nlls::fit_multistart(p, starts);
  CHECK(out.chi_square < 1e-20);
  CHECK(out.params[0] == doctest::Approx(2.0).epsilon(1e-8));
}
