#pragma once

#include <Eigen/Dense>
#include <functional>
#include <limits>
#include <string>
#include <vector>

// Bounded, weighted nonlinear least squares (damped Gauss-Newton).

namespace resloss::nlls {

/// How a parameter is represented inside the solver. Log parameters must
/// have a strictly positive lower bound.
enum class Scale { Linear, Log };

struct Parameter {
  std::string name;
  double initial = 0.0;
  double lower = -std::numeric_limits<double>::infinity();
  double upper = std::numeric_limits<double>::infinity();
  Scale scale = Scale::Linear;
};

/// Unweighted residuals (model - data) for a physical parameter vector.
using ResidualFn = std::function<void(const Eigen::VectorXd& params, Eigen::VectorXd& out)>;
/// Optional analytic Jacobian of the unweighted residuals w.r.t. physical params.
using JacobianFn = std::function<void(const Eigen::VectorXd& params, Eigen::MatrixXd& out)>;

struct Problem {
  ResidualFn residual;
  JacobianFn jacobian;        // empty: central finite differences
  std::vector<Parameter> parameters;
  Eigen::VectorXd weights;    // 1/sigma per residual; empty means unit weights
  Eigen::Index n_residuals = 0;
};

struct Options {
  int max_iterations = 200;
  double cost_tolerance = 1e-10;     // relative decrease of chi-square
  double gradient_tolerance = 1e-10; // scaled gradient, see FitOutcome::gradient_norm
  double fd_relative_step = 1e-6;
  double rank_tolerance = 1e-9;      // singular-value ratio
  bool scale_covariance = false;     // multiply covariance by reduced chi-square
};

struct FitOutcome {
  Eigen::VectorXd params;
  /// Covariance of the physical parameters (Gauss-Newton, (J^T W J)^-1).
  Eigen::MatrixXd covariance;
  /// Same, in solver value space (log for Log parameters).
  Eigen::MatrixXd value_covariance;
  double chi_square = 0.0;
  double reduced_chi_square = 0.0;
  /// Max over parameters of |(J^T r)_i| / (|J_i| |r_0|) in the bound-respecting
  /// internal coordinates, r_0 being the starting residual; ~0 when stationary.
  double gradient_norm = 0.0;
  bool converged = false;
  bool rank_deficient = false;
  int iterations = 0;
  int degrees_of_freedom = 0;
};

FitOutcome fit(const Problem& problem, const Options& options = {});

/// Runs fit() from every start vector and keeps the lowest chi-square (first
/// one wins on ties). Each start is clamped into the bounds.
FitOutcome fit_multistart(const Problem& problem, const std::vector<Eigen::VectorXd>& starts,
                          const Options& options = {});

/// Central finite-difference Jacobian of the unweighted residuals, with step
/// rel_step * max(|p_i|, tiny) clipped to stay inside the bounds.
Eigen::MatrixXd finite_difference_jacobian(const Problem& problem, const Eigen::VectorXd& params,
                                           double rel_step = 1e-6);

/// Correlation matrix from a covariance; zero-variance rows become NaN.
Eigen::MatrixXd correlation(const Eigen::MatrixXd& covariance);

}  // namespace resloss::nlls
