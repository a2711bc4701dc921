#include "resloss/nlls.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "resloss/error.hpp"

namespace resloss::nlls {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
// Keeps the internal coordinate off the flat points of the bound maps.
constexpr double kEdge = 1e-9;

struct Coordinate {
  Scale scale;
  double lo;  // bounds in value space (log for Log parameters)
  double hi;

  bool has_lo() const { return std::isfinite(lo); }
  bool has_hi() const { return std::isfinite(hi); }

  double to_value(double u) const {
    if (has_lo() && has_hi()) return lo + 0.5 * (hi - lo) * (1.0 + std::sin(u));
    if (has_lo()) return lo - 1.0 + std::sqrt(u * u + 1.0);
    if (has_hi()) return hi + 1.0 - std::sqrt(u * u + 1.0);
    return u;
  }
  double dvalue_du(double u) const {
    if (has_lo() && has_hi()) return 0.5 * (hi - lo) * std::cos(u);
    if (has_lo()) return u / std::sqrt(u * u + 1.0);
    if (has_hi()) return -u / std::sqrt(u * u + 1.0);
    return 1.0;
  }
  double from_value(double v) const {
    if (has_lo() && has_hi()) {
      const double s = std::clamp(2.0 * (v - lo) / (hi - lo) - 1.0, -1.0 + kEdge, 1.0 - kEdge);
      return std::asin(s);
    }
    if (has_lo()) {
      const double d = std::max(v - lo + 1.0, 1.0 + kEdge);
      return std::sqrt(d * d - 1.0);
    }
    if (has_hi()) {
      const double d = std::max(hi - v + 1.0, 1.0 + kEdge);
      return std::sqrt(d * d - 1.0);
    }
    return v;
  }
  double to_physical(double v) const { return scale == Scale::Log ? std::exp(v) : v; }
  // d physical / d value
  double dphys_dvalue(double v) const { return scale == Scale::Log ? std::exp(v) : 1.0; }
};

class Workspace {
 public:
  Workspace(const Problem& problem, const Options& options)
      : problem_(problem), options_(options) {
    const auto n = static_cast<Eigen::Index>(problem.parameters.size());
    if (n == 0) throw Error(ErrorCode::InvalidInput, "nlls: no parameters");
    if (problem.n_residuals < n) {
      throw Error(ErrorCode::InvalidInput, "nlls: fewer residuals than parameters");
    }
    if (!problem.residual) throw Error(ErrorCode::InvalidInput, "nlls: residual function missing");
    for (const auto& p : problem.parameters) {
      if (!(p.lower < p.upper)) {
        throw Error(ErrorCode::InvalidInput, "nlls: bounds not ordered for '" + p.name + "'");
      }
      if (p.scale == Scale::Log) {
        if (!(p.lower > 0.0)) {
          throw Error(ErrorCode::InvalidInput, "nlls: log parameter '" + p.name + "' needs lower > 0");
        }
        coords_.push_back({p.scale, std::log(p.lower),
                           std::isfinite(p.upper) ? std::log(p.upper) : kInf});
      } else {
        coords_.push_back({p.scale, p.lower, p.upper});
      }
    }
    weights_ = problem.weights.size() == 0 ? Eigen::VectorXd::Ones(problem.n_residuals)
                                           : problem.weights;
    if (weights_.size() != problem.n_residuals) {
      throw Error(ErrorCode::InvalidInput, "nlls: weight vector size mismatch");
    }
    if ((weights_.array() <= 0.0).any() || !weights_.allFinite()) {
      throw Error(ErrorCode::InvalidInput, "nlls: weights must be finite and positive");
    }
  }

  Eigen::Index n() const { return static_cast<Eigen::Index>(coords_.size()); }
  Eigen::Index m() const { return problem_.n_residuals; }

  Eigen::VectorXd value_from_physical(const Eigen::VectorXd& p) const {
    Eigen::VectorXd v(n());
    for (Eigen::Index i = 0; i < n(); ++i) {
      double pi = std::clamp(p[i], problem_.parameters[i].lower, problem_.parameters[i].upper);
      v[i] = coords_[i].scale == Scale::Log ? std::log(pi) : pi;
    }
    return v;
  }
  Eigen::VectorXd physical(const Eigen::VectorXd& v) const {
    Eigen::VectorXd p(n());
    for (Eigen::Index i = 0; i < n(); ++i) p[i] = coords_[i].to_physical(v[i]);
    return p;
  }
  Eigen::VectorXd value_from_internal(const Eigen::VectorXd& u) const {
    Eigen::VectorXd v(n());
    for (Eigen::Index i = 0; i < n(); ++i) v[i] = coords_[i].to_value(u[i]);
    return v;
  }
  Eigen::VectorXd internal_from_value(const Eigen::VectorXd& v) const {
    Eigen::VectorXd u(n());
    for (Eigen::Index i = 0; i < n(); ++i) u[i] = coords_[i].from_value(v[i]);
    return u;
  }

  // Weighted residuals; false when the model produced non-finite output.
  bool weighted_residual(const Eigen::VectorXd& v, Eigen::VectorXd& r) const {
    r.resize(m());
    problem_.residual(physical(v), r);
    if (r.size() != m()) throw Error(ErrorCode::InvalidInput, "nlls: residual size changed");
    r.array() *= weights_.array();
    return r.allFinite();
  }

  // Unweighted Jacobian with respect to value-space coordinates.
  Eigen::MatrixXd value_jacobian(const Eigen::VectorXd& v) const {
    Eigen::MatrixXd j(m(), n());
    if (problem_.jacobian) {
      const Eigen::VectorXd p = physical(v);
      problem_.jacobian(p, j);
      for (Eigen::Index c = 0; c < n(); ++c) j.col(c) *= coords_[c].dphys_dvalue(v[c]);
      return j;
    }
    Eigen::VectorXd up(m()), down(m());
    for (Eigen::Index c = 0; c < n(); ++c) {
      const double h = options_.fd_relative_step * std::max(std::abs(v[c]), 1.0);
      double hi_step = h;
      double lo_step = h;
      if (v[c] + h > coords_[c].hi) hi_step = 0.0;
      if (v[c] - h < coords_[c].lo) lo_step = 0.0;
      if (hi_step == 0.0 && lo_step == 0.0) {
        j.col(c).setZero();
        continue;
      }
      Eigen::VectorXd vs = v;
      vs[c] = v[c] + hi_step;
      problem_.residual(physical(vs), up);
      vs[c] = v[c] - lo_step;
      problem_.residual(physical(vs), down);
      j.col(c) = (up - down) / (hi_step + lo_step);
    }
    return j;
  }

  const Eigen::VectorXd& weights() const { return weights_; }
  const Coordinate& coord(Eigen::Index i) const { return coords_[static_cast<std::size_t>(i)]; }
  const Options& options() const { return options_; }

 private:
  const Problem& problem_;
  const Options& options_;
  std::vector<Coordinate> coords_;
  Eigen::VectorXd weights_;
};

double scaled_gradient(const Eigen::MatrixXd& j, const Eigen::VectorXd& r, double rn) {
  if (rn == 0.0) return 0.0;
  double worst = 0.0;
  for (Eigen::Index c = 0; c < j.cols(); ++c) {
    const double cn = j.col(c).norm();
    if (cn == 0.0) continue;
    worst = std::max(worst, std::abs(j.col(c).dot(r)) / (cn * rn));
  }
  return worst;
}

double scaled_gradient(const Eigen::MatrixXd& j, const Eigen::VectorXd& r) {
  return scaled_gradient(j, r, r.norm());
}

void fill_covariance(const Workspace& ws, const Eigen::VectorXd& v, FitOutcome& out) {
  const Eigen::Index n = ws.n();
  Eigen::MatrixXd j = ws.value_jacobian(v);
  for (Eigen::Index row = 0; row < j.rows(); ++row) j.row(row) *= ws.weights()[row];

  Eigen::VectorXd colnorm(n);
  for (Eigen::Index c = 0; c < n; ++c) colnorm[c] = j.col(c).norm();
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<Eigen::Index> live;
  for (Eigen::Index c = 0; c < n; ++c) {
    if (colnorm[c] > 0.0 && std::isfinite(colnorm[c])) live.push_back(c);
  }
  out.value_covariance = Eigen::MatrixXd::Zero(n, n);
  if (static_cast<Eigen::Index>(live.size()) < n) out.rank_deficient = true;
  if (!live.empty()) {
    const auto k = static_cast<Eigen::Index>(live.size());
    Eigen::MatrixXd js(j.rows(), k);
    for (Eigen::Index c = 0; c < k; ++c) js.col(c) = j.col(live[c]) / colnorm[live[c]];
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(js, Eigen::ComputeThinV);
    const Eigen::VectorXd& s = svd.singularValues();
    const double smax = s[0];
    Eigen::VectorXd inv2 = Eigen::VectorXd::Zero(k);
    for (Eigen::Index i = 0; i < k; ++i) {
      if (s[i] > ws.options().rank_tolerance * smax) {
        inv2[i] = 1.0 / (s[i] * s[i]);
      } else {
        out.rank_deficient = true;
      }
    }
    const Eigen::MatrixXd& vm = svd.matrixV();
    const Eigen::MatrixXd cs = vm * inv2.asDiagonal() * vm.transpose();
    for (Eigen::Index a = 0; a < k; ++a) {
      for (Eigen::Index b = 0; b < k; ++b) {
        out.value_covariance(live[a], live[b]) = cs(a, b) / (colnorm[live[a]] * colnorm[live[b]]);
      }
    }
  }
  for (Eigen::Index c = 0; c < n; ++c) {
    if (std::find(live.begin(), live.end(), c) == live.end()) out.value_covariance(c, c) = inf;
  }
  if (ws.options().scale_covariance && out.degrees_of_freedom > 0) {
    out.value_covariance *= out.reduced_chi_square;
  }
  Eigen::VectorXd d(n);
  for (Eigen::Index c = 0; c < n; ++c) d[c] = ws.coord(c).dphys_dvalue(v[c]);
  out.covariance = d.asDiagonal() * out.value_covariance * d.asDiagonal();
  // 0 * inf from untouched off-diagonals of dead columns
  for (Eigen::Index a = 0; a < n; ++a) {
    for (Eigen::Index b = 0; b < n; ++b) {
      if (a != b && std::isnan(out.covariance(a, b))) out.covariance(a, b) = 0.0;
    }
  }
}

}  // namespace

FitOutcome fit(const Problem& problem, const Options& options) {
  Workspace ws(problem, options);
  const Eigen::Index n = ws.n();
  const Eigen::Index m = ws.m();

  Eigen::VectorXd p0(n);
  for (Eigen::Index i = 0; i < n; ++i) p0[i] = problem.parameters[i].initial;
  Eigen::VectorXd u = ws.internal_from_value(ws.value_from_physical(p0));
  Eigen::VectorXd v = ws.value_from_internal(u);

  Eigen::VectorXd r;
  if (!ws.weighted_residual(v, r)) {
    throw Error(ErrorCode::FitDiverged, "nlls: residuals not finite at the initial point");
  }
  double cost = 0.5 * r.squaredNorm();
  const double initial_norm = r.norm();

  auto internal_jacobian = [&](const Eigen::VectorXd& uu, const Eigen::VectorXd& vv) {
    Eigen::MatrixXd j = ws.value_jacobian(vv);
    for (Eigen::Index row = 0; row < m; ++row) j.row(row) *= ws.weights()[row];
    for (Eigen::Index c = 0; c < n; ++c) j.col(c) *= ws.coord(c).dvalue_du(uu[c]);
    return j;
  };

  Eigen::MatrixXd j = internal_jacobian(u, v);
  Eigen::MatrixXd a = j.transpose() * j;
  Eigen::VectorXd g = j.transpose() * r;
  double lambda = 1e-3;
  double nu = 2.0;
  int small_steps = 0;
  Eigen::VectorXd scale = Eigen::VectorXd::Zero(n);
  FitOutcome out;
  bool converged = cost == 0.0;
  int iter = 0;
  while (!converged && iter < options.max_iterations) {
    ++iter;
    if (scaled_gradient(j, r) < options.gradient_tolerance) {
      converged = true;
      break;
    }
    // Damping scale never shrinks (as in MINPACK); this keeps parameters
    // whose bound map flattens out from taking huge Gauss-Newton steps.
    scale = scale.cwiseMax(a.diagonal());
    Eigen::VectorXd diag = scale;
    const double dmax = diag.maxCoeff();
    for (Eigen::Index i = 0; i < n; ++i) diag[i] = std::max(diag[i], 1e-12 * std::max(dmax, 1e-300));
    Eigen::MatrixXd damped = a;
    damped.diagonal() += lambda * diag;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(damped);
    Eigen::VectorXd step = ldlt.solve(-g);
    bool accepted = false;
    if (ldlt.info() == Eigen::Success && step.allFinite()) {
      const Eigen::VectorXd u_try = u + step;
      const Eigen::VectorXd v_try = ws.value_from_internal(u_try);
      Eigen::VectorXd r_try;
      if (ws.weighted_residual(v_try, r_try)) {
        const double cost_try = 0.5 * r_try.squaredNorm();
        const double predicted = 0.5 * step.dot(lambda * diag.cwiseProduct(step) - g);
        const double rho = predicted > 0.0 ? (cost - cost_try) / predicted : -1.0;
        if (rho > 0.0 && cost_try <= cost) {
          accepted = true;
          const double decrease = cost - cost_try;
          u = u_try;
          v = v_try;
          r = r_try;
          cost = cost_try;
          j = internal_jacobian(u, v);
          a = j.transpose() * j;
          g = j.transpose() * r;
          lambda *= std::max(1.0 / 3.0, 1.0 - std::pow(2.0 * rho - 1.0, 3));
          nu = 2.0;
          // A single tiny decrease can come from an over-damped step, so
          // ask for two in a row unless the gradient already vanished.
          if (decrease <= options.cost_tolerance * (cost + decrease)) {
            ++small_steps;
          } else {
            small_steps = 0;
          }
          if (cost == 0.0 || small_steps >= 2 ||
              (small_steps == 1 && scaled_gradient(j, r) < 1e-6)) {
            converged = true;
          }
        }
      }
    }
    if (!accepted) {
      lambda *= nu;
      nu *= 2.0;
      if (lambda > 1e30) {
        // No descent left at working precision: accept when the undamped
        // Gauss-Newton step is negligible against the coordinates.
        const Eigen::VectorXd gn = j.completeOrthogonalDecomposition().solve(-r);
        bool tiny = gn.allFinite();
        for (Eigen::Index i = 0; tiny && i < n; ++i) {
          tiny = std::abs(gn[i]) <= 1e-9 * std::max(std::abs(u[i]), 1.0);
        }
        converged = tiny || scaled_gradient(j, r) < 1e-6;
        break;
      }
    }
  }

  out.params = ws.physical(v);
  out.iterations = iter;
  out.converged = converged;
  out.chi_square = r.squaredNorm();
  out.degrees_of_freedom = static_cast<int>(m - n);
  out.reduced_chi_square =
      out.degrees_of_freedom > 0 ? out.chi_square / out.degrees_of_freedom : out.chi_square;
  out.gradient_norm = scaled_gradient(j, r, std::max(initial_norm, r.norm()));
  fill_covariance(ws, v, out);
  return out;
}

FitOutcome fit_multistart(const Problem& problem, const std::vector<Eigen::VectorXd>& starts,
                          const Options& options) {
  if (starts.empty()) return fit(problem, options);
  FitOutcome best;
  bool have = false;
  for (const auto& start : starts) {
    Problem trial = problem;
    for (std::size_t i = 0; i < trial.parameters.size(); ++i) {
      auto& prm = trial.parameters[i];
      prm.initial = std::clamp(start[static_cast<Eigen::Index>(i)], prm.lower, prm.upper);
    }
    FitOutcome candidate;
    try {
      candidate = fit(trial, options);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::FitDiverged) throw;
      continue;
    }
    if (!have || candidate.chi_square < best.chi_square) {
      best = std::move(candidate);
      have = true;
    }
  }
  if (!have) throw Error(ErrorCode::FitDiverged, "nlls: every start failed");
  return best;
}

Eigen::MatrixXd finite_difference_jacobian(const Problem& problem, const Eigen::VectorXd& params,
                                           double rel_step) {
  Options opts;
  opts.fd_relative_step = rel_step;
  Problem plain = problem;
  plain.jacobian = nullptr;
  plain.weights.resize(0);
  Workspace ws(plain, opts);
  const Eigen::VectorXd v = ws.value_from_physical(params);
  Eigen::MatrixXd j = ws.value_jacobian(v);
  for (Eigen::Index c = 0; c < j.cols(); ++c) j.col(c) /= ws.coord(c).dphys_dvalue(v[c]);
  return j;
}

Eigen::MatrixXd correlation(const Eigen::MatrixXd& covariance) {
  const Eigen::Index n = covariance.rows();
  Eigen::MatrixXd c(n, n);
  for (Eigen::Index a = 0; a < n; ++a) {
    for (Eigen::Index b = 0; b < n; ++b) {
      const double denom = std::sqrt(covariance(a, a) * covariance(b, b));
      c(a, b) = (denom > 0.0 && std::isfinite(denom)) ? covariance(a, b) / denom
                                                     : std::numeric_limits<double>::quiet_NaN();
    }
  }
  return c;
}

}  // namespace resloss::nlls
