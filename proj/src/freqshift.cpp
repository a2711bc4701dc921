#include "resloss/freqshift.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <set>

#include "resloss/constants.hpp"
#include "resloss/error.hpp"
#include "resloss/nlls.hpp"
#include "resloss/special.hpp"

namespace resloss::freqshift {

namespace {

using constants::boltzmann;
using constants::hbar;

// Neumaier-compensated sum of a few terms.
double compensated_sum(std::initializer_list<double> terms) {
  double sum = 0.0;
  double c = 0.0;
  for (double t : terms) {
    const double s = sum + t;
    c += std::abs(sum) >= std::abs(t) ? (sum - s) + t : (t - s) + sum;
    sum = s;
  }
  return sum + c;
}

double gap(double tc) { return constants::bcs_gap_ratio * boltzmann * tc; }

}  // namespace

double gamma_value(Gamma g) {
  switch (g) {
    case Gamma::ExtremeAnomalous: return -1.0 / 3.0;
    case Gamma::DirtyThick: return -0.5;
    case Gamma::ThinFilm: return -1.0;
  }
  return -1.0;
}

Gamma parse_gamma(const std::string& text) {
  if (text == "-1" || text == "-1.0") return Gamma::ThinFilm;
  if (text == "-1/2" || text == "-0.5") return Gamma::DirtyThick;
  if (text == "-1/3" || text == "-0.333" || text == "-0.3333333333333333") return Gamma::ExtremeAnomalous;
  throw Error(ErrorCode::InvalidInput, "gamma must be one of -1, -1/2, -1/3 (got '" + text + "')");
}

std::string to_string(Gamma g) {
  switch (g) {
    case Gamma::ExtremeAnomalous: return "-1/3";
    case Gamma::DirtyThick: return "-1/2";
    case Gamma::ThinFilm: return "-1";
  }
  return "-1";
}

double sigma2_zero(double omega, double tc) { return std::numbers::pi * gap(tc) / (hbar * omega); }

Conductivity sigma_thermal(double temperature_k, double omega, double tc) {
  if (!(temperature_k > 0.0) || !(temperature_k < tc)) {
    throw Error(ErrorCode::Domain, "conductivity needs 0 < T < Tc");
  }
  const double d0 = gap(tc);
  const double kt = boltzmann * temperature_k;
  const double xi = hbar * omega / (2.0 * kt);
  const double boltz = std::exp(-d0 / kt);
  const double ratio = d0 / (hbar * omega);
  Conductivity c;
  // sinh(xi) K0(xi) = (1 - e^-2xi)/2 * e^xi K0(xi)
  c.sigma1 = 4.0 * ratio * boltz * (-0.5 * std::expm1(-2.0 * xi)) * special::bessel_k0_scaled(xi);
  const double bracket = compensated_sum(
      {1.0, -std::sqrt(2.0 * std::numbers::pi * kt / d0) * boltz, -2.0 * boltz * special::bessel_i0_scaled(xi)});
  c.sigma2 = std::numbers::pi * ratio * bracket;
  c.phi = std::atan2(c.sigma2, c.sigma1);
  c.magnitude = std::hypot(c.sigma1, c.sigma2);
  return c;
}

double qp_freq_shift(const Params& p, double temperature_k, double omega) {
  const Conductivity c = sigma_thermal(temperature_k, omega, p.tc);
  const double g = gamma_value(p.gamma);
  const double ratio = c.magnitude / sigma2_zero(omega, p.tc);
  const double factor = std::sin(g * c.phi) / std::sin(g * std::numbers::pi / 2.0);
  return -0.5 * p.alpha_kin * (1.0 - factor * std::pow(ratio, -g));
}

double tls_freq_shift(double q_tls0, double temperature_k, double omega) {
  const double y = hbar * omega / (2.0 * std::numbers::pi * boltzmann * temperature_k);
  return special::digamma_real_part_minus_log(y) / (std::numbers::pi * q_tls0);
}

double freq_shift(const Params& p, double temperature_k, double omega) {
  return tls_freq_shift(p.q_tls0, temperature_k, omega) + qp_freq_shift(p, temperature_k, omega);
}

double referenced_freq_shift(const Params& p, double temperature_k, double t_ref, double omega) {
  return freq_shift(p, temperature_k, omega) - freq_shift(p, t_ref, omega);
}

double Dataset::omega() const { return constants::two_pi * f0_hz; }

double Dataset::base_temperature() const {
  double t = std::numeric_limits<double>::infinity();
  for (const auto& pt : points) t = std::min(t, pt.temperature_k);
  return t;
}

Fit fit_freq_shift(const Dataset& data, Gamma gamma, const FitOptions& options) {
  std::set<double> temps;
  // Without any sigma the points get equal weight and the covariance is
  // scaled by the residual scatter.
  const bool estimate_sigma = std::all_of(data.points.begin(), data.points.end(),
                                          [](const Point& pt) { return !(pt.sigma > 0.0); });
  for (const auto& pt : data.points) {
    if (!(pt.temperature_k > 0.0) || !(estimate_sigma || pt.sigma > 0.0) || !std::isfinite(pt.df_over_f)) {
      throw Error(ErrorCode::InvalidInput, "frequency-shift points need T > 0, sigma > 0 and finite values");
    }
    temps.insert(pt.temperature_k);
  }
  if (temps.size() < 6) throw Error(ErrorCode::InsufficientData, "frequency-shift fit needs >= 6 temperatures");
  if (!(data.f0_hz > 0.0)) throw Error(ErrorCode::InvalidInput, "frequency-shift data needs f0 > 0");

  const double omega = data.omega();
  const double t_ref = data.base_temperature();
  const double t_max = *temps.rbegin();
  const double tc_lo = 1.001 * t_max;
  const double tc_hi = std::max(options.tc_upper, 1.1 * tc_lo);
  const auto m = static_cast<Eigen::Index>(data.points.size());

  // For fixed Tc the model is linear in (1/Q_TLS0, alpha): scan Tc and
  // solve the weighted linear problem to seed the nonlinear fit.
  Eigen::VectorXd w(m), y(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    w[i] = estimate_sigma ? 1.0 : 1.0 / data.points[static_cast<std::size_t>(i)].sigma;
    y[i] = data.points[static_cast<std::size_t>(i)].df_over_f;
  }
  Eigen::MatrixXd a(m, 2);
  for (Eigen::Index i = 0; i < m; ++i) {
    const double t = data.points[static_cast<std::size_t>(i)].temperature_k;
    a(i, 0) = tls_freq_shift(1.0, t, omega) - tls_freq_shift(1.0, t_ref, omega);
  }
  double best_chi = std::numeric_limits<double>::infinity();
  Params seed{1e6, 0.5 * (tc_lo + tc_hi), 1e-3, gamma};
  for (int k = 0; k < options.tc_grid; ++k) {
    const double tc = tc_lo * std::pow(tc_hi / tc_lo, (k + 0.5) / options.tc_grid);
    const Params unit{1.0, tc, 1.0, gamma};
    for (Eigen::Index i = 0; i < m; ++i) {
      const double t = data.points[static_cast<std::size_t>(i)].temperature_k;
      a(i, 1) = qp_freq_shift(unit, t, omega) - qp_freq_shift(unit, t_ref, omega);
    }
    const Eigen::MatrixXd aw = w.asDiagonal() * a;
    const Eigen::VectorXd yw = w.cwiseProduct(y);
    Eigen::Vector2d coef = aw.colPivHouseholderQr().solve(yw);
    coef[0] = std::clamp(coef[0], 1.0 / options.q_upper, 1.0 / options.q_lower);
    coef[1] = std::clamp(coef[1], 0.0, 1.0);
    const double chi = (aw * coef - yw).squaredNorm();
    if (chi < best_chi) {
      best_chi = chi;
      seed = {1.0 / coef[0], tc, std::max(coef[1], 1e-9), gamma};
    }
  }

  nlls::Problem prob;
  prob.n_residuals = m;
  prob.weights = w;
  prob.parameters = {
      {"q_tls0", seed.q_tls0, options.q_lower, options.q_upper, nlls::Scale::Log},
      {"tc", seed.tc, tc_lo, tc_hi, nlls::Scale::Linear},
      {"alpha_kin", seed.alpha_kin, 0.0, 1.0, nlls::Scale::Linear},
  };
  prob.residual = [&data, omega, t_ref, gamma](const Eigen::VectorXd& v, Eigen::VectorXd& r) {
    const Params p{v[0], v[1], v[2], gamma};
    const double ref = freq_shift(p, t_ref, omega);
    for (std::size_t i = 0; i < data.points.size(); ++i) {
      r[static_cast<Eigen::Index>(i)] = freq_shift(p, data.points[i].temperature_k, omega) - ref - data.points[i].df_over_f;
    }
  };
  nlls::Options opts;
  opts.max_iterations = options.max_iterations;
  opts.scale_covariance = estimate_sigma;
  const nlls::FitOutcome out = nlls::fit(prob, opts);
  if (!out.params.allFinite()) throw Error(ErrorCode::FitDiverged, "frequency-shift fit diverged");

  Fit fit;
  fit.params = {out.params[0], out.params[1], out.params[2], gamma};
  fit.covariance = out.covariance;
  fit.q_tls0_sigma = std::sqrt(out.covariance(0, 0));
  fit.tc_sigma = std::sqrt(out.covariance(1, 1));
  fit.alpha_sigma = std::sqrt(out.covariance(2, 2));
  fit.t_ref = t_ref;
  fit.chi_square = out.chi_square;
  fit.reduced_chi_square = out.reduced_chi_square;
  fit.converged = out.converged;
  fit.rank_deficient = out.rank_deficient;
  return fit;
}

}  // namespace resloss::freqshift
