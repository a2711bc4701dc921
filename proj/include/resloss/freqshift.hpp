#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

// Fractional resonance shift versus temperature: a TLS digamma term plus a
// thermal-quasiparticle term from the surface impedance Z_s ~ sigma^gamma.

namespace resloss::freqshift {

/// Surface-impedance exponent regimes.
enum class Gamma {
  ExtremeAnomalous,  // -1/3, thick film
  DirtyThick,        // -1/2, thick film in the dirty limit
  ThinFilm,          // -1, thin film in the dirty limit (default)
};

double gamma_value(Gamma g);
/// Accepts "-1", "-1/2", "-1/3" (and the decimal forms). Throws Error(InvalidInput).
Gamma parse_gamma(const std::string& text);
std::string to_string(Gamma g);

/// Thermal conductivity normalized to the normal-state value.
struct Conductivity {
  double sigma1 = 0.0;
  double sigma2 = 0.0;
  double phi = 0.0;        // atan2(sigma2, sigma1), in (0, pi/2]
  double magnitude = 0.0;  // |sigma| / sigma_n
};

/// Throws Error(Domain) unless 0 < T < Tc.
Conductivity sigma_thermal(double temperature_k, double omega, double tc);
/// sigma2 / sigma_n at T = 0, i.e. pi Delta0 / (hbar omega).
double sigma2_zero(double omega, double tc);

struct Params {
  double q_tls0 = 1e6;
  double tc = 4.0;
  double alpha_kin = 1e-3;
  Gamma gamma = Gamma::ThinFilm;
};

/// -(alpha/2) (1 - [sin(g phi)/sin(g pi/2)] (|sigma(T)|/|sigma(0)|)^(-g)).
double qp_freq_shift(const Params& p, double temperature_k, double omega);
/// (1/(pi Q_TLS0)) [Re psi(1/2 + i y) - ln y], y = hbar omega / (2 pi kB T).
double tls_freq_shift(double q_tls0, double temperature_k, double omega);
/// Sum of both terms, unreferenced.
double freq_shift(const Params& p, double temperature_k, double omega);
/// freq_shift(T) - freq_shift(T_ref): the curve passes through zero at T_ref.
double referenced_freq_shift(const Params& p, double temperature_k, double t_ref, double omega);

struct Point {
  double temperature_k = 0.0;
  double df_over_f = 0.0;
  double sigma = 0.0;  // 0 or NaN on every point: equal weights, scatter-scaled covariance
};

struct Dataset {
  std::string resonator_id;
  double f0_hz = 0.0;  // reference (base-temperature) frequency
  std::vector<Point> points;
  double omega() const;
  double base_temperature() const;
};

struct FitOptions {
  double q_lower = 1e3;
  double q_upper = 1e12;
  double tc_upper = 6.0;
  int tc_grid = 80;
  int max_iterations = 200;
};

struct Fit {
  Params params;
  Eigen::Matrix3d covariance = Eigen::Matrix3d::Zero();  // (Q_TLS0, Tc, alpha)
  double q_tls0_sigma = 0.0;
  double tc_sigma = 0.0;
  double alpha_sigma = 0.0;
  double t_ref = 0.0;
  double chi_square = 0.0;
  double reduced_chi_square = 0.0;
  bool converged = false;
  bool rank_deficient = false;
};

/// Weighted fit of the referenced model. Throws Error(InsufficientData) for
/// fewer than six temperatures and Error(FitDiverged) on failure.
Fit fit_freq_shift(const Dataset& data, Gamma gamma, const FitOptions& options = {});

}  // namespace resloss::freqshift
