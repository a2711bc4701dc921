#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace resloss::lineshape {

/// Magnitude transmission trace of one resonator at one power and temperature.
struct Trace {
  std::vector<double> freq_hz;      // strictly increasing
  std::vector<double> s21_mag;      // |S21| >= 0
  std::vector<double> s21_sigma;    // optional, same length when present
  double power_dbm = 0.0;
  double temperature_k = 0.0;
  std::string resonator_id;
};

/// Throws Error(InvalidInput) when the trace is unusable.
void validate(const Trace& trace);

struct Params {
  double f0 = 0.0;         // Hz
  double q_tot = 0.0;
  double q_c = 0.0;
  double asymmetry = 0.0;  // dimensionless
  double baseline = 0.0;

  double q_int() const { return 1.0 / (1.0 / q_tot - 1.0 / q_c); }
  double linewidth() const { return f0 / q_tot; }
  static Params from_q_int(double f0, double q_int, double q_c, double asymmetry = 0.0,
                           double baseline = 0.0) {
    return {f0, 1.0 / (1.0 / q_int + 1.0 / q_c), q_c, asymmetry, baseline};
  }
};

/// |1 - (Q_tot/Q_c)(1 - 2i a) / (1 + 2i Q_tot (f - f0)/f0)| + baseline.
double s21_model(const Params& p, double f_hz);

/// Indices into TraceFit::covariance and s21_gradient.
enum FitIndex : int { kF0 = 0, kQInt = 1, kQc = 2, kAsym = 3, kBaseline = 4 };

/// Model value and its derivatives with respect to (f0, Q_int, Q_c,
/// asymmetry, baseline).
double s21_gradient(const Params& p, double f_hz, double grad[5]);

struct FitOptions {
  int max_iterations = 200;
  bool multistart = true;  // also try asymmetry starts of +-0.2
};

struct TraceFit {
  Params params;
  double q_int = 0.0;
  double q_int_sigma = 0.0;
  double q_c_sigma = 0.0;
  double f0_sigma = 0.0;
  /// Covariance over (f0, Q_int, Q_c, asymmetry, baseline).
  Eigen::Matrix<double, 5, 5> covariance = Eigen::Matrix<double, 5, 5>::Zero();
  double noise_sigma = 0.0;      // per-point sigma used for weighting
  bool sigma_estimated = false;  // true when the trace carried no sigma column
  double chi_square = 0.0;
  double reduced_chi_square = 0.0;
  bool converged = false;
  bool rank_deficient = false;
  int iterations = 0;
};

/// Fits the magnitude model to a trace. Throws Error(NoDipFound) when no
/// resonance dip stands out of the edge level, Error(FitDiverged) on failure.
TraceFit fit_trace(const Trace& trace, const FitOptions& options = {});

/// Initial estimate used by fit_trace (exposed for diagnostics and tests).
Params initial_guess(const Trace& trace);

struct NonlinearityOptions {
  double residual_threshold = 5.0;
  double skew_threshold = 0.3;
};

struct NonlinearityReport {
  bool flagged = false;
  double residual_score = 0.0;  // near-dip residual RMS over the noise estimate
  double skew_score = 0.0;      // signed residual imbalance across f0 over dip depth
};

NonlinearityReport detect_nonlinearity(const Trace& trace, const Params& fit,
                                       const NonlinearityOptions& options = {});

struct QcReport {
  double mean = 0.0;
  double cv = 0.0;  // population standard deviation over mean
  bool warn = false;
  std::size_t count = 0;
};

/// Throws Error(InsufficientData) for fewer than three values.
QcReport qc_constancy(const std::vector<double>& q_c_values, double cv_threshold = 0.2);

}  // namespace resloss::lineshape
