#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "resloss/lineshape.hpp"

// Internal quality factor versus photon number and temperature: saturable TLS
// loss, thermal quasiparticle loss and a power-independent residual channel.
// Photon number is always in photons and temperature in kelvin; D carries
// whatever units that convention implies.

namespace resloss::lossmodel {

struct LossParams {
  double q_tls0 = 1e6;
  double d = 1e3;
  double beta1 = 1.0;
  double beta2 = 0.6;
  double q_qp0 = 50.0;
  double tc = 4.0;                 // K; the gap is 1.764 kB Tc
  std::optional<double> q_other;   // absent: no residual channel
};

/// Parameter order used by covariance matrices and correlation reports.
enum ParamIndex : int { kQTls0 = 0, kD, kBeta1, kBeta2, kQQp0, kTc, kQOther, kNumParams };
const char* param_name(int index);

double q_tls(const LossParams& p, double nbar, double temperature_k, double omega);
/// Quasiparticle-limited Q; saturates at the largest double instead of overflowing.
double q_qp(const LossParams& p, double temperature_k, double omega);
/// 1 / q_qp, exact down to underflow.
double inverse_q_qp(const LossParams& p, double temperature_k, double omega);
double q_int_model(const LossParams& p, double nbar, double temperature_k, double omega);

struct SweepPoint {
  double nbar = 0.0;
  double temperature_k = 0.0;
  double q_int = 0.0;
  double q_int_sigma = 0.0;
  double power_dbm = std::numeric_limits<double>::quiet_NaN();  // optional grouping tag
};

struct SweepDataset {
  std::string device;
  double omega = 0.0;  // rad/s
  std::vector<SweepPoint> points;
};

/// Throws Error(InsufficientGrid) or Error(InvalidInput).
void validate(const SweepDataset& data);

struct SweepFitOptions {
  double q_lower = 1e3;
  double q_upper = 1e12;
  double q_qp0_lower = 0.1;
  double q_qp0_upper = 1e12;
  double d_lower = 1e-8;
  double d_upper = 1e14;
  double beta1_lower = 0.0;
  double beta1_upper = 4.0;
  double beta2_lower = 0.05;
  double beta2_upper = 2.0;
  double tc_lower = 0.05;
  double tc_upper = 6.0;
  int starts = 5;
  std::uint64_t seed = 0x5eed;
  int max_iterations = 200;
  double cost_tolerance = 1e-10;
  bool fit_q_other = true;
  double identifiability_delta_chi2 = 1.0;
  double correlation_threshold = 0.8;
  /// Hold Tc at this value (profile-likelihood scans along the Tc-Q_QP0 ridge).
  std::optional<double> fixed_tc;
};

struct LossFitResult {
  LossParams params;
  /// Over ParamIndex; the Q_other row and column are zero when it is absent.
  Eigen::Matrix<double, kNumParams, kNumParams> covariance =
      Eigen::Matrix<double, kNumParams, kNumParams>::Zero();
  double chi_square = 0.0;
  double reduced_chi_square = 0.0;
  int degrees_of_freedom = 0;
  bool converged = false;
  bool rank_deficient = false;

  bool q_other_identified = false;
  double q_other_delta_chi2 = 0.0;  // chi2(without) - chi2(with)
  bool qp_identified = true;
  double qp_delta_chi2 = 0.0;       // chi2(no QP term) - chi2(full)
  double tc_qp0_correlation = 0.0;  // between Tc and ln Q_QP0
  bool tc_qp0_correlated = false;
  std::vector<std::string> diagnostics;

  double sigma(int index) const { return std::sqrt(covariance(index, index)); }
};

/// Weighted fit of ln Q_int. Throws Error(InsufficientGrid) or
/// Error(FitDiverged); identifiability problems are reported, not thrown.
LossFitResult fit_sweep(const SweepDataset& data, const SweepFitOptions& options = {});

/// Mean intracavity photon number for an applied power before attenuation:
/// 2 Q_tot^2 P_in / (Q_c hbar w0^2), P_in = 10^((P - att - 30)/10) W.
/// Throws Error(MissingCalibration) when the attenuation is not finite.
double photon_number(double power_dbm, double attenuation_db, const lineshape::Params& lineshape);

struct CorrelationReport {
  std::vector<std::string> columns;   // the seven parameters plus "ln D^(1/beta2)"
  Eigen::MatrixXd r;                  // Pearson coefficients, NaN where undefined
  struct Pair {
    std::string a;
    std::string b;
    double r;
  };
  std::vector<Pair> flagged;                 // among the seven fitted parameters
  std::vector<Pair> flagged_reparameterized; // D^(1/beta2) against the others (D excluded)
  bool undefined = false;                    // some column had zero variance
};

/// Across-device correlations (log scale for Q's and D). Needs at least five
/// fits; Q_other enters only when every fit reports it.
CorrelationReport correlation_report(const std::vector<LossFitResult>& fits, double threshold = 0.8);

}  // namespace resloss::lossmodel
