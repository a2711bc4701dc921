#pragma once

#include <Eigen/Dense>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "resloss/lossmodel.hpp"

// Surface versus bulk TLS loss from participation-ratio scaling, and the
// split of the surface loss tangent into oxide, substrate-side and
// hydrocarbon parts using treatments with different oxide thickness.
// Loss tangents here are referenced to the metal-substrate participation.

namespace resloss::decomposition {

enum class Treatment { Native, BOE, LongBOE, Triacid };
std::string to_string(Treatment t);
/// Accepts native, BOE, longBOE, triacid (case-insensitive; long_boe and long-BOE too).
Treatment parse_treatment(const std::string& text);
inline constexpr Treatment kAllTreatments[] = {Treatment::Native, Treatment::BOE, Treatment::LongBOE,
                                               Treatment::Triacid};

enum class DeviceType { CPW, LE };
std::string to_string(DeviceType t);
DeviceType parse_device_type(const std::string& text);

struct DeviceGeometry {
  std::string label;
  double p_ms = 0.0;
  std::optional<double> p_ma;
  std::optional<double> p_sa;
  Treatment treatment = Treatment::Native;
  DeviceType type = DeviceType::CPW;
  std::vector<std::string> tags;  // etch, packaging, ...
};
/// Throws Error(InvalidInput) when a participation lies outside (0, 1).
void validate(const DeviceGeometry& g);

struct Measured {
  double value = 0.0;
  double sigma = 0.0;
};

// ---- participation-ratio scaling -------------------------------------------

struct SprDevice {
  std::string label;
  double p_ms = 0.0;
  double q = 0.0;        // Q_TLS,0 or Q_TLS(n = 1)
  double q_sigma = 0.0;
  Treatment treatment = Treatment::Native;
};

struct SprFit {
  std::map<Treatment, Measured> tan_surface;
  Measured l_bulk;    // shared SPR-independent loss
  Measured tan_bulk;  // l_bulk / p_bulk
  double p_bulk = 1.0;
  Eigen::MatrixXd covariance;           // over (treatments in enum order..., l_bulk)
  std::vector<Treatment> order;
  double chi_square = 0.0;
  int degrees_of_freedom = 0;
  bool bulk_unidentifiable = false;
  std::vector<std::string> diagnostics;

  /// Ratio of two surface loss tangents with first-order uncertainty.
  Measured ratio(Treatment numerator, Treatment denominator) const;
};

/// Weighted least squares of 1/Q = p_MS tan_surface[treatment] + L_bulk.
/// Throws Error(InsufficientData) for fewer than two treatments or fewer than
/// three devices in any treatment.
SprFit fit_spr_scaling(const std::vector<SprDevice>& devices, double p_bulk = 1.0);

// ---- treatment table and pair solutions ------------------------------------

struct SurfaceEntry {
  Treatment treatment = Treatment::Native;
  Measured tan_delta;        // surface loss tangent
  Measured thickness_nm;     // oxide thickness
  int hydrocarbon = 0;       // 1 when hydrocarbon loss is present
};

struct SurfaceTable {
  std::vector<SurfaceEntry> entries;
  double t0_nm = 3.0;
  std::optional<Measured> tan_bulk;

  const SurfaceEntry& at(Treatment t) const;
  SurfaceEntry& at(Treatment t);
  /// Default thicknesses (native 3, BOE 2.4, long BOE 1.5 +- 0.3, triacid 6 nm)
  /// and hydrocarbon indicators; loss tangents zero until filled in.
  static SurfaceTable with_default_thicknesses();
};

struct PairSolution {
  Treatment a = Treatment::BOE;
  Treatment b = Treatment::Triacid;
  Measured oxide;          // oxide loss at the reference thickness
  Measured substrate;      // combined substrate-air + metal-substrate term
  double covariance = 0.0; // cov(oxide, substrate)
  bool degenerate = false;     // thicknesses indistinguishable; sigma inflated
  bool low_precision = false;  // oxide sigma >= |oxide|
};

/// Throws Error(InvalidInput) if either treatment carries hydrocarbon loss
/// or the treatments coincide.
PairSolution solve_pair(Treatment a, Treatment b, const SurfaceTable& table);

struct HydrocarbonSolution {
  Measured value;
  bool unphysical = false;  // negative loss tangent
};

/// native - (t_native / t0) oxide - substrate, with oxide/substrate covariance.
HydrocarbonSolution solve_hydrocarbon(const SurfaceEntry& native, const Measured& oxide,
                                      const Measured& substrate, double oxide_substrate_cov, double t0_nm);
HydrocarbonSolution solve_hydrocarbon(const SurfaceEntry& native, const PairSolution& pair, double t0_nm);

struct Aggregate {
  Measured value;
  double chi_square = 0.0;  // consistency of the inputs with the mean
  int degrees_of_freedom = 0;
};

/// Inverse-variance weighted mean.
Aggregate weighted_mean(const std::vector<Measured>& values);

struct Intrinsic {
  double alpha_ms = 0.0;  // p_MS / p_MA
  double beta_ma = 0.0;   // p_MA / p_MS
  Measured oxide;
  Measured hydrocarbon;
  bool identity_holds = false;  // alpha_ms * beta_ma == 1
};

struct DecompositionResult {
  std::vector<PairSolution> pairs;
  std::vector<HydrocarbonSolution> hydrocarbon_per_pair;
  Aggregate oxide;
  Aggregate substrate;
  Aggregate hydrocarbon;
  bool hydrocarbon_unphysical = false;
  std::optional<Intrinsic> intrinsic;
};

/// Native plus every pair of hydrocarbon-free treatments. Optional
/// participation ratios only add the intrinsic values.
DecompositionResult aggregate_triplets(const SurfaceTable& table, std::optional<double> alpha_ms = {},
                                       std::optional<double> beta_ma = {});

/// Intrinsic (participation-corrected) loss tangent: value / beta_ma.
/// Throws Error(MissingCalibration) unless beta_ma is finite and positive.
Measured rescale_intrinsic(const Measured& ms_referenced, double beta_ma);
Measured unrescale_intrinsic(const Measured& intrinsic, double beta_ma);
bool participation_identity(double alpha_ms, double beta_ma, double tol = 1e-12);

/// Alternative placement with hydrocarbons on the native MA and SA interfaces
/// and on the SA interface of both BOE treatments; solved exactly.
struct ExcludedModelSolution {
  double oxide = 0.0;
  double substrate = 0.0;
  double hydrocarbon_ma = 0.0;
  double hydrocarbon_sa = 0.0;
  bool unphysical = false;  // some loss tangent negative
};
ExcludedModelSolution solve_excluded_model(const SurfaceTable& table);

// ---- single-photon variant and oxide thickness --------------------------------

/// Q_TLS at the given photon number and temperature; the default is the
/// single-photon value used for the low-power SPR regression.
double q_tls_at_photon(const lossmodel::LossParams& params, double omega, double temperature_k,
                       double nbar = 1.0);

struct LinearPrediction {
  Measured value;
  Measured slope;
  Measured intercept;
};

/// Ordinary least-squares line through (x, y) evaluated at x_query. Throws
/// Error(DegenerateInput) for fewer than two points or identical x.
LinearPrediction extrapolate_oxide_thickness(const std::vector<std::pair<double, double>>& points,
                                             double x_query);

}  // namespace resloss::decomposition
