#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "resloss/decomposition.hpp"
#include "resloss/freqshift.hpp"
#include "resloss/lineshape.hpp"
#include "resloss/lossmodel.hpp"

// Forward-model generators used as oracles for the fitters and to build
// end-to-end campaigns on disk.

namespace resloss::synth {

/// Independent, reproducible sub-seed for stream `stream` of a base seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

struct TraceSpec {
  double span_linewidths = 5.0;
  int points = 201;
  /// Noise relative to the off-resonance level; infinity means noiseless.
  double snr_db = std::numeric_limits<double>::infinity();
  bool emit_sigma = true;  // attach the per-point noise sigma column when noisy
  double power_dbm = 0.0;
  double temperature_k = 0.0;
  std::string resonator_id = "r0";
};

/// Gaussian |S21| sigma implied by an SNR for the given lineshape.
double noise_sigma(const lineshape::Params& p, double snr_db);

lineshape::Trace generate_trace(const lineshape::Params& p, const TraceSpec& spec, std::uint64_t seed);

/// Drive-pulled trace: the detuning obeys y = y0 - pull / (1 + 4 y^2), solved
/// along an upward sweep, which bifurcates into a shark fin for pull above
/// about 0.77.
lineshape::Trace generate_nonlinear_trace(const lineshape::Params& p, double pull, const TraceSpec& spec,
                                          std::uint64_t seed);

struct SweepSpec {
  std::vector<double> powers_dbm{-60, -50, -40, -30, -20, -10};  // 10 dB spacing
  std::vector<double> temperatures_k{0.017, 0.03, 0.05, 0.08, 0.12, 0.18,
                                     0.25,  0.35, 0.5,  0.65, 0.8,  1.0};
  /// Photon number per power when non-empty; otherwise solved self-consistently
  /// from the applied power, attenuation and coupling.
  std::vector<double> nbar;
  double attenuation_db = 80.0;
  double q_c = 3e5;
  double asymmetry = 0.0;
  double q_noise = 0.03;  // fractional Gaussian noise on Q_int (dataset mode)
  TraceSpec trace;        // per-trace mode settings
};

/// Photon number consistent with the Q it produces at this power.
double self_consistent_nbar(const lossmodel::LossParams& loss, double omega, double temperature_k,
                            double power_dbm, double attenuation_db, double q_c);

struct GeneratedSweep {
  lossmodel::SweepDataset dataset;          // noisy Q_int grid
  std::vector<lineshape::Trace> traces;     // per-trace mode only
  std::vector<lineshape::Params> lineshapes;  // true lineshape per grid point
};

GeneratedSweep generate_sweep(const lossmodel::LossParams& loss, double f0_hz, const SweepSpec& spec,
                              std::uint64_t seed, bool per_trace = false);

struct FreqShiftSpec {
  std::vector<double> temperatures_k;  // empty: 20 points spaced linearly over 17 mK - 1 K
  double noise_fraction = 0.05;        // sigma as a fraction of the noiseless range
};

/// Shift referenced to the lowest temperature, which is kept noiseless.
freqshift::Dataset generate_freq_shift(const freqshift::Params& p, double f0_hz, const FreqShiftSpec& spec,
                                       std::uint64_t seed);

struct CampaignDevice {
  decomposition::DeviceGeometry geometry;
  lossmodel::LossParams loss;
  double f0_hz = 5e9;
  double alpha_kin = 1e-3;
  double q_c = 0.0;  // 0: use SweepSpec::q_c
};

struct CampaignSpec {
  std::vector<CampaignDevice> devices;
  SweepSpec sweep;
  FreqShiftSpec freq_shift;
  bool include_freq_shift = true;
  std::uint64_t seed = 1;
};

/// Surface loss tangents per treatment used by the default campaign.
std::map<decomposition::Treatment, double> default_surface_loss();

/// Devices per treatment with p_MS log-spaced over [p_lo, p_hi] and
/// Q_TLS0 = 1 / (p_MS tan_surface + L_bulk); other loss parameters shared and
/// Q_c matched to the low-power internal Q.
CampaignSpec default_campaign(std::uint64_t seed, int devices_per_treatment = 3,
                              const std::map<decomposition::Treatment, double>& tan_surface = default_surface_loss(),
                              double l_bulk = 1.5e-7, double p_lo = 1e-4, double p_hi = 3e-3);

struct Campaign {
  CampaignSpec spec;
  std::vector<GeneratedSweep> sweeps;          // one per device, per-trace mode
  std::vector<freqshift::Dataset> freq_shift;  // empty when not requested
};

Campaign generate_campaign(const CampaignSpec& spec, int jobs = 1);

/// Writes traces, frequency-shift curves, the device registry and the
/// generating parameters in the formats read by io::ingest.
void write_campaign(const Campaign& campaign, const std::filesystem::path& dir);

}  // namespace resloss::synth
