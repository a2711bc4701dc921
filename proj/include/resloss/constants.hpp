#pragma once

#include <numbers>

namespace resloss::constants {

// SI 2019 exact values.
inline constexpr double planck = 6.62607015e-34;            // J s
inline constexpr double hbar = planck / (2.0 * std::numbers::pi);
inline constexpr double boltzmann = 1.380649e-23;           // J / K
inline constexpr double speed_of_light = 299792458.0;       // m / s

// BCS weak-coupling gap ratio, Delta0 = 1.764 kB Tc.
inline constexpr double bcs_gap_ratio = 1.764;

inline constexpr double two_pi = 2.0 * std::numbers::pi;

/// hbar*omega / (2 kB T), the argument shared by the TLS and quasiparticle terms.
inline double half_photon_over_thermal(double omega, double temperature_k) {
  return hbar * omega / (2.0 * boltzmann * temperature_k);
}

/// Delta0 / (kB T).
inline double gap_over_thermal(double tc_k, double temperature_k) {
  return bcs_gap_ratio * tc_k / temperature_k;
}

}  // namespace resloss::constants
