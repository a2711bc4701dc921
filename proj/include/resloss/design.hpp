#pragma once

// Resonator design arithmetic: quarter-wave CPW frequency, feedline coupling
// capacitance, and lumped-element extraction from two simulated frequencies.

namespace resloss::design {

struct CpwDesign {
  double length_m = 0.0;
  double eps_eff = 1.0;
  double velocity = 299792458.0;  // m/s
  double z0_ohm = 50.0;
};

/// Throws Error(InvalidInput) unless length > 0, eps_eff >= 1 and velocity > 0.
void validate(const CpwDesign& d);

/// Quarter-wave resonance, Hz.
double cpw_f0(const CpwDesign& d);
/// Length giving the requested quarter-wave resonance, m.
double cpw_length(double f0_hz, double eps_eff, double velocity = 299792458.0);

/// Centre-pin to feedline capacitance, F, for the requested coupling Q.
double coupling_capacitance(double q_c, double f0_hz, double z0_ohm);

/// How a bare f = 1/sqrt(LC) relation is read.
enum class FrequencyConvention {
  Angular,  // omega = 1/sqrt(LC), f = omega / 2 pi
  Literal,  // f = 1/sqrt(LC) with no 2 pi
};

struct LumpedExtraction {
  double c_load = 0.0;    // pad capacitance C_L, F
  double f_meander = 0.0; // meander alone, Hz
  double f_resonator = 0.0;
  double c_stray = 0.0;   // C_S, F
  double inductance = 0.0;
  double z0 = 0.0;
  double f0 = 0.0;        // reconstructed resonator frequency, Hz
};

/// Throws Error(InvalidInput) unless f_meander > f_resonator > 0 and C_L > 0.
LumpedExtraction extract_lumped(double c_load, double f_meander, double f_resonator,
                                FrequencyConvention convention = FrequencyConvention::Angular);

/// Frequency of an LC pair under the given convention.
double lc_frequency(double inductance, double capacitance,
                    FrequencyConvention convention = FrequencyConvention::Angular);

}  // namespace resloss::design
