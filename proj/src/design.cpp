#include "resloss/design.hpp"

#include <cmath>
#include <numbers>

#include "resloss/error.hpp"

namespace resloss::design {

namespace {

double to_angular(double f, FrequencyConvention c) {
  return c == FrequencyConvention::Angular ? 2.0 * std::numbers::pi * f : f;
}

}  // namespace

void validate(const CpwDesign& d) {
  if (!(d.length_m > 0.0) || !std::isfinite(d.length_m))
    throw Error(ErrorCode::InvalidInput, "CPW length must be positive");
  if (!(d.eps_eff >= 1.0) || !std::isfinite(d.eps_eff))
    throw Error(ErrorCode::InvalidInput, "effective dielectric constant must be at least 1");
  if (!(d.velocity > 0.0) || !std::isfinite(d.velocity))
    throw Error(ErrorCode::InvalidInput, "propagation speed must be positive");
}

double cpw_f0(const CpwDesign& d) {
  validate(d);
  return d.velocity / (4.0 * d.length_m * std::sqrt(d.eps_eff));
}

double cpw_length(double f0_hz, double eps_eff, double velocity) {
  if (!(f0_hz > 0.0) || !(eps_eff >= 1.0) || !(velocity > 0.0))
    throw Error(ErrorCode::InvalidInput, "CPW length needs positive f0 and velocity and eps_eff >= 1");
  return velocity / (4.0 * f0_hz * std::sqrt(eps_eff));
}

double coupling_capacitance(double q_c, double f0_hz, double z0_ohm) {
  if (!(q_c > 0.0) || !(f0_hz > 0.0) || !(z0_ohm > 0.0))
    throw Error(ErrorCode::InvalidInput, "coupling capacitance needs positive Q_c, f0 and Z0");
  return std::sqrt(std::numbers::pi / (4.0 * q_c)) / (2.0 * std::numbers::pi * f0_hz * z0_ohm);
}

double lc_frequency(double inductance, double capacitance, FrequencyConvention convention) {
  if (!(inductance > 0.0) || !(capacitance > 0.0))
    throw Error(ErrorCode::InvalidInput, "LC frequency needs positive L and C");
  const double w = 1.0 / std::sqrt(inductance * capacitance);
  return convention == FrequencyConvention::Angular ? w / (2.0 * std::numbers::pi) : w;
}

LumpedExtraction extract_lumped(double c_load, double f_meander, double f_resonator,
                                FrequencyConvention convention) {
  if (!(c_load > 0.0) || !std::isfinite(c_load))
    throw Error(ErrorCode::InvalidInput, "pad capacitance must be positive");
  if (!(f_resonator > 0.0) || !(f_meander > f_resonator) || !std::isfinite(f_meander))
    throw Error(ErrorCode::InvalidInput, "need f_meander > f_resonator > 0");
  LumpedExtraction out;
  out.c_load = c_load;
  out.f_meander = f_meander;
  out.f_resonator = f_resonator;
  const double r = f_meander / f_resonator;
  out.c_stray = c_load / (r * r - 1.0);
  const double wm = to_angular(f_meander, convention);
  out.inductance = 1.0 / (wm * wm * out.c_stray);
  out.z0 = std::sqrt(out.inductance / (c_load + out.c_stray));
  out.f0 = lc_frequency(out.inductance, c_load + out.c_stray, convention);
  return out;
}

}  // namespace resloss::design
