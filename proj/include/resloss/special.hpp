#pragma once

// Special functions needed by the loss and frequency-shift models.
// All functions are pure and thread-safe.

namespace resloss::special {

/// Modified Bessel function of the second kind, order zero. Throws
/// Error(Domain) for x <= 0.
double bessel_k0(double x);

/// exp(x) * K0(x). Finite for every x > 0 (no underflow at large x).
double bessel_k0_scaled(double x);

/// Modified Bessel function of the first kind, order zero. Throws
/// Error(Overflow) once the result exceeds the double range (|x| ~ 713.9).
double bessel_i0(double x);

/// exp(-|x|) * I0(x). Finite for every finite x.
double bessel_i0_scaled(double x);

/// Re psi(1/2 + i y).
double digamma_real_part(double y);

/// Re psi(1/2 + i y) - ln|y|, evaluated without the cancellation that the
/// naive difference suffers for large |y|. Returns +inf at y = 0.
double digamma_real_part_minus_log(double y);

}  // namespace resloss::special
