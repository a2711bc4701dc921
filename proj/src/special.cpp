#include "resloss/special.hpp"

#include <cmath>
#include <complex>
#include <limits>
#include <numbers>

#include "resloss/error.hpp"

namespace resloss::special {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

// Power series of I0 without the exponential factor; all terms positive.
double i0_series(double x) {
  const double q = 0.25 * x * x;
  double term = 1.0;
  double sum = 1.0;
  for (int k = 1; k < 500; ++k) {
    term *= q / (static_cast<double>(k) * k);
    sum += term;
    if (term < kEps * sum) break;
  }
  return sum;
}

// exp(-x) I0(x) for x > 30 from the Hankel asymptotic series.
double i0_scaled_asymptotic(double x) {
  double term = 1.0;
  double sum = 1.0;
  for (int k = 1; k < 200; ++k) {
    const double next = term * (2.0 * k - 1.0) * (2.0 * k - 1.0) / (8.0 * k * x);
    if (next > term) break;
    term = next;
    sum += term;
    if (term < 0.1 * kEps * sum) break;
  }
  return sum / std::sqrt(2.0 * std::numbers::pi * x);
}

// Series for small arguments: K0 = -(ln(x/2) + gamma) I0 + sum q^k/(k!)^2 H_k.
double k0_series(double x) {
  const double q = 0.25 * x * x;
  double term = 1.0;
  double harmonic = 0.0;
  double i0 = 1.0;
  double tail = 0.0;
  for (int k = 1; k < 200; ++k) {
    term *= q / (static_cast<double>(k) * k);
    harmonic += 1.0 / k;
    i0 += term;
    tail += term * harmonic;
    if (term * harmonic < kEps * std::abs(tail)) break;
  }
  return -(std::log(0.5 * x) + std::numbers::egamma) * i0 + tail;
}

// exp(x) K0(x) for x >= 2 from Steed's continued fraction (Temme's CF2).
double k0_scaled_continued_fraction(double x) {
  double b = 2.0 * (1.0 + x);
  double d = 1.0 / b;
  double h = d;
  double delh = d;
  double q1 = 0.0;
  double q2 = 1.0;
  const double a1 = 0.25;
  double q = a1;
  double c = a1;
  double a = -a1;
  double s = 1.0 + q * delh;
  for (int i = 2; i < 10000; ++i) {
    a -= 2.0 * (i - 1);
    c = -a * c / i;
    const double qnew = (q1 - b * q2) / a;
    q1 = q2;
    q2 = qnew;
    q += c * qnew;
    b += 2.0;
    d = 1.0 / (b + a * d);
    delh = (b * d - 1.0) * delh;
    h += delh;
    const double dels = q * delh;
    s += dels;
    if (std::abs(dels / s) < 0.5 * kEps) break;
  }
  return std::sqrt(std::numbers::pi / (2.0 * x)) / s;
}

constexpr double kSwitchK0 = 2.0;
constexpr double kSwitchI0 = 30.0;

// B_{2k} / (2k) for k = 1..10.
constexpr double kDigammaAsymptotic[] = {
    1.0 / 12.0,         -1.0 / 120.0,      1.0 / 252.0,        -1.0 / 240.0,
    1.0 / 132.0,        -691.0 / 32760.0,  1.0 / 12.0,         -3617.0 / 8160.0,
    43867.0 / 14364.0,  -174611.0 / 6600.0};

// psi(w) - ln(w) for |w| large.
std::complex<double> digamma_minus_log_asymptotic(std::complex<double> w) {
  const std::complex<double> inv = 1.0 / w;
  const std::complex<double> inv2 = inv * inv;
  std::complex<double> power = inv2;
  std::complex<double> sum = -0.5 * inv;
  for (double coeff : kDigammaAsymptotic) {
    sum -= coeff * power;
    power *= inv2;
  }
  return sum;
}

// psi(1/2 + i y) by upward recurrence followed by the asymptotic series.
std::complex<double> digamma_half_line(double y) {
  std::complex<double> z(0.5, y);
  std::complex<double> shift = 0.0;
  while (z.real() < 10.0) {
    shift += 1.0 / z;
    z += 1.0;
  }
  return std::log(z) + digamma_minus_log_asymptotic(z) - shift;
}

constexpr double kDirectAsymptoticY = 8.0;

}  // namespace

double bessel_k0(double x) {
  if (!(x > 0.0)) throw Error(ErrorCode::Domain, "bessel_k0: argument must be > 0");
  if (x <= kSwitchK0) return k0_series(x);
  return std::exp(-x) * k0_scaled_continued_fraction(x);
}

double bessel_k0_scaled(double x) {
  if (!(x > 0.0)) throw Error(ErrorCode::Domain, "bessel_k0_scaled: argument must be > 0");
  if (x <= kSwitchK0) return std::exp(x) * k0_series(x);
  return k0_scaled_continued_fraction(x);
}

double bessel_i0_scaled(double x) {
  if (!std::isfinite(x)) throw Error(ErrorCode::Domain, "bessel_i0_scaled: argument must be finite");
  const double ax = std::abs(x);
  if (ax <= kSwitchI0) return std::exp(-ax) * i0_series(ax);
  return i0_scaled_asymptotic(ax);
}

double bessel_i0(double x) {
  if (!std::isfinite(x)) throw Error(ErrorCode::Domain, "bessel_i0: argument must be finite");
  const double ax = std::abs(x);
  if (ax <= kSwitchI0) return i0_series(ax);
  const double log_value = ax + std::log(i0_scaled_asymptotic(ax));
  if (log_value >= std::log(std::numeric_limits<double>::max())) {
    throw Error(ErrorCode::Overflow, "bessel_i0: result overflows; use bessel_i0_scaled");
  }
  return std::exp(log_value);
}

double digamma_real_part(double y) {
  if (!std::isfinite(y)) throw Error(ErrorCode::Domain, "digamma_real_part: argument must be finite");
  const double ay = std::abs(y);
  if (ay >= kDirectAsymptoticY) {
    const std::complex<double> w(0.5, ay);
    return (std::log(w) + digamma_minus_log_asymptotic(w)).real();
  }
  return digamma_half_line(ay).real();
}

double digamma_real_part_minus_log(double y) {
  if (!std::isfinite(y)) {
    throw Error(ErrorCode::Domain, "digamma_real_part_minus_log: argument must be finite");
  }
  const double ay = std::abs(y);
  if (ay == 0.0) return std::numeric_limits<double>::infinity();
  if (ay >= kDirectAsymptoticY) {
    // Re ln(1/2 + i y) - ln y = ln(1 + 1/(4 y^2)) / 2
    const std::complex<double> w(0.5, ay);
    return digamma_minus_log_asymptotic(w).real() + 0.5 * std::log1p(0.25 / (ay * ay));
  }
  return digamma_half_line(ay).real() - std::log(ay);
}

}  // namespace resloss::special
