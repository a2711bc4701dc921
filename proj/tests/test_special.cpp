#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <chrono>
#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "resloss/error.hpp"
#include "resloss/special.hpp"

using namespace resloss;
using namespace resloss::special;

namespace {

struct Ref {
  double x;
  double value;
};

// Tables produced by tests/oracles/special_values.py (40-digit arithmetic).
const Ref kK0[] = {
    {0.001, 7.0236888005623813436},
    {0.01, 4.7212447301610949651},
    {0.1, 2.4270690247020166125},
    {0.5, 0.92441907122766586178},
    {1.0, 0.42102443824070833334},
    {1.9, 0.12884597927604747986},
    {2.0, 0.11389387274953343565},
    {2.1, 0.10078374088996694581},
    {5.0, 0.0036910983340425942747},
    {10.0, 0.000017780062316167651811},
    {20.0, 5.7412378153365242927e-10},
    {50.0, 3.4101677497894955139e-23},
};
const Ref kK0Scaled[] = {
    {0.001, 7.0307160023782515185},
    {1.0, 1.1444630798068950147},
    {10.0, 0.39163193443659866573},
    {50.0, 0.17680715585742933811},
    {200.0, 0.088567458339296658234},
    {700.0, 0.047362369454613572112},
    {1000.0, 0.039628321600754217115},
};
const Ref kI0[] = {
    {0.0, 1.0},
    {0.5, 1.0634833707413235193},
    {1.0, 1.2660658777520083356},
    {3.0, 4.8807925858650240856},
    {7.5, 268.16131151518936488},
    {10.0, 2815.7166284662544715},
    {15.0, 339649.37329791387952},
    {20.0, 43558282.559553533272},
    {40.0, 14894774793419899.924},
    {100.0, 1.0737517071310738235e+42},
    {700.0, 1.5295933476718737363e+302},
};
const Ref kI0Scaled[] = {
    {1.0, 0.4657596075936404365},
    {20.0, 0.089780311884826021596},
    {40.0, 0.063278279875235330262},
    {100.0, 0.039944379299096682648},
    {1000.0, 0.012617240455891256586},
    {100000.0, 0.0012615678379767767669},
};
const Ref kPsi[] = {
    {0.0, -1.9635100260214234794},
    {0.01, -1.9626689075088066818},
    {0.1, -1.8824573818216239553},
    {0.5, -0.86810736264547731395},
    {1.0, -0.051761650994412542793},
    {2.0, 0.68218669934942426814},
    {5.0, 1.6077593216071878661},
    {10.0, 2.3021676932743471136},
    {30.0, 3.4011510763585218379},
    {100.0, 4.60516601924850419},
};
const Ref kPsiMinusLog[] = {
    {0.05, 1.0530593197253927211},
    {0.5, -0.17496018208553200453},
    {1.0, -0.051761650994412542793},
    {3.0, -0.0047257569892656516419},
    {10.0, -0.00041739971969857043415},
    {100.0, -4.1667395871779928522e-6},
    {10000.0, -4.1666666739583333718e-10},
};

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

// exp(x) K0(x) = int_0^inf exp(-x (cosh t - 1)) dt
double k0_scaled_quadrature(double x) {
  boost::math::quadrature::exp_sinh<double> integrator;
  return integrator.integrate([x](double t) {
    return std::exp(-x * 2.0 * std::sinh(0.5 * t) * std::sinh(0.5 * t));
  });
}

// exp(-x) I0(x) = (1/pi) int_0^pi exp(x (cos th - 1)) dth
double i0_scaled_quadrature(double x) {
  auto f = [x](double th) {
    return std::exp(-x * 2.0 * std::sin(0.5 * th) * std::sin(0.5 * th));
  };
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, 0.0, std::numbers::pi, 20,
                                                                      1e-15) /
         std::numbers::pi;
}

// psi(1/2 + iy) = -gamma + sum_n [1/(n+1) - (n+1/2)/((n+1/2)^2 + y^2)], with an
// integral-plus-midpoint tail after N terms.
double psi_series(double y) {
  const long n_terms = 200000;
  long double sum = 0.0L;
  const long double y2 = static_cast<long double>(y) * y;
  auto term = [y2](long double n) {
    const long double h = n + 0.5L;
    return 1.0L / (n + 1.0L) - h / (h * h + y2);
  };
  for (long n = n_terms - 1; n >= 0; --n) sum += term(static_cast<long double>(n));
  const long double nn = n_terms;
  // Euler-Maclaurin: int_N^inf f + f(N)/2 - f'(N)/12
  const long double h = nn + 0.5L;
  const long double integral = 0.5L * std::log(h * h + y2) - std::log(nn + 1.0L);
  const long double eps = 1e-3L;
  const long double deriv = (term(nn + eps) - term(nn - eps)) / (2.0L * eps);
  sum += integral + 0.5L * term(nn) - deriv / 12.0L;
  return static_cast<double>(sum - 0.57721566490153286060651209L);
}

}  // namespace

TEST_CASE("K0 matches extended-precision references") {
  for (const auto& r : kK0) CHECK(rel(bessel_k0(r.x), r.value) < 1e-12);
  for (const auto& r : kK0Scaled) CHECK(rel(bessel_k0_scaled(r.x), r.value) < 1e-12);
  CHECK(bessel_k0(1.0) == doctest::Approx(0.4210244382).epsilon(1e-10));
  CHECK(rel(bessel_k0(10.0), 1.778e-5) < 1e-3);
}

TEST_CASE("K0 matches its integral representation over [1e-3, 50]") {
  for (double lx = -3.0; lx <= std::log10(50.0); lx += 0.05) {
    const double x = std::pow(10.0, lx);
    CHECK(rel(bessel_k0_scaled(x), k0_scaled_quadrature(x)) < 1e-9);
  }
}

TEST_CASE("K0 asymptote and scaled/unscaled agreement") {
  const double big = 1e6;
  CHECK(bessel_k0_scaled(big) * std::sqrt(big) == doctest::Approx(std::sqrt(std::numbers::pi / 2.0)).epsilon(1e-6));
  for (double x = 0.01; x < 600.0; x *= 1.3) {
    CHECK(rel(bessel_k0(x) * std::exp(x), bessel_k0_scaled(x)) < 1e-12);
  }
}

TEST_CASE("K0 rejects non-positive arguments") {
  CHECK_THROWS_AS(bessel_k0(0.0), Error);
  CHECK_THROWS_AS(bessel_k0(-1.0), Error);
  CHECK_THROWS_AS(bessel_k0_scaled(0.0), Error);
  try {
    bessel_k0(-2.0);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Domain);
  }
}

TEST_CASE("I0 matches references, quadrature and symmetry") {
  for (const auto& r : kI0) CHECK(rel(bessel_i0(r.x), r.value) < 1e-12);
  for (const auto& r : kI0Scaled) CHECK(rel(bessel_i0_scaled(r.x), r.value) < 1e-12);
  CHECK(bessel_i0(0.0) == 1.0);
  CHECK(bessel_i0(1.0) == doctest::Approx(1.2660658778).epsilon(1e-10));
  CHECK(bessel_i0(-1.0) == bessel_i0(1.0));
  for (double x = 0.0; x < 200.0; x += 0.37) {
    CHECK(rel(bessel_i0_scaled(x), i0_scaled_quadrature(x)) < 1e-9);
    CHECK(bessel_i0_scaled(-x) == bessel_i0_scaled(x));
  }
  for (double x = 0.1; x < 700.0; x *= 1.25) {
    CHECK(rel(bessel_i0(x) * std::exp(-x), bessel_i0_scaled(x)) < 1e-12);
  }
}

TEST_CASE("I0 overflow is reported for the unscaled variant only") {
  CHECK_THROWS_AS(bessel_i0(720.0), Error);
  try {
    bessel_i0(-800.0);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Overflow);
  }
  CHECK(std::isfinite(bessel_i0_scaled(1e8)));
}

TEST_CASE("Re digamma on the half line") {
  for (const auto& r : kPsi) CHECK(rel(digamma_real_part(r.x), r.value) < 1e-12);
  for (const auto& r : kPsiMinusLog) CHECK(rel(digamma_real_part_minus_log(r.x), r.value) < 1e-10);
  CHECK(digamma_real_part(0.0) == doctest::Approx(-std::numbers::egamma - 2.0 * std::log(2.0)).epsilon(1e-14));
  for (double y = -40.0; y <= 40.0; y += 0.73) {
    CHECK(digamma_real_part(y) == digamma_real_part(-y));
  }
  CHECK(std::abs(digamma_real_part_minus_log(1e8)) < 1e-16);
  CHECK(std::isinf(digamma_real_part_minus_log(0.0)));
}

TEST_CASE("Re digamma matches the partial-fraction series") {
  for (double y : {0.0, 0.03, 0.2, 0.7, 1.0, 2.5, 7.9, 8.1, 15.0, 60.0}) {
    CHECK(std::abs(digamma_real_part(y) - psi_series(y)) < 1e-9 * std::max(1.0, std::abs(psi_series(y))));
  }
}

TEST_CASE("special functions are fast") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-3.0, 2.7);
  const auto start = std::chrono::steady_clock::now();
  double sink = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const double x = std::pow(10.0, u(rng));
    sink += bessel_k0_scaled(x) + bessel_i0_scaled(x) + digamma_real_part(x);
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  CHECK(std::isfinite(sink));
  CHECK(secs < 1.0);
}
