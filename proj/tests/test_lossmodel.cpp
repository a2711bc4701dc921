#include <boost/math/special_functions/bessel.hpp>
#include <cmath>
#include <random>

#include "doctest.h"
#include "resloss/error.hpp"
#include "resloss/lossmodel.hpp"

using namespace resloss;
using namespace resloss::lossmodel;

namespace {

constexpr double kHbar = 1.054571817e-34;
constexpr double kKb = 1.380649e-23;
const double kOmega = 2.0 * M_PI * 5e9;

double xi(double t) { return kHbar * kOmega / (2.0 * kKb * t); }

// Direct evaluation with library Bessel functions, long double exponentials.
double q_qp_oracle(double q0, double tc, double t) {
  const long double x = xi(t);
  const long double gap = 1.764L * tc / t;
  return static_cast<double>(q0 * std::exp(gap) /
                             (std::sinh(x) * boost::math::cyl_bessel_k(0, static_cast<double>(x))));
}

LossParams reference() {
  LossParams p;
  p.q_tls0 = 6.97e5;
  p.d = 600.0;
  p.beta1 = 1.0;
  p.beta2 = 0.65;
  p.q_qp0 = 30.0;
  p.tc = 4.2;
  p.q_other = 3e7;
  return p;
}

const double kTemps[] = {0.017, 0.03, 0.05, 0.08, 0.12, 0.18, 0.25, 0.35, 0.5, 0.65, 0.8, 1.0};

SweepDataset grid(const LossParams& p, double noise, std::uint64_t seed, double t_max = 2.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  SweepDataset d;
  d.device = "dev";
  d.omega = kOmega;
  for (int k = 0; k < 6; ++k) {
    for (double t : kTemps) {
      if (t > t_max) continue;
      const double n = 70.0 * std::pow(10.0, k);
      const double q = q_int_model(p, n, t, kOmega);
      d.points.push_back({n, t, q * (1.0 + noise * normal(rng)), (noise > 0 ? noise : 0.01) * q, -60.0 + 10.0 * k});
    }
  }
  return d;
}

}  // namespace

TEST_CASE("TLS term limits and monotonicity") {
  LossParams p = reference();
  // n = 0 at hbar w / 2kT = 10
  const double t10 = kHbar * kOmega / (2.0 * kKb * 10.0);
  CHECK(q_tls(p, 0.0, t10, kOmega) == doctest::Approx(p.q_tls0 / std::tanh(10.0)).epsilon(1e-12));
  CHECK(std::abs(q_tls(p, 0.0, t10, kOmega) / p.q_tls0 - 1.0) < 1e-8);

  // saturation ratio of 3 with tanh term 1 doubles the TLS Q
  const double t_cold = kHbar * kOmega / (2.0 * kKb * 40.0);  // tanh(40) == 1
  p.beta1 = 1.0;
  p.beta2 = 0.5;
  const double nbar = std::pow(3.0 * p.d * std::pow(t_cold, p.beta1), 1.0 / p.beta2);
  CHECK(q_tls(p, nbar, t_cold, kOmega) == doctest::Approx(2.0 * p.q_tls0).epsilon(1e-12));

  p = reference();
  for (double t : kTemps) {
    double prev = q_tls(p, 0.0, t, kOmega);
    CHECK(prev == doctest::Approx(p.q_tls0 / std::tanh(xi(t))).epsilon(1e-9));
    for (int i = 1; i <= 1000; ++i) {
      const double n = std::pow(10.0, -2.0 + 10.0 * i / 1000.0);
      const double q = q_tls(p, n, t, kOmega);
      CHECK(q > prev);
      prev = q;
    }
  }
}

TEST_CASE("quasiparticle term against a library Bessel evaluation") {
  LossParams p = reference();
  p.tc = 4.3;
  const double ratio = q_qp(p, 0.5, kOmega) / q_qp(p, 1.0, kOmega);
  const double oracle = q_qp_oracle(p.q_qp0, 4.3, 0.5) / q_qp_oracle(p.q_qp0, 4.3, 1.0);
  CHECK(std::abs(ratio / oracle - 1.0) < 1e-9);
  for (double t : {0.05, 0.1, 0.2, 0.4, 0.8, 1.5})
    CHECK(std::abs(q_qp(p, t, kOmega) / q_qp_oracle(p.q_qp0, 4.3, t) - 1.0) < 1e-9);

  // exponential dominance between 50 mK and 500 mK for Tc = 4 K
  p.tc = 4.0;
  const double bound = 0.9 * 1.764 * 4.0 * (1.0 / 0.05 - 1.0 / 0.5);
  CHECK(std::log(q_qp(p, 0.05, kOmega)) - std::log(q_qp(p, 0.5, kOmega)) >= bound);

  // 1/Q_QP increases with T up to Tc/2
  double prev = 0.0;
  for (int i = 1; i <= 400; ++i) {
    const double t = 0.01 + (p.tc / 2.0 - 0.01) * i / 400.0;
    const double inv = inverse_q_qp(p, t, kOmega);
    CHECK(inv >= prev);
    prev = inv;
  }
}

TEST_CASE("no overflow over the operating range") {
  LossParams p = reference();
  for (double tc : {0.5, 2.0, 5.0})
    for (double f : {4e9, 6e9, 8e9})
      for (double t : {0.01, 0.012, 0.02, 0.05, 0.3}) {
        p.tc = tc;
        const double w = 2.0 * M_PI * f;
        CHECK(std::isfinite(q_qp(p, t, w)));
        CHECK(std::isfinite(q_int_model(p, 10.0, t, w)));
        CHECK(inverse_q_qp(p, t, w) >= 0.0);
      }
}

TEST_CASE("parallel channels") {
  // equal channels of 3e6 combine to 1e6
  LossParams p = reference();
  const double t = 0.1;
  p.q_tls0 = 1.0;
  const double tls = q_tls(p, 5.0, t, kOmega);
  p.q_tls0 = 3e6 / tls;
  p.q_qp0 = 3e6 / q_qp(LossParams{p.q_tls0, p.d, p.beta1, p.beta2, 1.0, p.tc, {}}, t, kOmega);
  p.q_other = 3e6;
  CHECK(q_int_model(p, 5.0, t, kOmega) == doctest::Approx(1e6).epsilon(1e-9));

  p = reference();
  p.q_other.reset();
  const double a = q_tls(p, 100.0, 0.3, kOmega), b = q_qp(p, 0.3, kOmega);
  CHECK(q_int_model(p, 100.0, 0.3, kOmega) == doctest::Approx(a * b / (a + b)).epsilon(1e-12));

  p = reference();
  for (double t : kTemps)
    for (double n : {1.0, 1e3, 1e6}) {
      const double qi = q_int_model(p, n, t, kOmega);
      CHECK(qi <= q_tls(p, n, t, kOmega));
      CHECK(qi <= q_qp(p, t, kOmega));
      CHECK(qi <= *p.q_other);
    }
}

TEST_CASE("high-temperature collapse when quasiparticles dominate") {
  LossParams p = reference();
  p.tc = 4.0;
  p.q_qp0 = 2.0;
  for (double t : {0.8, 0.9, 1.0}) {
    REQUIRE(q_qp(p, t, kOmega) < 0.05 * q_tls(p, 70.0, t, kOmega));
    const double lo = q_int_model(p, 70.0, t, kOmega);
    const double hi = q_int_model(p, 70.0e6, t, kOmega);
    CHECK(std::abs(hi / lo - 1.0) < 0.05);
  }
}

TEST_CASE("photon number calibration") {
  lineshape::Params ls{5e9, 5e5, 1e6, 0.0, 0.0};
  // P_in = -130 dBm after attenuation -> 1e-16 W
  const double hand = 2.0 * 5e5 * 5e5 * 1e-16 / (1e6 * kHbar * std::pow(2.0 * M_PI * 5e9, 2));
  CHECK(photon_number(-50.0, 80.0, ls) == doctest::Approx(hand).epsilon(1e-9));
  CHECK(photon_number(-50.0 + 10.0 * std::log10(2.0), 80.0, ls) ==
        doctest::Approx(2.0 * photon_number(-50.0, 80.0, ls)).epsilon(1e-12));
  double prev = photon_number(-50.0, 80.0, ls);
  for (double qc : {1e7, 1e9, 1e12, 1e15}) {
    const auto weak = lineshape::Params::from_q_int(5e9, 1e6, qc);
    const double n = photon_number(-50.0, 80.0, weak);
    CHECK(n < prev);
    prev = n;
  }
  CHECK(prev < 1e-5);
  CHECK_THROWS_AS(photon_number(-50.0, std::numeric_limits<double>::quiet_NaN(), ls), Error);
}

TEST_CASE("grid validation") {
  SweepDataset d = grid(reference(), 0.0, 1);
  CHECK_NOTHROW(validate(d));
  SweepDataset one_power = d;
  one_power.points.erase(std::remove_if(one_power.points.begin(), one_power.points.end(),
                                        [](const SweepPoint& p) { return p.nbar > 100.0; }),
                         one_power.points.end());
  try {
    validate(one_power);
    FAIL("single power accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InsufficientGrid);
  }
  SweepDataset bad = d;
  bad.points[3].q_int = -1.0;
  CHECK_THROWS_AS(validate(bad), Error);
}

TEST_CASE("noiseless round trip") {
  const LossParams truth = reference();
  const auto r = fit_sweep(grid(truth, 0.0, 1));
  CHECK(r.converged);
  CHECK(r.chi_square < 1e-8);
  REQUIRE(r.params.q_other);
  CHECK(std::abs(r.params.q_tls0 / truth.q_tls0 - 1.0) < 1e-4);
  CHECK(std::abs(r.params.d / truth.d - 1.0) < 1e-4);
  CHECK(std::abs(r.params.beta1 / truth.beta1 - 1.0) < 1e-4);
  CHECK(std::abs(r.params.beta2 / truth.beta2 - 1.0) < 1e-4);
  CHECK(std::abs(r.params.q_qp0 / truth.q_qp0 - 1.0) < 1e-4);
  CHECK(std::abs(r.params.tc / truth.tc - 1.0) < 1e-4);
  CHECK(std::abs(*r.params.q_other / *truth.q_other - 1.0) < 1e-4);
  CHECK(r.q_other_identified);
}

TEST_CASE("noisy recovery of the TLS scale") {
  const LossParams truth = reference();
  int within = 0;
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto r = fit_sweep(grid(truth, 0.03, 100 + s));
    if (std::abs(r.params.q_tls0 / truth.q_tls0 - 1.0) < 0.1) ++within;
  }
  CHECK(within >= 9);
}

TEST_CASE("residual channel identifiability") {
  LossParams plateau = reference();
  LossParams none = reference();
  none.q_other.reset();
  const auto with = fit_sweep(grid(plateau, 0.03, 5));
  CHECK(with.q_other_identified);
  CHECK(with.params.q_other.has_value());
  const auto without = fit_sweep(grid(none, 0.03, 5));
  CHECK_FALSE(without.q_other_identified);
  CHECK_FALSE(without.params.q_other.has_value());
  CHECK(std::any_of(without.diagnostics.begin(), without.diagnostics.end(),
                    [](const std::string& d) { return d.rfind("QOtherUnidentifiable", 0) == 0; }));
}

TEST_CASE("cold-only data leaves the quasiparticle pair unresolved") {
  LossParams truth = reference();
  truth.tc = 4.0;
  const auto r = fit_sweep(grid(truth, 0.03, 11, 0.3));
  CHECK((!r.qp_identified || r.tc_qp0_correlated));
  CHECK(std::abs(r.params.q_tls0 / truth.q_tls0 - 1.0) < 0.1);
}

TEST_CASE("correlation report") {
  LossFitResult base;
  base.params = reference();
  std::vector<LossFitResult> same(6, base);
  const auto flat = correlation_report(same);
  CHECK(flat.undefined);
  CHECK(std::isnan(flat.r(0, 1)));
  CHECK_THROWS_AS(correlation_report(std::vector<LossFitResult>(4, base)), Error);

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<LossFitResult> coupled;
  for (int i = 0; i < 40; ++i) {
    LossFitResult f = base;
    f.params.beta2 = 0.4 + 0.5 * u(rng);
    f.params.d = std::exp(10.0 * f.params.beta2 + 0.02 * normal(rng));
    f.params.q_tls0 = std::exp(13.0 + u(rng));
    f.params.beta1 = 0.5 + u(rng);
    f.params.q_qp0 = std::exp(3.0 + u(rng));
    f.params.tc = 3.0 + u(rng);
    f.params.q_other = std::exp(17.0 + u(rng));
    coupled.push_back(f);
  }
  const auto rep = correlation_report(coupled);
  bool d_beta2 = false;
  for (const auto& p : rep.flagged)
    if ((p.a == "ln_d" && p.b == "beta2") || (p.a == "beta2" && p.b == "ln_d")) d_beta2 = true;
  CHECK(d_beta2);
  CHECK(rep.flagged_reparameterized.empty());

  int clean = 0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    std::mt19937_64 g(1000 + s);
    std::vector<LossFitResult> indep;
    for (int i = 0; i < 30; ++i) {
      LossFitResult f = base;
      f.params.q_tls0 = std::exp(13.0 + u(g));
      f.params.d = std::exp(5.0 + u(g));
      f.params.beta1 = 0.5 + u(g);
      f.params.beta2 = 0.4 + 0.5 * u(g);
      f.params.q_qp0 = std::exp(3.0 + u(g));
      f.params.tc = 3.0 + u(g);
      f.params.q_other = std::exp(17.0 + u(g));
      indep.push_back(f);
    }
    if (correlation_report(indep).flagged.empty()) ++clean;
  }
  CHECK(clean >= 95);
}
