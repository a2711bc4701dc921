#include <cmath>
#include <random>

#include "doctest.h"
#include "resloss/error.hpp"
#include "resloss/lineshape.hpp"

using namespace resloss;
using namespace resloss::lineshape;

namespace {

// Independent evaluation of the magnitude model with plain arithmetic.
double model_by_hand(double f0, double qt, double qc, double a, double b, double f) {
  const double ratio = qt / qc;
  const double y = 2.0 * qt * (f - f0) / f0;
  // 1 - ratio (1 - 2ia)/(1 + iy) = [(1 + iy) - ratio + 2i a ratio] / (1 + iy)
  const double re = 1.0 - ratio;
  const double im = y + 2.0 * a * ratio;
  return std::sqrt((re * re + im * im) / (1.0 + y * y)) + b;
}

Trace make_trace(const Params& p, double sigma, std::uint64_t seed, double span_lw = 5.0,
                 int points = 201) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  Trace t;
  const double lw = p.linewidth();
  for (int i = 0; i < points; ++i) {
    const double f = p.f0 + span_lw * lw * (static_cast<double>(i) / (points - 1) - 0.5);
    t.freq_hz.push_back(f);
    t.s21_mag.push_back(s21_model(p, f) + sigma * noise(rng));
  }
  return t;
}

}  // namespace

TEST_CASE("model limits") {
  const Params p = Params::from_q_int(5e9, 3e5, 1e5);
  CHECK(s21_model(p, p.f0) == doctest::Approx(1.0 - p.q_tot / p.q_c).epsilon(1e-15));
  const Params crit = Params::from_q_int(5e9, 2e5, 2e5);
  CHECK(s21_model(crit, crit.f0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(std::abs(s21_model(p, p.f0 + 100.0 * p.linewidth()) - 1.0) < 1e-3);
  CHECK(std::abs(s21_model(p, p.f0 - 100.0 * p.linewidth()) - 1.0) < 1e-3);
}

TEST_CASE("model agrees with a hand evaluation") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 200; ++k) {
    const Params p = Params::from_q_int(4e9 + 4e9 * u(rng), std::pow(10.0, 4 + 3 * u(rng)),
                                        std::pow(10.0, 4 + 3 * u(rng)), 0.4 * u(rng) - 0.2,
                                        0.1 * u(rng) - 0.05);
    const double f = p.f0 + (6.0 * u(rng) - 3.0) * p.linewidth();
    CHECK(s21_model(p, f) == doctest::Approx(model_by_hand(p.f0, p.q_tot, p.q_c, p.asymmetry, p.baseline, f)).epsilon(1e-13));
  }
}

TEST_CASE("baseline is additive and the zero-asymmetry shape is symmetric") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 200; ++k) {
    Params p = Params::from_q_int(5e9, std::pow(10.0, 4 + 3 * u(rng)), std::pow(10.0, 4 + 3 * u(rng)),
                                  0.4 * u(rng) - 0.2, 0.0);
    const double f = p.f0 + (8.0 * u(rng) - 4.0) * p.linewidth();
    const double b = u(rng) - 0.5;
    Params pb = p;
    pb.baseline = b;
    CHECK(s21_model(pb, f) == doctest::Approx(s21_model(p, f) + b).epsilon(1e-15));
    p.asymmetry = 0.0;
    const double d = (u(rng) * 5.0) * p.linewidth();
    CHECK(std::abs(s21_model(p, p.f0 + d) - s21_model(p, p.f0 - d)) <= 1e-12);
  }
}

TEST_CASE("analytic gradient matches central differences") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 10; ++k) {
    const double qi = std::pow(10.0, 4 + 3 * u(rng));
    const double qc = std::pow(10.0, 4 + 3 * u(rng));
    const double a = 0.4 * u(rng) - 0.2;
    const double b = 0.1 * u(rng);
    const double f0 = 5e9;
    const Params p = Params::from_q_int(f0, qi, qc, a, b);
    const double f = f0 + (4.0 * u(rng) - 2.0) * p.linewidth();
    double g[5];
    s21_gradient(p, f, g);
    const double x[5] = {f0, qi, qc, a, b};
    for (int c = 0; c < 5; ++c) {
      // Richardson-extrapolated central difference
      auto central = [&](double h) {
        double xp[5], xm[5];
        std::copy(x, x + 5, xp);
        std::copy(x, x + 5, xm);
        xp[c] += h;
        xm[c] -= h;
        return (s21_model(Params::from_q_int(xp[0], xp[1], xp[2], xp[3], xp[4]), f) -
                s21_model(Params::from_q_int(xm[0], xm[1], xm[2], xm[3], xm[4]), f)) /
               (2.0 * h);
      };
      const double h = c == kF0 ? 1e-3 * p.linewidth() : 1e-4 * std::max(std::abs(x[c]), 1e-2);
      const double fd = (4.0 * central(0.5 * h) - central(h)) / 3.0;
      const double scale = std::max(std::abs(fd), 1e-8 / std::max(std::abs(x[c]), 1e-3));
      INFO("column " << c << " analytic " << g[c] << " fd " << fd);
      CHECK(std::abs(g[c] - fd) <= 1e-6 * scale);
    }
  }
}

TEST_CASE("noiseless trace recovers all five parameters") {
  const Params truth = Params::from_q_int(4.484501e9, 4.2e5, 1.7e5, 0.07, 0.015);
  const auto fit = fit_trace(make_trace(truth, 0.0, 1));
  CHECK(fit.params.f0 == doctest::Approx(truth.f0).epsilon(1e-12));
  CHECK(fit.q_int == doctest::Approx(4.2e5).epsilon(1e-8));
  CHECK(fit.params.q_c == doctest::Approx(1.7e5).epsilon(1e-8));
  CHECK(fit.params.asymmetry == doctest::Approx(0.07).epsilon(1e-8));
  CHECK(fit.params.baseline == doctest::Approx(0.015).epsilon(1e-8));
  CHECK(fit.params.q_tot <= fit.params.q_c);
}

TEST_CASE("center frequency of a noisy 4.484501 GHz trace") {
  const Params truth = Params::from_q_int(4.484501e9, 6e5, 2e5, 0.0, 0.0);
  const auto fit = fit_trace(make_trace(truth, 0.01, 2));
  CHECK(std::abs(fit.params.f0 - truth.f0) < truth.linewidth() / 100.0);
}

TEST_CASE("1% noise: parameters within 3 sigma of the reported covariance") {
  const Params truth = Params::from_q_int(5.2e9, 3e5, 2e5, -0.05, 0.0);
  const auto fit = fit_trace(make_trace(truth, 0.01, 3));
  CHECK(fit.sigma_estimated);
  CHECK(fit.noise_sigma == doctest::Approx(0.01).epsilon(0.2));
  const double est[5] = {fit.params.f0, fit.q_int, fit.params.q_c, fit.params.asymmetry, fit.params.baseline};
  const double tru[5] = {truth.f0, 3e5, 2e5, -0.05, 0.0};
  for (int c = 0; c < 5; ++c) CHECK(std::abs(est[c] - tru[c]) < 3.0 * std::sqrt(fit.covariance(c, c)));
}

TEST_CASE("40 dB SNR, Q_int/Q_c = 3: Q_int within 5%") {
  int good = 0;
  const int n = 200;
  for (int s = 0; s < n; ++s) {
    const Params truth = Params::from_q_int(5e9, 3e5, 1e5, 0.1, 0.0);
    const auto fit = fit_trace(make_trace(truth, 0.01, 100 + static_cast<std::uint64_t>(s)));
    if (std::abs(fit.q_int / 3e5 - 1.0) < 0.05) ++good;
  }
  CHECK(good >= 0.95 * n);
}

TEST_CASE("shifting the whole trace moves f0 and keeps the shape") {
  const Params truth = Params::from_q_int(5e9, 3e5, 1e5, 0.08, 0.01);
  const Trace t = make_trace(truth, 0.002, 4);
  const double delta = 1.234567e6;
  Trace shifted = t;
  for (auto& f : shifted.freq_hz) f += delta;
  const auto a = fit_trace(t);
  const auto b = fit_trace(shifted);
  CHECK(b.params.f0 - a.params.f0 == doctest::Approx(delta).epsilon(1e-6));
  CHECK(b.params.linewidth() == doctest::Approx(a.params.linewidth()).epsilon(1e-8));
  CHECK(b.params.q_tot / b.params.q_c == doctest::Approx(a.params.q_tot / a.params.q_c).epsilon(1e-8));
  CHECK(b.params.asymmetry == doctest::Approx(a.params.asymmetry).epsilon(1e-8));
  CHECK(b.params.baseline == doctest::Approx(a.params.baseline).epsilon(1e-8));
}

TEST_CASE("fitted Q_tot never exceeds Q_c") {
  for (std::uint64_t s = 0; s < 30; ++s) {
    const Params truth = Params::from_q_int(5e9, 1e4 * (1 + s), 2e5, 0.0, 0.0);
    const auto fit = fit_trace(make_trace(truth, 0.005, s));
    CHECK(fit.params.q_tot <= fit.params.q_c);
    CHECK(fit.q_int > 0.0);
  }
}

TEST_CASE("traces without a dip and malformed traces are rejected") {
  Trace flat;
  for (int i = 0; i < 50; ++i) {
    flat.freq_hz.push_back(5e9 + i * 1e3);
    flat.s21_mag.push_back(1.0);
  }
  try {
    fit_trace(flat);
    FAIL("expected NoDipFound");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NoDipFound);
  }
  Trace short_trace = flat;
  short_trace.freq_hz.resize(5);
  short_trace.s21_mag.resize(5);
  CHECK_THROWS_AS(validate(short_trace), Error);
  Trace unordered = flat;
  std::swap(unordered.freq_hz[3], unordered.freq_hz[4]);
  CHECK_THROWS_AS(validate(unordered), Error);
  Trace negative = flat;
  negative.s21_mag[2] = -0.1;
  CHECK_THROWS_AS(validate(negative), Error);
}

TEST_CASE("nonlinearity screening") {
  const Params truth = Params::from_q_int(5e9, 3e5, 1e5, 0.0, 0.0);
  const Trace clean = make_trace(truth, 0.0, 1);
  CHECK_FALSE(detect_nonlinearity(clean, fit_trace(clean).params).flagged);

  // Frequency-pulled dip: the upper half sees a resonance half a linewidth higher.
  Trace fin = clean;
  Params pulled = truth;
  pulled.f0 += 0.5 * truth.linewidth();
  for (std::size_t i = 0; i < fin.freq_hz.size(); ++i) {
    if (fin.freq_hz[i] > truth.f0) fin.s21_mag[i] = s21_model(pulled, fin.freq_hz[i]);
  }
  const auto rep = detect_nonlinearity(fin, fit_trace(fin).params);
  CHECK(rep.flagged);
  CHECK(rep.residual_score > 5.0);

  int flagged = 0;
  const double sigma_30db = std::pow(10.0, -30.0 / 20.0);
  for (std::uint64_t s = 0; s < 100; ++s) {
    const Trace noisy = make_trace(truth, sigma_30db, 1000 + s);
    if (detect_nonlinearity(noisy, fit_trace(noisy).params).flagged) ++flagged;
  }
  CHECK(flagged < 5);
}

TEST_CASE("Qc constancy report") {
  const auto same = qc_constancy({2e5, 2e5, 2e5, 2e5});
  CHECK(same.cv == 0.0);
  CHECK_FALSE(same.warn);
  const auto spread = qc_constancy({1e5, 1e5, 3e5});
  CHECK(spread.cv == doctest::Approx(0.565685).epsilon(1e-5));
  CHECK(spread.warn);
  CHECK(spread.mean == doctest::Approx(5e5 / 3.0));
  CHECK_THROWS_AS(qc_constancy({1e5, 2e5}), Error);

  // fitted sweep whose true Qc scatters by 5%
  std::mt19937_64 rng(17);
  std::normal_distribution<double> scatter(0.0, 0.05);
  std::vector<double> fitted;
  for (std::uint64_t s = 0; s < 12; ++s) {
    const Params truth = Params::from_q_int(5e9, 2e5 + 2e4 * static_cast<double>(s), 1e5 * (1.0 + scatter(rng)));
    fitted.push_back(fit_trace(make_trace(truth, 0.005, s)).params.q_c);
  }
  CHECK_FALSE(qc_constancy(fitted).warn);
}
