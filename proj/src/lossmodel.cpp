#include "resloss/lossmodel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <set>

#include "resloss/constants.hpp"
#include "resloss/error.hpp"
#include "resloss/nlls.hpp"
#include "resloss/special.hpp"

namespace resloss::lossmodel {

namespace {

using constants::gap_over_thermal;
using constants::half_photon_over_thermal;

const double kLogMax = std::log(std::numeric_limits<double>::max());

// ln of e^(D0/kT) / (sinh xi K0(xi)), using sinh(xi) K0(xi) = (1 - e^-2xi)/2 * e^xi K0(xi).
double log_qp_factor(double tc, double temperature_k, double omega) {
  const double xi = half_photon_over_thermal(omega, temperature_k);
  const double sinh_k0 = -0.5 * std::expm1(-2.0 * xi) * special::bessel_k0_scaled(xi);
  return gap_over_thermal(tc, temperature_k) - std::log(sinh_k0);
}

struct Layout {
  bool qp = true;
  bool other = true;
  std::optional<double> fixed_tc;  // profile mode: Tc held, not fitted

  std::vector<int> present() const {
    std::vector<int> idx{kQTls0, kD, kBeta1, kBeta2};
    if (qp) {
      idx.push_back(kQQp0);
      if (!fixed_tc) idx.push_back(kTc);
    }
    if (other) idx.push_back(kQOther);
    return idx;
  }
  int size() const { return static_cast<int>(present().size()); }
  // position of a ParamIndex within the solver vector, or -1
  int slot(int index) const {
    const auto idx = present();
    const auto it = std::find(idx.begin(), idx.end(), index);
    return it == idx.end() ? -1 : static_cast<int>(it - idx.begin());
  }
};

LossParams unpack(const Eigen::VectorXd& v, const Layout& layout) {
  LossParams p;
  p.q_tls0 = v[0];
  p.d = v[1];
  p.beta1 = v[2];
  p.beta2 = v[3];
  if (layout.qp) {
    p.q_qp0 = v[4];
    p.tc = layout.fixed_tc ? *layout.fixed_tc : v[5];
  } else {
    p.q_qp0 = std::numeric_limits<double>::infinity();
  }
  if (layout.other) p.q_other = v[layout.slot(kQOther)];
  return p;
}

Eigen::VectorXd pack(const LossParams& p, const Layout& layout) {
  Eigen::VectorXd v(layout.size());
  v[0] = p.q_tls0;
  v[1] = p.d;
  v[2] = p.beta1;
  v[3] = p.beta2;
  if (layout.qp) {
    v[4] = p.q_qp0;
    if (!layout.fixed_tc) v[5] = p.tc;
  }
  if (layout.other) v[layout.slot(kQOther)] = p.q_other.value_or(1e9);
  return v;
}

nlls::Problem make_problem(const SweepDataset& data, const Layout& layout, const SweepFitOptions& o) {
  nlls::Problem prob;
  const auto m = static_cast<Eigen::Index>(data.points.size());
  prob.n_residuals = m;
  prob.weights.resize(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto& pt = data.points[static_cast<std::size_t>(i)];
    prob.weights[i] = pt.q_int / pt.q_int_sigma;
  }
  prob.parameters = {
      {"q_tls0", 1e6, o.q_lower, o.q_upper, nlls::Scale::Log},
      {"d", 1e3, o.d_lower, o.d_upper, nlls::Scale::Log},
      {"beta1", 1.0, o.beta1_lower, o.beta1_upper, nlls::Scale::Linear},
      {"beta2", 0.6, o.beta2_lower, o.beta2_upper, nlls::Scale::Linear},
  };
  if (layout.qp) {
    prob.parameters.push_back({"q_qp0", 50.0, o.q_qp0_lower, o.q_qp0_upper, nlls::Scale::Log});
    if (!layout.fixed_tc) prob.parameters.push_back({"tc", 4.0, o.tc_lower, o.tc_upper, nlls::Scale::Linear});
  }
  if (layout.other) prob.parameters.push_back({"q_other", 1e9, o.q_lower, o.q_upper, nlls::Scale::Log});
  const double omega = data.omega;
  prob.residual = [&data, layout, omega](const Eigen::VectorXd& v, Eigen::VectorXd& r) {
    const LossParams p = unpack(v, layout);
    for (std::size_t i = 0; i < data.points.size(); ++i) {
      const auto& pt = data.points[i];
      const double model = q_int_model(p, pt.nbar, pt.temperature_k, omega);
      r[static_cast<Eigen::Index>(i)] = std::log(model) - std::log(pt.q_int);
    }
  };
  return prob;
}

std::vector<double> distinct(std::vector<double> v, double rel) {
  std::sort(v.begin(), v.end());
  std::vector<double> out;
  for (double x : v) {
    if (out.empty() || std::abs(x - out.back()) > rel * std::max(std::abs(x), 1e-300)) out.push_back(x);
  }
  return out;
}

// Deterministic starting points: a data-driven guess for the TLS part and a
// spread of gap temperatures, each with Q_QP0 matched to the hottest data.
std::vector<LossParams> starting_points(const SweepDataset& data, const Layout& layout,
                                        const SweepFitOptions& o) {
  const double omega = data.omega;
  double t_min = std::numeric_limits<double>::infinity();
  double t_max = 0.0;
  for (const auto& pt : data.points) {
    t_min = std::min(t_min, pt.temperature_k);
    t_max = std::max(t_max, pt.temperature_k);
  }
  const SweepPoint* low = nullptr;
  const SweepPoint* high = nullptr;
  double q_max = 0.0;
  for (const auto& pt : data.points) {
    q_max = std::max(q_max, pt.q_int);
    if (pt.temperature_k > t_min * (1.0 + 1e-6)) continue;
    if (!low || pt.nbar < low->nbar) low = &pt;
    if (!high || pt.nbar > high->nbar) high = &pt;
  }
  const double th_min = std::tanh(half_photon_over_thermal(omega, t_min));
  LossParams base;
  base.q_tls0 = std::clamp(low->q_int * th_min, o.q_lower * 1.01, o.q_upper * 0.99);
  base.beta1 = 1.0;
  base.beta2 = 0.6;
  const double ratio = std::max(high->q_int / low->q_int, 1.5);
  base.d = std::clamp(std::pow(std::max(high->nbar, 1.0), base.beta2) * th_min /
                          (std::pow(t_min, base.beta1) * (ratio * ratio - 1.0)),
                      o.d_lower * 10.0, o.d_upper / 10.0);
  if (layout.other) base.q_other = std::clamp(3.0 * q_max, o.q_lower * 1.01, o.q_upper * 0.99);

  // loss still unexplained by the TLS guess at the hottest temperature
  double hot_loss = 0.0;
  for (const auto& pt : data.points) {
    if (pt.temperature_k < t_max * (1.0 - 1e-6)) continue;
    LossParams tls_only = base;
    tls_only.q_other.reset();
    const double residual =
        1.0 / pt.q_int - 1.0 / q_tls(tls_only, pt.nbar, pt.temperature_k, omega);
    hot_loss = std::max(hot_loss, residual);
  }
  double q_hot = std::numeric_limits<double>::infinity();
  for (const auto& pt : data.points) q_hot = std::min(q_hot, pt.q_int);
  hot_loss = std::max(hot_loss, 0.1 / q_hot);

  std::mt19937_64 rng(o.seed);
  std::uniform_real_distribution<double> jitter(-1.0, 1.0);
  const double tc_grid[] = {4.0, 2.0, 1.0, 3.0, 5.0, 1.5, 2.5, 3.5, 4.5, 0.7};
  std::vector<LossParams> starts;
  const int count = std::max(1, o.starts);
  for (int k = 0; k < count; ++k) {
    LossParams p = base;
    if (k > 0) {
      // log-uniform jitter of up to a factor ~3 on the scale parameters
      p.q_tls0 = std::clamp(p.q_tls0 * std::exp(0.5 * jitter(rng)), o.q_lower * 1.01, o.q_upper * 0.99);
      p.d = std::clamp(p.d * std::exp(1.1 * jitter(rng)), o.d_lower * 10.0, o.d_upper / 10.0);
      p.beta1 = std::clamp(1.0 + 0.5 * jitter(rng), o.beta1_lower, o.beta1_upper);
      p.beta2 = std::clamp(0.6 + 0.3 * jitter(rng), o.beta2_lower * 1.1, o.beta2_upper);
      if (p.q_other) p.q_other = std::clamp(*p.q_other * std::exp(1.1 * jitter(rng)), o.q_lower * 1.01, o.q_upper * 0.99);
    }
    p.tc = layout.fixed_tc ? *layout.fixed_tc : std::clamp(tc_grid[k % 10], o.tc_lower * 1.01, o.tc_upper * 0.99);
    if (layout.qp) {
      const double lf = log_qp_factor(p.tc, t_max, omega);
      p.q_qp0 = std::clamp(std::exp(-std::log(hot_loss) - lf), o.q_qp0_lower * 1.01, o.q_qp0_upper * 0.99);
    }
    starts.push_back(p);
  }
  return starts;
}

struct VariantFit {
  Layout layout;
  nlls::FitOutcome outcome;
  LossParams params;
};

VariantFit fit_variant(const SweepDataset& data, const Layout& layout, const SweepFitOptions& o,
                       const std::vector<LossParams>& extra_starts) {
  nlls::Problem prob = make_problem(data, layout, o);
  std::vector<Eigen::VectorXd> starts;
  for (const auto& p : starting_points(data, layout, o)) starts.push_back(pack(p, layout));
  for (auto p : extra_starts) {
    if (layout.other && !p.q_other) p.q_other = o.q_upper * 0.5;
    starts.push_back(pack(p, layout));
  }
  nlls::Options opts;
  opts.max_iterations = o.max_iterations;
  opts.cost_tolerance = o.cost_tolerance;
  VariantFit vf{layout, nlls::fit_multistart(prob, starts, opts), {}};
  vf.params = unpack(vf.outcome.params, layout);
  return vf;
}

}  // namespace

const char* param_name(int index) {
  static const char* names[] = {"q_tls0", "d", "beta1", "beta2", "q_qp0", "tc", "q_other"};
  return (index >= 0 && index < kNumParams) ? names[index] : "?";
}

double q_tls(const LossParams& p, double nbar, double temperature_k, double omega) {
  const double th = std::tanh(half_photon_over_thermal(omega, temperature_k));
  const double sat = std::pow(nbar, p.beta2) / (p.d * std::pow(temperature_k, p.beta1));
  return p.q_tls0 * std::sqrt(1.0 + sat * th) / th;
}

double q_qp(const LossParams& p, double temperature_k, double omega) {
  if (!std::isfinite(p.q_qp0)) return std::numeric_limits<double>::infinity();
  const double lq = std::log(p.q_qp0) + log_qp_factor(p.tc, temperature_k, omega);
  return lq >= kLogMax ? std::numeric_limits<double>::max() : std::exp(lq);
}

double inverse_q_qp(const LossParams& p, double temperature_k, double omega) {
  if (!std::isfinite(p.q_qp0)) return 0.0;
  return std::exp(-std::log(p.q_qp0) - log_qp_factor(p.tc, temperature_k, omega));
}

double q_int_model(const LossParams& p, double nbar, double temperature_k, double omega) {
  double loss = 1.0 / q_tls(p, nbar, temperature_k, omega) + inverse_q_qp(p, temperature_k, omega);
  if (p.q_other) loss += 1.0 / *p.q_other;
  return 1.0 / loss;
}

void validate(const SweepDataset& data) {
  if (!(data.omega > 0.0)) throw Error(ErrorCode::InvalidInput, "sweep: omega must be positive");
  std::vector<double> temps, powers;
  bool have_power = true;
  for (const auto& pt : data.points) {
    if (!(pt.q_int > 0.0) || !(pt.temperature_k > 0.0) || !(pt.nbar > 0.0) ||
        !(pt.q_int_sigma > 0.0) || !std::isfinite(pt.q_int) || !std::isfinite(pt.nbar)) {
      throw Error(ErrorCode::InvalidInput, "sweep: every point needs Q_int, sigma, nbar and T > 0");
    }
    temps.push_back(pt.temperature_k);
    if (std::isnan(pt.power_dbm)) have_power = false;
    powers.push_back(pt.power_dbm);
  }
  std::size_t n_pow = 0;
  if (have_power) {
    n_pow = distinct(powers, 1e-9).size();
  } else {
    std::vector<double> n;
    for (const auto& pt : data.points) n.push_back(std::log(pt.nbar));
    // photon numbers within ~1 dB belong to the same drive level
    std::sort(n.begin(), n.end());
    double last = -std::numeric_limits<double>::infinity();
    for (double x : n) {
      if (x - last > 0.23) ++n_pow;
      last = std::max(last, x);
    }
  }
  const std::size_t n_temp = distinct(temps, 1e-6).size();
  if (n_pow < 2 || n_temp < 3 || data.points.size() < 8) {
    throw Error(ErrorCode::InsufficientGrid,
                "sweep needs >= 2 powers, >= 3 temperatures and >= 8 points (have " +
                    std::to_string(n_pow) + ", " + std::to_string(n_temp) + ", " +
                    std::to_string(data.points.size()) + ")");
  }
}

LossFitResult fit_sweep(const SweepDataset& data, const SweepFitOptions& options) {
  validate(data);
  LossFitResult res;

  const VariantFit without_other = fit_variant(data, {true, false, options.fixed_tc}, options, {});
  VariantFit chosen = without_other;
  if (options.fit_q_other) {
    const VariantFit with_other = fit_variant(data, {true, true, options.fixed_tc}, options, {without_other.params});
    res.q_other_delta_chi2 = without_other.outcome.chi_square - with_other.outcome.chi_square;
    res.q_other_identified = res.q_other_delta_chi2 >= options.identifiability_delta_chi2;
    if (res.q_other_identified) {
      chosen = with_other;
    } else {
      res.diagnostics.push_back(
          "QOtherUnidentifiable: dropping the residual channel changes chi-square by " +
          std::to_string(res.q_other_delta_chi2) + " (< " +
          std::to_string(options.identifiability_delta_chi2) + "); no high-power plateau");
    }
  }

  const VariantFit no_qp = fit_variant(data, {false, chosen.layout.other, std::nullopt}, options, {chosen.params});
  res.qp_delta_chi2 = no_qp.outcome.chi_square - chosen.outcome.chi_square;
  res.qp_identified = res.qp_delta_chi2 >= options.identifiability_delta_chi2;
  if (!res.qp_identified) {
    res.diagnostics.push_back("QPUnidentified: removing the quasiparticle term changes chi-square by " +
                              std::to_string(res.qp_delta_chi2) + "; Tc and Q_QP0 are not constrained");
  }

  const auto& out = chosen.outcome;
  res.params = chosen.params;
  res.chi_square = out.chi_square;
  res.reduced_chi_square = out.reduced_chi_square;
  res.degrees_of_freedom = out.degrees_of_freedom;
  res.converged = out.converged;
  res.rank_deficient = out.rank_deficient;
  for (int a = 0; a < kNumParams; ++a) {
    for (int b = 0; b < kNumParams; ++b) {
      const int sa = chosen.layout.slot(a);
      const int sb = chosen.layout.slot(b);
      if (sa >= 0 && sb >= 0) res.covariance(a, b) = out.covariance(sa, sb);
    }
  }
  const int s_tc = chosen.layout.slot(kTc);
  const int s_qp = chosen.layout.slot(kQQp0);
  res.tc_qp0_correlation = 0.0;
  if (s_tc >= 0 && s_qp >= 0) {
    const double denom = std::sqrt(out.value_covariance(s_tc, s_tc) * out.value_covariance(s_qp, s_qp));
    res.tc_qp0_correlation = denom > 0.0 && std::isfinite(denom)
                                 ? out.value_covariance(s_qp, s_tc) / denom
                                 : std::numeric_limits<double>::quiet_NaN();
  }
  res.tc_qp0_correlated = !(std::abs(res.tc_qp0_correlation) <= options.correlation_threshold);
  if (res.tc_qp0_correlated) {
    res.diagnostics.push_back("TcQP0Correlated: |corr(Tc, ln Q_QP0)| = " +
                              std::to_string(std::abs(res.tc_qp0_correlation)));
  }
  if (!res.converged) res.diagnostics.push_back("NotConverged: iteration limit reached");
  if (res.rank_deficient) res.diagnostics.push_back("RankDeficient: Jacobian numerically singular");
  if (!std::isfinite(res.params.q_tls0) || !std::isfinite(res.chi_square)) {
    throw Error(ErrorCode::FitDiverged, "sweep fit produced a non-finite result");
  }
  return res;
}

double photon_number(double power_dbm, double attenuation_db, const lineshape::Params& ls) {
  if (!std::isfinite(attenuation_db)) {
    throw Error(ErrorCode::MissingCalibration, "photon number needs the line attenuation in dB");
  }
  const double p_in = std::pow(10.0, (power_dbm - attenuation_db - 30.0) / 10.0);
  const double w0 = constants::two_pi * ls.f0;
  return 2.0 * ls.q_tot * ls.q_tot * p_in / (ls.q_c * constants::hbar * w0 * w0);
}

CorrelationReport correlation_report(const std::vector<LossFitResult>& fits, double threshold) {
  if (fits.size() < 5) throw Error(ErrorCode::InsufficientData, "correlation report needs >= 5 fits");
  const bool with_other =
      std::all_of(fits.begin(), fits.end(), [](const LossFitResult& f) { return f.params.q_other.has_value(); });
  CorrelationReport rep;
  rep.columns = {"ln_q_tls0", "ln_d", "beta1", "beta2", "ln_q_qp0", "tc"};
  if (with_other) rep.columns.push_back("ln_q_other");
  rep.columns.push_back("ln_d_pow_inv_beta2");
  const auto k = static_cast<Eigen::Index>(rep.columns.size());
  const auto n = static_cast<Eigen::Index>(fits.size());
  Eigen::MatrixXd x(n, k);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& p = fits[static_cast<std::size_t>(i)].params;
    Eigen::Index c = 0;
    x(i, c++) = std::log(p.q_tls0);
    x(i, c++) = std::log(p.d);
    x(i, c++) = p.beta1;
    x(i, c++) = p.beta2;
    x(i, c++) = std::log(p.q_qp0);
    x(i, c++) = p.tc;
    if (with_other) x(i, c++) = std::log(*p.q_other);
    x(i, c++) = std::log(p.d) / p.beta2;
  }
  const Eigen::MatrixXd centered = x.rowwise() - x.colwise().mean();
  const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(n - 1);
  rep.r.resize(k, k);
  for (Eigen::Index a = 0; a < k; ++a) {
    for (Eigen::Index b = 0; b < k; ++b) {
      const double denom = std::sqrt(cov(a, a) * cov(b, b));
      // relative guard: identical replicas leave only rounding noise
      const bool dead_a = cov(a, a) <= 1e-24 * std::max(1.0, x.col(a).squaredNorm() / n);
      const bool dead_b = cov(b, b) <= 1e-24 * std::max(1.0, x.col(b).squaredNorm() / n);
      rep.r(a, b) = (dead_a || dead_b) ? std::numeric_limits<double>::quiet_NaN() : cov(a, b) / denom;
    }
  }
  const Eigen::Index last = k - 1;
  auto consider = [&](Eigen::Index a, Eigen::Index b, std::vector<CorrelationReport::Pair>& into) {
    if (std::isnan(rep.r(a, b))) {
      rep.undefined = true;
      return;
    }
    if (std::abs(rep.r(a, b)) > threshold) {
      into.push_back({rep.columns[static_cast<std::size_t>(a)], rep.columns[static_cast<std::size_t>(b)],
                      rep.r(a, b)});
    }
  };
  for (Eigen::Index a = 0; a < last; ++a) {
    for (Eigen::Index b = a + 1; b < last; ++b) consider(a, b, rep.flagged);
  }
  // D^(1/beta2) replaces D in the alternative parameterization
  for (Eigen::Index a = 0; a < last; ++a) {
    if (a != kD) consider(a, last, rep.flagged_reparameterized);
  }
  return rep;
}

}  // namespace resloss::lossmodel
