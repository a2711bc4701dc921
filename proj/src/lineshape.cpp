#include "resloss/lineshape.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>

#include "resloss/error.hpp"
#include "resloss/nlls.hpp"

namespace resloss::lineshape {

namespace {

using cplx = std::complex<double>;

double median(std::vector<double> v) {
  const std::size_t n = v.size();
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(n / 2), v.end());
  double hi = v[n / 2];
  if (n % 2 == 1) return hi;
  double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(n / 2));
  return 0.5 * (lo + hi);
}

struct Edges {
  double level;
  double noise;
};

// Off-resonance level from the outer tenth of the trace on both sides.
Edges edge_statistics(const Trace& t) {
  const std::size_t n = t.freq_hz.size();
  const std::size_t k = std::max<std::size_t>(2, n / 10);
  std::vector<double> edge;
  for (std::size_t i = 0; i < k; ++i) {
    edge.push_back(t.s21_mag[i]);
    edge.push_back(t.s21_mag[n - 1 - i]);
  }
  const double level = median(edge);
  // first differences cancel the slow lineshape; sqrt(2) undoes the doubling
  std::vector<double> diffs;
  for (std::size_t i = 1; i < k; ++i) {
    diffs.push_back(std::abs(t.s21_mag[i] - t.s21_mag[i - 1]));
    diffs.push_back(std::abs(t.s21_mag[n - i] - t.s21_mag[n - 1 - i]));
  }
  const double noise = 1.4826 * median(diffs) / std::sqrt(2.0);
  return {level, noise};
}

// Analytic derivatives of the model with respect to (f0, Q_int, Q_c, a, b).
void model_and_gradient(const Params& p, double q_int, double f, double& value,
                        double grad[5]) {
  const double qt = p.q_tot;
  const double qc = p.q_c;
  const double ratio = qt / qc;
  const cplx c(1.0, -2.0 * p.asymmetry);
  const double x = (f - p.f0) / p.f0;
  const double y = 2.0 * qt * x;
  const cplx d(1.0, y);
  const cplx s = 1.0 - ratio * c / d;
  const double mag = std::abs(s);
  value = mag + p.baseline;

  const cplx ds_dratio = -c / d;
  const cplx ds_dasym = ratio * cplx(0.0, 2.0) / d;
  const cplx ds_dy = ratio * c * cplx(0.0, 1.0) / (d * d);
  auto dmag = [&](cplx ds) { return mag > 0.0 ? (std::conj(s) * ds).real() / mag : 0.0; };

  const double dqt_dqi = (qt / q_int) * (qt / q_int);
  const double dqt_dqc = (qt / qc) * (qt / qc);
  const double dratio_dqi = dqt_dqi / qc;
  const double dratio_dqc = dqt_dqc / qc - ratio / qc;
  const double dy_dqt = 2.0 * x;
  const double dy_df0 = -2.0 * qt * f / (p.f0 * p.f0);

  grad[kF0] = dmag(ds_dy * dy_df0);
  grad[kQInt] = dmag(ds_dratio * dratio_dqi + ds_dy * (dy_dqt * dqt_dqi));
  grad[kQc] = dmag(ds_dratio * dratio_dqc + ds_dy * (dy_dqt * dqt_dqc));
  grad[kAsym] = dmag(ds_dasym);
  grad[kBaseline] = 1.0;
}

struct Frame {
  double f_ref;
  double lw_ref;
};

Params unpack(const Eigen::VectorXd& q, const Frame& fr) {
  return Params::from_q_int(fr.f_ref + fr.lw_ref * q[0], q[1], q[2], q[3], q[4]);
}

nlls::Problem make_problem(const Trace& t, const Frame& fr, const Eigen::VectorXd& weights) {
  const std::size_t n = t.freq_hz.size();
  nlls::Problem prob;
  prob.n_residuals = static_cast<Eigen::Index>(n);
  prob.weights = weights;
  const double lo = (t.freq_hz.front() - fr.f_ref) / fr.lw_ref;
  const double hi = (t.freq_hz.back() - fr.f_ref) / fr.lw_ref;
  prob.parameters = {
      {"f0_offset", 0.0, lo, hi, nlls::Scale::Linear},
      {"q_int", 1e5, 1.0, 1e13, nlls::Scale::Log},
      {"q_c", 1e5, 1.0, 1e13, nlls::Scale::Log},
      {"asymmetry", 0.0, -2.0, 2.0, nlls::Scale::Linear},
      {"baseline", 0.0, -10.0, 10.0, nlls::Scale::Linear},
  };
  prob.residual = [&t, fr](const Eigen::VectorXd& q, Eigen::VectorXd& out) {
    const Params p = unpack(q, fr);
    for (std::size_t i = 0; i < t.freq_hz.size(); ++i) {
      out[static_cast<Eigen::Index>(i)] = s21_model(p, t.freq_hz[i]) - t.s21_mag[i];
    }
  };
  prob.jacobian = [&t, fr](const Eigen::VectorXd& q, Eigen::MatrixXd& out) {
    const Params p = unpack(q, fr);
    double value = 0.0;
    double g[5];
    for (std::size_t i = 0; i < t.freq_hz.size(); ++i) {
      model_and_gradient(p, q[1], t.freq_hz[i], value, g);
      const auto r = static_cast<Eigen::Index>(i);
      out(r, 0) = g[kF0] * fr.lw_ref;
      for (int c = 1; c < 5; ++c) out(r, c) = g[c];
    }
  };
  return prob;
}

Eigen::VectorXd pack(const Params& p, const Frame& fr) {
  Eigen::VectorXd q(5);
  q << (p.f0 - fr.f_ref) / fr.lw_ref, p.q_int(), p.q_c, p.asymmetry, p.baseline;
  return q;
}

}  // namespace

void validate(const Trace& t) {
  const std::size_t n = t.freq_hz.size();
  if (n < 8) throw Error(ErrorCode::InvalidInput, "trace needs at least 8 samples");
  if (t.s21_mag.size() != n) throw Error(ErrorCode::InvalidInput, "trace column lengths differ");
  if (!t.s21_sigma.empty() && t.s21_sigma.size() != n) {
    throw Error(ErrorCode::InvalidInput, "trace sigma column length differs");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(t.freq_hz[i]) || t.freq_hz[i] <= 0.0) {
      throw Error(ErrorCode::InvalidInput, "trace frequency must be finite and positive");
    }
    if (i > 0 && !(t.freq_hz[i] > t.freq_hz[i - 1])) {
      throw Error(ErrorCode::InvalidInput, "trace frequencies must be strictly increasing");
    }
    if (!std::isfinite(t.s21_mag[i]) || t.s21_mag[i] < 0.0) {
      throw Error(ErrorCode::InvalidInput, "trace magnitudes must be finite and >= 0");
    }
    if (!t.s21_sigma.empty() && !(t.s21_sigma[i] > 0.0 && std::isfinite(t.s21_sigma[i]))) {
      throw Error(ErrorCode::InvalidInput, "trace sigma must be finite and > 0");
    }
  }
}

double s21_gradient(const Params& p, double f_hz, double grad[5]) {
  double value = 0.0;
  model_and_gradient(p, p.q_int(), f_hz, value, grad);
  return value;
}

double s21_model(const Params& p, double f_hz) {
  const double ratio = p.q_tot / p.q_c;
  const cplx num = ratio * cplx(1.0, -2.0 * p.asymmetry);
  const cplx den(1.0, 2.0 * p.q_tot * (f_hz - p.f0) / p.f0);
  return std::abs(1.0 - num / den) + p.baseline;
}

Params initial_guess(const Trace& t) {
  validate(t);
  const Edges e = edge_statistics(t);
  const auto it = std::min_element(t.s21_mag.begin(), t.s21_mag.end());
  const auto imin = static_cast<std::size_t>(it - t.s21_mag.begin());
  const double dip = *it;
  const double depth = e.level - dip;
  if (!(depth > 0.0) || depth < 5.0 * e.noise) {
    throw Error(ErrorCode::NoDipFound, "no resonance dip above the edge noise");
  }
  const double f0 = t.freq_hz[imin];

  // Full width at half depth in power, walking outwards from the minimum.
  const double half = 0.5 * (e.level * e.level + dip * dip);
  auto crossing = [&](int dir) {
    std::size_t i = imin;
    while (true) {
      const std::size_t j = dir > 0 ? i + 1 : i - 1;
      if ((dir > 0 && j >= t.freq_hz.size()) || (dir < 0 && i == 0)) return t.freq_hz[i];
      const double pi = t.s21_mag[i] * t.s21_mag[i];
      const double pj = t.s21_mag[j] * t.s21_mag[j];
      if (pj >= half) {
        const double w = (half - pi) / (pj - pi);
        return t.freq_hz[i] + w * (t.freq_hz[j] - t.freq_hz[i]);
      }
      i = j;
    }
  };
  double width = crossing(+1) - crossing(-1);
  const double span = t.freq_hz.back() - t.freq_hz.front();
  const double step = span / static_cast<double>(t.freq_hz.size() - 1);
  if (!(width > step)) width = std::max(step, span / 20.0);

  const double q_tot = f0 / width;
  const double ratio = std::clamp(depth / std::max(e.level, 1e-12), 0.02, 0.98);
  Params p;
  p.f0 = f0;
  p.q_tot = q_tot;
  p.q_c = q_tot / ratio;
  p.asymmetry = 0.0;
  p.baseline = e.level - 1.0;
  return p;
}

TraceFit fit_trace(const Trace& t, const FitOptions& options) {
  const Params guess = initial_guess(t);
  const Frame fr{guess.f0, guess.linewidth()};
  const Eigen::Index n = static_cast<Eigen::Index>(t.freq_hz.size());

  nlls::Options opts;
  opts.max_iterations = options.max_iterations;

  std::vector<Eigen::VectorXd> starts{pack(guess, fr)};
  if (options.multistart) {
    for (double a : {0.2, -0.2}) {
      Params p = guess;
      p.asymmetry = a;
      starts.push_back(pack(p, fr));
    }
  }

  TraceFit out;
  Eigen::VectorXd weights = Eigen::VectorXd::Ones(n);
  if (!t.s21_sigma.empty()) {
    for (Eigen::Index i = 0; i < n; ++i) weights[i] = 1.0 / t.s21_sigma[static_cast<std::size_t>(i)];
  }
  nlls::Problem prob = make_problem(t, fr, weights);
  nlls::FitOutcome res = nlls::fit_multistart(prob, starts, opts);

  if (t.s21_sigma.empty()) {
    // Scatter of the off-resonance residuals sets the per-point sigma.
    const Params p = unpack(res.params, fr);
    const double lw = p.linewidth();
    double ss = 0.0;
    int count = 0;
    double ss_all = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double f = t.freq_hz[static_cast<std::size_t>(i)];
      const double r = s21_model(p, f) - t.s21_mag[static_cast<std::size_t>(i)];
      ss_all += r * r;
      if (std::abs(f - p.f0) > lw) {
        ss += r * r;
        ++count;
      }
    }
    double sigma = count >= 10 ? std::sqrt(ss / count) : std::sqrt(ss_all / std::max<Eigen::Index>(n - 5, 1));
    sigma = std::max(sigma, 1e-15);
    out.noise_sigma = sigma;
    out.sigma_estimated = true;
    prob.weights = Eigen::VectorXd::Constant(n, 1.0 / sigma);
    res = nlls::fit_multistart(prob, {res.params}, opts);
  } else {
    out.noise_sigma = std::sqrt(static_cast<double>(n) / weights.squaredNorm());
  }

  if (!res.params.allFinite()) throw Error(ErrorCode::FitDiverged, "trace fit produced non-finite parameters");
  out.params = unpack(res.params, fr);
  out.q_int = res.params[1];
  out.chi_square = res.chi_square;
  out.reduced_chi_square = res.reduced_chi_square;
  out.converged = res.converged;
  out.rank_deficient = res.rank_deficient;
  out.iterations = res.iterations;

  Eigen::Matrix<double, 5, 5> cov = res.covariance;
  cov.row(0) *= fr.lw_ref;
  cov.col(0) *= fr.lw_ref;
  out.covariance = cov;
  out.f0_sigma = std::sqrt(cov(kF0, kF0));
  out.q_int_sigma = std::sqrt(cov(kQInt, kQInt));
  out.q_c_sigma = std::sqrt(cov(kQc, kQc));
  return out;
}

NonlinearityReport detect_nonlinearity(const Trace& t, const Params& fit,
                                       const NonlinearityOptions& options) {
  NonlinearityReport rep;
  const double lw = fit.linewidth();
  double ss_in = 0.0, ss_out = 0.0, skew = 0.0;
  int n_in = 0, n_out = 0;
  double level = 0.0;
  double dip = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < t.freq_hz.size(); ++i) {
    const double f = t.freq_hz[i];
    const double model = s21_model(fit, f);
    const double r = t.s21_mag[i] - model;
    const double det = (f - fit.f0) / lw;
    dip = std::min(dip, model);
    if (std::abs(det) <= 1.0) {
      ss_in += r * r;
      skew += det >= 0.0 ? r : -r;
      ++n_in;
    } else {
      ss_out += r * r;
      ++n_out;
    }
  }
  level = 1.0 + fit.baseline;
  if (n_in == 0) return rep;
  const double rms_in = std::sqrt(ss_in / n_in);
  // Noise estimate: off-resonance scatter, or the stated per-point sigma when
  // smaller, since a distorted fit inflates the scatter too.
  double noise = n_out > 0 ? std::sqrt(ss_out / n_out) : std::numeric_limits<double>::infinity();
  if (t.s21_sigma.size() == t.s21_mag.size()) {
    double ss_sigma = 0.0;
    for (double s : t.s21_sigma) ss_sigma += s * s;
    noise = std::min(noise, std::sqrt(ss_sigma / static_cast<double>(t.s21_sigma.size())));
  }
  if (!std::isfinite(noise)) noise = 0.0;
  const double floor = 1e-6 * std::max(std::abs(level), 1e-12);
  rep.residual_score = rms_in / std::max(noise, floor);
  const double depth = std::max(level - dip, 1e-12);
  rep.skew_score = std::abs(skew / n_in) / depth;
  rep.flagged = rep.residual_score > options.residual_threshold ||
                rep.skew_score > options.skew_threshold;
  return rep;
}

QcReport qc_constancy(const std::vector<double>& q_c_values, double cv_threshold) {
  if (q_c_values.size() < 3) {
    throw Error(ErrorCode::InsufficientData, "Qc constancy needs at least three fitted traces");
  }
  QcReport rep;
  rep.count = q_c_values.size();
  const double n = static_cast<double>(q_c_values.size());
  rep.mean = std::accumulate(q_c_values.begin(), q_c_values.end(), 0.0) / n;
  double ss = 0.0;
  for (double q : q_c_values) ss += (q - rep.mean) * (q - rep.mean);
  rep.cv = std::sqrt(ss / n) / rep.mean;
  rep.warn = rep.cv > cv_threshold;
  return rep;
}

}  // namespace resloss::lineshape
