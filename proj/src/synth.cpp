#include "resloss/synth.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <complex>
#include <random>

#include "resloss/constants.hpp"
#include "resloss/error.hpp"
#include "resloss/io.hpp"
#include "resloss/parallel.hpp"

namespace resloss::synth {

namespace {

std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::vector<double> frequency_grid(const lineshape::Params& p, const TraceSpec& spec) {
  if (spec.points < 2) throw Error(ErrorCode::InvalidInput, "trace needs at least two points");
  if (!(spec.span_linewidths > 0.0)) throw Error(ErrorCode::InvalidInput, "trace span must be positive");
  const double width = spec.span_linewidths * p.linewidth();
  const double half = 0.5 * static_cast<double>(spec.points - 1);
  std::vector<double> f(static_cast<std::size_t>(spec.points));
  for (int i = 0; i < spec.points; ++i)
    f[static_cast<std::size_t>(i)] = p.f0 + (static_cast<double>(i) - half) / (2.0 * half) * width;
  return f;
}

void validate_params(const lineshape::Params& p) {
  if (!(p.f0 > 0.0) || !(p.q_tot > 0.0) || !(p.q_c >= p.q_tot) || !std::isfinite(p.asymmetry) ||
      !std::isfinite(p.baseline))
    throw Error(ErrorCode::InvalidInput, "lineshape parameters need f0 > 0 and 0 < Q_tot <= Q_c");
}

// Adds noise and packages the trace.
lineshape::Trace finish(const lineshape::Params& p, const TraceSpec& spec, std::vector<double> freq,
                        std::vector<double> clean, std::uint64_t seed) {
  lineshape::Trace t;
  t.freq_hz = std::move(freq);
  t.power_dbm = spec.power_dbm;
  t.temperature_k = spec.temperature_k;
  t.resonator_id = spec.resonator_id;
  const double sigma = noise_sigma(p, spec.snr_db);
  if (sigma > 0.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (auto& v : clean) v = std::abs(v + sigma * normal(rng));  // magnitudes stay non-negative
    if (spec.emit_sigma) t.s21_sigma.assign(clean.size(), sigma);
  }
  t.s21_mag = std::move(clean);
  return t;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  return splitmix64(splitmix64(base) ^ (stream * 0xD1B54A32D192ED03ULL + 0x632BE59BD9B4E019ULL));
}

double noise_sigma(const lineshape::Params& p, double snr_db) {
  if (std::isinf(snr_db) && snr_db > 0) return 0.0;
  if (std::isnan(snr_db)) throw Error(ErrorCode::InvalidInput, "SNR must be a number");
  return std::abs(1.0 + p.baseline) * std::pow(10.0, -snr_db / 20.0);
}

lineshape::Trace generate_trace(const lineshape::Params& p, const TraceSpec& spec, std::uint64_t seed) {
  validate_params(p);
  auto freq = frequency_grid(p, spec);
  std::vector<double> clean(freq.size());
  for (std::size_t i = 0; i < freq.size(); ++i) clean[i] = lineshape::s21_model(p, freq[i]);
  return finish(p, spec, std::move(freq), std::move(clean), seed);
}

lineshape::Trace generate_nonlinear_trace(const lineshape::Params& p, double pull, const TraceSpec& spec,
                                          std::uint64_t seed) {
  validate_params(p);
  auto freq = frequency_grid(p, spec);
  std::vector<double> clean(freq.size());
  const std::complex<double> coupling = p.q_tot / p.q_c * std::complex<double>(1.0, -2.0 * p.asymmetry);
  double previous = 0.0;
  bool first = true;
  for (std::size_t i = 0; i < freq.size(); ++i) {
    const double y0 = p.q_tot * (freq[i] - p.f0) / p.f0;
    // Real roots of 4y^3 - 4 y0 y^2 + y + (pull - y0) = 0; follow the branch.
    Eigen::Matrix3d companion = Eigen::Matrix3d::Zero();
    companion(0, 0) = y0;
    companion(0, 1) = -0.25;
    companion(0, 2) = -(pull - y0) / 4.0;
    companion(1, 0) = 1.0;
    companion(2, 1) = 1.0;
    const Eigen::Vector3cd roots = companion.eigenvalues();
    double best = y0;
    double best_gap = std::numeric_limits<double>::infinity();
    for (int r = 0; r < 3; ++r) {
      if (std::abs(roots[r].imag()) > 1e-7 * (1.0 + std::abs(roots[r].real()))) continue;
      const double y = roots[r].real();
      const double gap = first ? y : std::abs(y - previous);  // lowest root at the start
      if (gap < best_gap) {
        best_gap = gap;
        best = y;
      }
    }
    previous = best;
    first = false;
    clean[i] = std::abs(1.0 - coupling / std::complex<double>(1.0, 2.0 * best)) + p.baseline;
  }
  return finish(p, spec, std::move(freq), std::move(clean), seed);
}

double self_consistent_nbar(const lossmodel::LossParams& loss, double omega, double temperature_k,
                            double power_dbm, double attenuation_db, double q_c) {
  const double p_in = std::pow(10.0, (power_dbm - attenuation_db - 30.0) / 10.0);
  const double k = 2.0 * p_in / (q_c * constants::hbar * omega * omega);
  auto q_tot = [&](double n) {
    const double qi = lossmodel::q_int_model(loss, n, temperature_k, omega);
    return 1.0 / (1.0 / qi + 1.0 / q_c);
  };
  double n = k * std::pow(q_tot(0.0), 2);
  for (int it = 0; it < 500; ++it) {
    const double next = k * std::pow(q_tot(n), 2);
    if (std::abs(next - n) <= 1e-14 * n) return next;
    n = next;
  }
  return n;
}

GeneratedSweep generate_sweep(const lossmodel::LossParams& loss, double f0_hz, const SweepSpec& spec,
                              std::uint64_t seed, bool per_trace) {
  if (spec.powers_dbm.empty() || spec.temperatures_k.empty())
    throw Error(ErrorCode::InvalidInput, "sweep grids must be non-empty");
  if (!spec.nbar.empty() && spec.nbar.size() != spec.powers_dbm.size())
    throw Error(ErrorCode::InvalidInput, "photon-number grid must match the power grid");
  GeneratedSweep out;
  const double omega = constants::two_pi * f0_hz;
  out.dataset.omega = omega;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uint64_t stream = 0;
  for (std::size_t pi = 0; pi < spec.powers_dbm.size(); ++pi) {
    for (double t : spec.temperatures_k) {
      const double power = spec.powers_dbm[pi];
      const double nbar = spec.nbar.empty()
                              ? self_consistent_nbar(loss, omega, t, power, spec.attenuation_db, spec.q_c)
                              : spec.nbar[pi];
      const double q = lossmodel::q_int_model(loss, nbar, t, omega);
      lossmodel::SweepPoint pt;
      pt.nbar = nbar;
      pt.temperature_k = t;
      pt.power_dbm = power;
      pt.q_int = spec.q_noise > 0.0 ? q * (1.0 + spec.q_noise * normal(rng)) : q;
      pt.q_int_sigma = (spec.q_noise > 0.0 ? spec.q_noise : 0.01) * q;
      out.dataset.points.push_back(pt);

      const auto ls = lineshape::Params::from_q_int(f0_hz, q, spec.q_c, spec.asymmetry, 0.0);
      out.lineshapes.push_back(ls);
      if (per_trace) {
        TraceSpec ts = spec.trace;
        ts.power_dbm = power;
        ts.temperature_k = t;
        out.traces.push_back(generate_trace(ls, ts, derive_seed(seed, ++stream)));
      }
    }
  }
  return out;
}

freqshift::Dataset generate_freq_shift(const freqshift::Params& p, double f0_hz, const FreqShiftSpec& spec,
                                       std::uint64_t seed) {
  std::vector<double> temps = spec.temperatures_k;
  if (temps.empty())
    for (int i = 0; i < 20; ++i) temps.push_back(0.017 + (1.0 - 0.017) * i / 19.0);
  if (temps.size() < 2) throw Error(ErrorCode::InvalidInput, "frequency-shift grid needs two temperatures");
  std::sort(temps.begin(), temps.end());
  const double omega = constants::two_pi * f0_hz;
  const double t_ref = temps.front();
  std::vector<double> clean;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (double t : temps) {
    clean.push_back(freqshift::referenced_freq_shift(p, t, t_ref, omega));
    lo = std::min(lo, clean.back());
    hi = std::max(hi, clean.back());
  }
  const double range = hi - lo;
  const double sigma = (spec.noise_fraction > 0.0 ? spec.noise_fraction : 1e-3) * range;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  freqshift::Dataset d;
  d.f0_hz = f0_hz;
  for (std::size_t i = 0; i < temps.size(); ++i) {
    const double noise = (i > 0 && spec.noise_fraction > 0.0) ? sigma * normal(rng) : 0.0;
    d.points.push_back({temps[i], clean[i] + noise, sigma});
  }
  return d;
}

std::map<decomposition::Treatment, double> default_surface_loss() {
  using decomposition::Treatment;
  return {{Treatment::Native, 13.6e-4}, {Treatment::BOE, 7.2e-4}, {Treatment::LongBOE, 7.0e-4},
          {Treatment::Triacid, 14.0e-4}};
}

CampaignSpec default_campaign(std::uint64_t seed, int devices_per_treatment,
                              const std::map<decomposition::Treatment, double>& tan_surface, double l_bulk,
                              double p_lo, double p_hi) {
  if (devices_per_treatment < 1 || !(p_lo > 0.0) || !(p_hi >= p_lo))
    throw Error(ErrorCode::InvalidInput, "campaign needs devices and a positive p_MS range");
  CampaignSpec spec;
  spec.seed = seed;
  int index = 0;
  for (const auto& [treatment, tan] : tan_surface) {
    for (int k = 0; k < devices_per_treatment; ++k, ++index) {
      CampaignDevice dev;
      const double frac = devices_per_treatment > 1 ? static_cast<double>(k) / (devices_per_treatment - 1) : 0.0;
      dev.geometry.p_ms = p_lo * std::pow(p_hi / p_lo, frac);
      dev.geometry.treatment = treatment;
      dev.geometry.type = k % 2 ? decomposition::DeviceType::LE : decomposition::DeviceType::CPW;
      dev.geometry.label = decomposition::to_string(treatment) + "_" + std::to_string(k + 1);
      dev.loss.q_tls0 = 1.0 / (dev.geometry.p_ms * tan + l_bulk);
      dev.loss.d = 600.0;
      dev.loss.beta1 = 1.0;
      dev.loss.beta2 = 0.65;
      dev.loss.q_qp0 = 30.0;
      dev.loss.tc = 4.2;
      dev.loss.q_other = 3e7;
      dev.f0_hz = 4.5e9 + 0.15e9 * static_cast<double>(index);
      dev.q_c = lossmodel::q_int_model(dev.loss, 0.0, 0.017, constants::two_pi * dev.f0_hz);
      spec.devices.push_back(dev);
    }
  }
  spec.sweep.trace.snr_db = 40.0;
  return spec;
}

Campaign generate_campaign(const CampaignSpec& spec, int jobs) {
  Campaign c;
  c.spec = spec;
  const std::size_t n = spec.devices.size();
  c.sweeps.resize(n);
  if (spec.include_freq_shift) c.freq_shift.resize(n);
  parallel_for(n, jobs, [&](std::size_t i) {
    const auto& dev = spec.devices[i];
    const std::uint64_t base = derive_seed(spec.seed, i);
    SweepSpec sweep = spec.sweep;
    sweep.trace.resonator_id = dev.geometry.label;
    if (dev.q_c > 0.0) sweep.q_c = dev.q_c;
    c.sweeps[i] = generate_sweep(dev.loss, dev.f0_hz, sweep, derive_seed(base, 1), true);
    c.sweeps[i].dataset.device = dev.geometry.label;
    if (spec.include_freq_shift) {
      const freqshift::Params fp{dev.loss.q_tls0, dev.loss.tc, dev.alpha_kin, freqshift::Gamma::ThinFilm};
      c.freq_shift[i] = generate_freq_shift(fp, dev.f0_hz, spec.freq_shift, derive_seed(base, 2));
      c.freq_shift[i].resonator_id = dev.geometry.label;
    }
  });
  return c;
}

void write_campaign(const Campaign& campaign, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::vector<io::DeviceEntry> registry;
  io::json truth = io::json::object();
  truth["kind"] = "truth";
  truth["seed"] = campaign.spec.seed;
  truth["devices"] = io::json::array();
  for (std::size_t i = 0; i < campaign.spec.devices.size(); ++i) {
    const auto& dev = campaign.spec.devices[i];
    io::DeviceEntry entry;
    entry.geometry = dev.geometry;
    entry.attenuation_db = campaign.spec.sweep.attenuation_db;
    entry.f0_hz = dev.f0_hz;
    registry.push_back(entry);
    truth["devices"].push_back({{"label", dev.geometry.label},
                                {"loss", io::to_json(dev.loss)},
                                {"f0_hz", dev.f0_hz},
                                {"alpha_kin", dev.alpha_kin},
                                {"q_c", dev.q_c > 0.0 ? dev.q_c : campaign.spec.sweep.q_c}});

    const auto& sweep = campaign.sweeps[i];
    const std::size_t nt = campaign.spec.sweep.temperatures_k.size();
    for (std::size_t k = 0; k < sweep.traces.size(); ++k) {
      char name[64];
      std::snprintf(name, sizeof name, "p%02zu_t%02zu.csv", k / nt, k % nt);
      io::TraceRecord rec;
      rec.device = dev.geometry.label;
      rec.trace = sweep.traces[k];
      rec.attenuation_db = campaign.spec.sweep.attenuation_db;
      io::write_trace(dir / "traces" / dev.geometry.label / name, rec);
    }
    if (!campaign.freq_shift.empty())
      io::write_freq_shift(dir / "freq_shift" / (dev.geometry.label + ".csv"), dev.geometry.label,
                           campaign.freq_shift[i]);
  }
  io::write_device_registry(dir / "devices.json", registry);
  io::write_text(dir / "truth.json", io::dump(truth));
}

}  // namespace resloss::synth
