#include "resloss/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "resloss/constants.hpp"
#include "resloss/error.hpp"
#include "resloss/parallel.hpp"

namespace resloss::pipeline {

namespace fs = std::filesystem;
using io::json;

namespace {

struct Exclusion {
  std::string source;
  std::size_t line = 0;
  std::string device;
  std::string resonator;
  double power_dbm = std::numeric_limits<double>::quiet_NaN();
  double temperature_k = std::numeric_limits<double>::quiet_NaN();
  std::string code;
  std::string message;
};

struct DeviceInput {
  std::string label;
  std::vector<const io::TraceRecord*> traces;
  const io::SweepRecord* sweep = nullptr;
  const io::FreqShiftRecord* freq_shift = nullptr;
  const io::DeviceEntry* entry = nullptr;
};

struct DeviceOutcome {
  json report;
  std::vector<Exclusion> exclusions;
  std::optional<lossmodel::LossFitResult> loss;
  std::optional<freqshift::Fit> fshift;
  lossmodel::SweepDataset sweep;
  double base_temperature = 0.0;
  bool failed = false;
};

std::string csv_text(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string num(double v) { return io::format_double(v); }

std::optional<double> attenuation_for(const DeviceInput& in, const config::RunConfig& cfg,
                                      const io::TraceRecord* trace) {
  if (auto it = cfg.attenuation_by_device.find(in.label); it != cfg.attenuation_by_device.end()) return it->second;
  if (cfg.attenuation_db) return cfg.attenuation_db;
  if (in.entry && in.entry->attenuation_db) return in.entry->attenuation_db;
  if (trace && trace->attenuation_db) return trace->attenuation_db;
  return std::nullopt;
}

// Q_TLS at one photon and base temperature with delta-method sigma.
decomposition::Measured single_photon_q(const lossmodel::LossFitResult& fit, double omega, double t_base) {
  const double q = decomposition::q_tls_at_photon(fit.params, omega, t_base);
  const int idx[] = {lossmodel::kQTls0, lossmodel::kD, lossmodel::kBeta1, lossmodel::kBeta2};
  Eigen::Vector4d g;
  for (int k = 0; k < 4; ++k) {
    auto hi = fit.params, lo = fit.params;
    double* ph = nullptr;
    double* pl = nullptr;
    switch (idx[k]) {
      case lossmodel::kQTls0: ph = &hi.q_tls0; pl = &lo.q_tls0; break;
      case lossmodel::kD: ph = &hi.d; pl = &lo.d; break;
      case lossmodel::kBeta1: ph = &hi.beta1; pl = &lo.beta1; break;
      default: ph = &hi.beta2; pl = &lo.beta2; break;
    }
    const double h = 1e-6 * std::max(std::abs(*ph), 1e-3);
    *ph += h;
    *pl -= h;
    g[k] = (decomposition::q_tls_at_photon(hi, omega, t_base) - decomposition::q_tls_at_photon(lo, omega, t_base)) /
           (2.0 * h);
  }
  Eigen::Matrix4d cov;
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b) cov(a, b) = fit.covariance(idx[a], idx[b]);
  return {q, std::sqrt(std::max(0.0, g.dot(cov * g)))};
}

DeviceOutcome process_device(const DeviceInput& in, const config::RunConfig& cfg) {
  DeviceOutcome out;
  json& rep = out.report;
  rep["device"] = in.label;
  rep["errors"] = json::array();
  rep["notices"] = json::array();
  if (in.entry) {
    rep["geometry"] = {{"p_ms", in.entry->geometry.p_ms},
                       {"treatment", decomposition::to_string(in.entry->geometry.treatment)},
                       {"type", decomposition::to_string(in.entry->geometry.type)},
                       {"tags", in.entry->geometry.tags}};
  }
  bool attempted = false;
  bool succeeded = false;

  // Stage 1: lineshape fits.
  std::vector<double> qc_values;
  json traces = json::array();
  std::optional<double> omega;
  for (const auto* rec : in.traces) {
    const auto& t = rec->trace;
    json tj = {{"resonator_id", t.resonator_id},
               {"power_dbm", t.power_dbm},
               {"temperature_k", t.temperature_k},
               {"source", rec->source}};
    auto exclude = [&](const std::string& code, const std::string& msg) {
      tj["status"] = "excluded";
      tj["reason"] = code;
      out.exclusions.push_back({rec->source, 0, in.label, t.resonator_id, t.power_dbm, t.temperature_k, code, msg});
    };
    try {
      const auto fit = lineshape::fit_trace(t, cfg.lineshape);
      tj["fit"] = io::to_json(fit);
      const auto nl = lineshape::detect_nonlinearity(t, fit.params, cfg.nonlinearity);
      tj["nonlinearity"] = {{"flagged", nl.flagged}, {"residual_score", nl.residual_score}, {"skew_score", nl.skew_score}};
      if (nl.flagged) {
        exclude("Nonlinear", "distorted resonance at this drive");
      } else {
        const auto att = attenuation_for(in, cfg, rec);
        if (!att) {
          exclude(to_string(ErrorCode::MissingCalibration), "no line attenuation for photon number");
        } else {
          const double nbar = lossmodel::photon_number(t.power_dbm, *att, fit.params);
          tj["status"] = "ok";
          tj["nbar"] = nbar;
          tj["attenuation_db"] = *att;
          qc_values.push_back(fit.params.q_c);
          if (!omega) omega = constants::two_pi * fit.params.f0;
          lossmodel::SweepPoint pt;
          pt.nbar = nbar;
          pt.temperature_k = t.temperature_k;
          pt.q_int = fit.q_int;
          pt.q_int_sigma = fit.q_int_sigma;
          pt.power_dbm = t.power_dbm;
          out.sweep.points.push_back(pt);
        }
      }
    } catch (const Error& e) {
      exclude(to_string(e.code()), e.what());
    }
    traces.push_back(tj);
  }
  rep["traces"] = traces;
  if (qc_values.size() >= 3) {
    const auto qc = lineshape::qc_constancy(qc_values, cfg.qc_cv_threshold);
    rep["qc_constancy"] = {{"mean", qc.mean}, {"cv", qc.cv}, {"warn", qc.warn}, {"count", qc.count}};
    if (qc.warn) rep["notices"].push_back("QcVaries");
  }

  // Stage 2: loss-model fit over the power/temperature grid.
  if (!in.traces.empty() || in.sweep) {
    attempted = true;
    if (in.traces.empty()) {
      out.sweep = in.sweep->dataset;
    } else {
      out.sweep.device = in.label;
      out.sweep.omega = omega.value_or(0.0);
      if (in.sweep) rep["notices"].push_back("SweepFileIgnored: traces take precedence");
    }
    out.sweep.device = in.label;
    try {
      auto fit = lossmodel::fit_sweep(out.sweep, cfg.sweep);
      out.base_temperature = std::numeric_limits<double>::infinity();
      for (const auto& p : out.sweep.points) out.base_temperature = std::min(out.base_temperature, p.temperature_k);
      json sj = io::to_json(fit);
      const auto q1 = single_photon_q(fit, out.sweep.omega, out.base_temperature);
      sj["q_tls_single_photon"] = io::to_json(q1);
      sj["base_temperature_k"] = out.base_temperature;
      sj["omega"] = out.sweep.omega;
      rep["sweep_fit"] = sj;
      out.loss = fit;
      succeeded = true;
    } catch (const Error& e) {
      rep["errors"].push_back({{"stage", "sweep"}, {"code", to_string(e.code())}, {"message", e.what()}});
      out.failed = true;
    }
  }

  // Stage 3: frequency shift versus temperature.
  if (in.freq_shift) {
    attempted = true;
    try {
      const auto f = freqshift::fit_freq_shift(in.freq_shift->dataset, cfg.gamma, cfg.freq_shift);
      json fj = io::to_json(f);
      if (out.loss) {
        const double diff = f.params.q_tls0 - out.loss->params.q_tls0;
        const double comb = std::hypot(f.q_tls0_sigma, out.loss->sigma(lossmodel::kQTls0));
        fj["q_tls0_agreement_sigma"] = comb > 0 ? std::abs(diff) / comb : 0.0;
      }
      rep["freq_shift_fit"] = fj;
      out.fshift = f;
      succeeded = true;
    } catch (const Error& e) {
      rep["errors"].push_back({{"stage", "freq_shift"}, {"code", to_string(e.code())}, {"message", e.what()}});
      if (!out.loss) out.failed = true;
    }
  }
  if (attempted && !succeeded) out.failed = true;
  rep["status"] = out.failed ? "failed" : "ok";
  return out;
}

void append_exclusions(std::string& text, const std::vector<Exclusion>& rows) {
  for (const auto& e : rows)
    text += csv_text(e.source) + "," + std::to_string(e.line) + "," + csv_text(e.device) + "," +
            csv_text(e.resonator) + "," + num(e.power_dbm) + "," + num(e.temperature_k) + "," + e.code + "," +
            csv_text(e.message) + "\n";
}

}  // namespace

decomposition::SurfaceTable surface_table(const std::optional<decomposition::SurfaceTable>& ingested,
                                          const config::RunConfig& config) {
  auto table = ingested.value_or(decomposition::SurfaceTable::with_default_thicknesses());
  if (config.t0_nm) table.t0_nm = *config.t0_nm;
  for (const auto& [t, v] : config.thickness_nm) table.at(t).thickness_nm.value = v;
  for (const auto& [t, v] : config.thickness_sigma_nm) table.at(t).thickness_nm.sigma = v;
  return table;
}

DecompositionOutput decompose(const std::vector<decomposition::SprDevice>& devices,
                              const std::vector<decomposition::SprDevice>& single_photon,
                              decomposition::SurfaceTable table, const config::RunConfig& config) {
  using namespace decomposition;
  DecompositionOutput out;
  out.report = json::object();
  std::optional<SprFit> spr;
  if (!devices.empty()) {
    try {
      spr = fit_spr_scaling(devices, config.p_bulk);
      out.report["spr_fit"] = io::to_json(*spr);
      if (spr->bulk_unidentifiable) out.notices.push_back("bulk loss not resolved from the SPR regression");
    } catch (const Error& e) {
      out.notices.push_back(std::string("SPR regression skipped: ") + e.what());
    }
  }
  if (!single_photon.empty()) {
    try {
      out.report["spr_fit_single_photon"] = io::to_json(fit_spr_scaling(single_photon, config.p_bulk));
    } catch (const Error& e) {
      out.notices.push_back(std::string("single-photon SPR regression skipped: ") + e.what());
    }
  }

  // Measured entries: regression output first, then any table values with sigma.
  SurfaceTable measured;
  measured.t0_nm = table.t0_nm;
  measured.tan_bulk = spr ? std::optional<Measured>(spr->tan_bulk) : table.tan_bulk;
  for (const auto& e : table.entries) {
    SurfaceEntry m = e;
    if (spr && spr->tan_surface.count(e.treatment)) {
      m.tan_delta = spr->tan_surface.at(e.treatment);
    } else if (!(e.tan_delta.sigma > 0.0)) {
      continue;
    }
    measured.entries.push_back(m);
  }
  out.report["surface_table"] = io::to_json(measured);

  out.treatment_csv = "row,tan_delta,sigma,thickness_nm,thickness_sigma_nm\n";
  for (const auto& e : measured.entries)
    out.treatment_csv += to_string(e.treatment) + "," + num(e.tan_delta.value) + "," + num(e.tan_delta.sigma) + "," +
                         num(e.thickness_nm.value) + "," + num(e.thickness_nm.sigma) + "\n";
  if (measured.tan_bulk)
    out.treatment_csv += "bulk," + num(measured.tan_bulk->value) + "," + num(measured.tan_bulk->sigma) + ",,\n";

  out.terms_csv = "term,value,sigma,chi_square,degrees_of_freedom\n";
  try {
    const auto result = aggregate_triplets(measured, config.alpha_ms, config.beta_ma);
    out.report["decomposition"] = io::to_json(result);
    auto row = [&](const char* name, const Aggregate& a) {
      out.terms_csv += std::string(name) + "," + num(a.value.value) + "," + num(a.value.sigma) + "," +
                       num(a.chi_square) + "," + std::to_string(a.degrees_of_freedom) + "\n";
    };
    row("oxide", result.oxide);
    row("substrate", result.substrate);
    if (!result.hydrocarbon_per_pair.empty()) row("hydrocarbon", result.hydrocarbon);
    if (result.hydrocarbon_unphysical) out.notices.push_back("hydrocarbon term is negative");
    out.ran = true;
  } catch (const Error& e) {
    out.notices.push_back(std::string("surface decomposition skipped: ") + e.what());
  }
  if (out.ran) {
    const bool all = std::all_of(std::begin(kAllTreatments), std::end(kAllTreatments), [&](Treatment t) {
      return std::any_of(measured.entries.begin(), measured.entries.end(),
                         [&](const SurfaceEntry& e) { return e.treatment == t; });
    });
    if (all) {
      try {
        out.report["alternative_placement"] = io::to_json(solve_excluded_model(measured));
      } catch (const Error& e) {
        out.notices.push_back(std::string("alternative placement skipped: ") + e.what());
      }
    }
  }
  out.ran = out.ran || spr.has_value();
  out.report["notices"] = out.notices;
  return out;
}

RunSummary run_pipeline(const config::RunConfig& cfg) {
  RunSummary summary;
  std::vector<fs::path> inputs(cfg.inputs.begin(), cfg.inputs.end());
  const io::Registry reg = io::ingest(inputs);
  const fs::path out_dir = cfg.out_dir;

  // Group everything by device label.
  std::map<std::string, DeviceInput> by_device;
  for (const auto& t : reg.traces) by_device[t.device].traces.push_back(&t);
  for (const auto& s : reg.sweeps) by_device[s.dataset.device].sweep = &s;
  for (const auto& f : reg.freq_shift) by_device[f.device].freq_shift = &f;
  std::map<std::string, const io::DeviceEntry*> entries;
  for (const auto& d : reg.devices) entries[d.geometry.label] = &d;
  std::vector<DeviceInput> inputs_list;
  for (auto& [label, in] : by_device) {
    in.label = label;
    if (auto it = entries.find(label); it != entries.end()) in.entry = it->second;
    inputs_list.push_back(in);
  }

  std::vector<DeviceOutcome> outcomes(inputs_list.size());
  parallel_for(inputs_list.size(), cfg.jobs, [&](std::size_t i) { outcomes[i] = process_device(inputs_list[i], cfg); });

  // Exclusion ledger: ingestion issues first, then per-trace exclusions.
  std::string exclusions = "source,line,device,resonator_id,power_dbm,temperature_k,code,message\n";
  std::vector<Exclusion> issue_rows;
  for (const auto& is : reg.issues)
    issue_rows.push_back({is.file, is.line, "", "", std::numeric_limits<double>::quiet_NaN(),
                          std::numeric_limits<double>::quiet_NaN(), to_string(is.code), is.message});
  append_exclusions(exclusions, issue_rows);
  summary.issues = static_cast<int>(reg.issues.size());

  std::string qint_csv = "device,temperature_k,power_dbm,nbar,q_int,q_int_sigma,q_int_model\n";
  std::string fshift_csv = "device,temperature_k,df_over_f,sigma,model\n";
  std::string spr_csv = "device,treatment,p_ms,q_tls0,q_tls0_sigma,q_tls_single_photon,q_tls_single_photon_sigma\n";
  std::vector<decomposition::SprDevice> spr, spr1;
  json device_status = json::object();

  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    const auto& in = inputs_list[i];
    const auto& o = outcomes[i];
    ++summary.devices;
    if (o.failed)
      ++summary.devices_failed;
    else
      ++summary.devices_ok;
    summary.excluded_traces += static_cast<int>(o.exclusions.size());
    append_exclusions(exclusions, o.exclusions);
    device_status[in.label] = o.failed ? "failed" : "ok";
    io::write_text(out_dir / "devices" / (in.label + ".json"), io::dump(o.report));

    if (o.loss) {
      auto pts = o.sweep.points;
      std::stable_sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) {
        return std::tie(a.temperature_k, a.nbar) < std::tie(b.temperature_k, b.nbar);
      });
      for (const auto& p : pts)
        qint_csv += csv_text(in.label) + "," + num(p.temperature_k) + "," + num(p.power_dbm) + "," + num(p.nbar) +
                    "," + num(p.q_int) + "," + num(p.q_int_sigma) + "," +
                    num(lossmodel::q_int_model(o.loss->params, p.nbar, p.temperature_k, o.sweep.omega)) + "\n";
      if (in.entry) {
        const auto& g = in.entry->geometry;
        const auto q1 = single_photon_q(*o.loss, o.sweep.omega, o.base_temperature);
        spr.push_back({in.label, g.p_ms, o.loss->params.q_tls0, o.loss->sigma(lossmodel::kQTls0), g.treatment});
        spr1.push_back({in.label, g.p_ms, q1.value, q1.sigma, g.treatment});
        spr_csv += csv_text(in.label) + "," + decomposition::to_string(g.treatment) + "," + num(g.p_ms) + "," +
                   num(o.loss->params.q_tls0) + "," + num(o.loss->sigma(lossmodel::kQTls0)) + "," + num(q1.value) +
                   "," + num(q1.sigma) + "\n";
      }
    }
    if (o.fshift && in.freq_shift) {
      const auto& d = in.freq_shift->dataset;
      for (const auto& p : d.points)
        fshift_csv += csv_text(in.label) + "," + num(p.temperature_k) + "," + num(p.df_over_f) + "," + num(p.sigma) +
                      "," + num(freqshift::referenced_freq_shift(o.fshift->params, p.temperature_k, o.fshift->t_ref,
                                                                  d.omega())) +
                      "\n";
    }
  }

  json campaign = json::object();
  if (reg.devices.empty()) {
    summary.notices.push_back("decomposition skipped: no device registry");
  } else {
    auto dec = decompose(spr, spr1, surface_table(reg.surface_table, cfg), cfg);
    campaign = dec.report;
    summary.decomposition_ran = dec.ran;
    for (const auto& n : dec.notices) summary.notices.push_back(n);
    if (dec.ran) {
      io::write_text(out_dir / "decomposition.csv", dec.treatment_csv);
      io::write_text(out_dir / "decomposition_terms.csv", dec.terms_csv);
    }
  }
  if (summary.devices == 0) summary.notices.push_back("no device data found");
  campaign["devices"] = device_status;
  io::write_text(out_dir / "campaign.json", io::dump(campaign));
  io::write_text(out_dir / "exclusions.csv", exclusions);
  io::write_text(out_dir / "plots" / "qint_vs_nbar.csv", qint_csv);
  io::write_text(out_dir / "plots" / "qtls_vs_pms.csv", spr_csv);
  io::write_text(out_dir / "plots" / "freq_shift.csv", fshift_csv);

  json sj = {{"devices", summary.devices},
             {"devices_ok", summary.devices_ok},
             {"devices_failed", summary.devices_failed},
             {"excluded_traces", summary.excluded_traces},
             {"ingest_issues", summary.issues},
             {"decomposition_ran", summary.decomposition_ran},
             {"notices", summary.notices},
             {"status", device_status},
             {"exit_code", summary.exit_code()}};
  io::write_text(out_dir / "summary.json", io::dump(sj));
  return summary;
}

std::string render_report(const fs::path& out_dir) {
  const json s = json::parse(io::read_text(out_dir / "summary.json"));
  std::ostringstream r;
  r << "devices: " << s.value("devices", 0) << " (ok " << s.value("devices_ok", 0) << ", failed "
    << s.value("devices_failed", 0) << ")\n";
  r << "excluded traces: " << s.value("excluded_traces", 0) << ", ingest issues: " << s.value("ingest_issues", 0)
    << "\n";
  for (const auto& [label, status] : s["status"].items()) {
    const fs::path dev = out_dir / "devices" / (label + ".json");
    r << "  " << label << ": " << status.get<std::string>();
    if (fs::exists(dev)) {
      const json d = json::parse(io::read_text(dev));
      if (d.contains("sweep_fit")) {
        const auto& p = d["sweep_fit"]["params"];
        const auto& sg = d["sweep_fit"]["sigma"];
        r << "  Q_TLS0 " << num(p["q_tls0"].get<double>()) << " +- " << num(sg["q_tls0"].get<double>()) << ", Tc "
          << num(p["tc"].get<double>()) << " K";
      }
      if (d.contains("freq_shift_fit"))
        r << "  shift Q_TLS0 " << num(d["freq_shift_fit"]["q_tls0"].get<double>());
    }
    r << "\n";
  }
  if (fs::exists(out_dir / "campaign.json")) {
    const json c = json::parse(io::read_text(out_dir / "campaign.json"));
    if (c.contains("spr_fit")) {
      r << "surface loss tangents:\n";
      for (const auto& [t, m] : c["spr_fit"]["tan_surface"].items())
        r << "  " << t << ": " << num(m["value"].get<double>()) << " +- " << num(m["sigma"].get<double>()) << "\n";
      const auto& b = c["spr_fit"]["tan_bulk"];
      r << "  bulk: " << num(b["value"].get<double>()) << " +- " << num(b["sigma"].get<double>()) << "\n";
    }
    if (c.contains("decomposition")) {
      r << "decomposition (metal-substrate referenced):\n";
      for (const char* k : {"oxide", "substrate", "hydrocarbon"}) {
        const auto& a = c["decomposition"][k];
        r << "  " << k << ": " << num(a["value"].get<double>()) << " +- " << num(a["sigma"].get<double>()) << "\n";
      }
    }
  }
  for (const auto& n : s["notices"]) r << "notice: " << n.get<std::string>() << "\n";
  return r.str();
}

}  // namespace resloss::pipeline
