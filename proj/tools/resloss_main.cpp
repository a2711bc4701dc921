#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>

#include "resloss/config.hpp"
#include "resloss/design.hpp"
#include "resloss/error.hpp"
#include "resloss/io.hpp"
#include "resloss/pipeline.hpp"
#include "resloss/synth.hpp"

namespace fs = std::filesystem;
using namespace resloss;
using io::json;

namespace {

constexpr int kExitFatal = 2;

struct Common {
  std::string config_path;
  std::string out;
  std::string seed;
  std::string gamma;
  std::string jobs;
  std::vector<std::string> inputs;
};

void add_common(CLI::App* app, Common& c, bool with_inputs, const std::string& inputs_help) {
  app->add_option("--config", c.config_path, "INI configuration file");
  app->add_option("--out", c.out, "output directory");
  app->add_option("--seed", c.seed, "random seed");
  app->add_option("--gamma", c.gamma, "surface-impedance exponent: -1, -1/2 or -1/3");
  app->add_option("--jobs", c.jobs, "worker threads");
  if (with_inputs) app->add_option("inputs", c.inputs, inputs_help);
}

struct Loaded {
  config::RunConfig cfg;
  bool out_given = false;
};

Loaded load(const Common& c) {
  config::Settings flags;
  if (!c.out.empty()) flags["run.out"] = c.out;
  if (!c.seed.empty()) flags["run.seed"] = c.seed;
  if (!c.gamma.empty()) flags["run.gamma"] = c.gamma;
  if (!c.jobs.empty()) flags["run.jobs"] = c.jobs;
  std::optional<fs::path> file;
  if (!c.config_path.empty())
    file = c.config_path;
  else if (const char* env = std::getenv("RESLOSS_CONFIG"))
    file = env;
  auto lookup = [](const char* name) -> const char* { return std::getenv(name); };
  Loaded l;
  l.cfg = config::load(file, flags, lookup);
  l.out_given = !c.out.empty() || std::getenv(config::env_name("run.out").c_str()) != nullptr ||
                (file && config::read_ini(*file).count("run.out"));
  if (!c.inputs.empty()) l.cfg.inputs = c.inputs;
  return l;
}

void emit(const Loaded& l, const std::string& name, const json& j) {
  const std::string text = io::dump(j);
  std::cout << text;
  if (l.out_given) io::write_text(fs::path(l.cfg.out_dir) / (name + ".json"), text);
}

int fit_trace_cmd(const Common& c) {
  const auto l = load(c);
  if (l.cfg.inputs.empty()) throw Error(ErrorCode::Config, "fit-trace needs at least one trace file");
  json out = json::object();
  int failures = 0;
  for (const auto& path : l.cfg.inputs) {
    std::vector<io::Issue> issues;
    const auto rec = io::read_trace(path, &issues);
    json r = {{"device", rec.device},
              {"resonator_id", rec.trace.resonator_id},
              {"power_dbm", rec.trace.power_dbm},
              {"temperature_k", rec.trace.temperature_k}};
    json iss = json::array();
    for (const auto& i : issues) iss.push_back({{"line", i.line}, {"message", i.message}});
    r["issues"] = iss;
    try {
      const auto fit = lineshape::fit_trace(rec.trace, l.cfg.lineshape);
      r["fit"] = io::to_json(fit);
      const auto nl = lineshape::detect_nonlinearity(rec.trace, fit.params, l.cfg.nonlinearity);
      r["nonlinearity"] = {{"flagged", nl.flagged}, {"residual_score", nl.residual_score}, {"skew_score", nl.skew_score}};
      if (rec.attenuation_db)
        r["nbar"] = lossmodel::photon_number(rec.trace.power_dbm, *rec.attenuation_db, fit.params);
    } catch (const Error& e) {
      r["error"] = {{"code", to_string(e.code())}, {"message", e.what()}};
      ++failures;
    }
    out[path] = r;
  }
  emit(l, "fit_trace", out);
  return failures ? 1 : 0;
}

int fit_sweep_cmd(const Common& c) {
  const auto l = load(c);
  if (l.cfg.inputs.size() != 1) throw Error(ErrorCode::Config, "fit-sweep takes one sweep file");
  std::vector<io::Issue> issues;
  const auto rec = io::read_sweep(l.cfg.inputs.front(), &issues);
  json out = {{"device", rec.dataset.device}};
  try {
    out["fit"] = io::to_json(lossmodel::fit_sweep(rec.dataset, l.cfg.sweep));
  } catch (const Error& e) {
    out["error"] = {{"code", to_string(e.code())}, {"message", e.what()}};
    emit(l, "fit_sweep", out);
    return 1;
  }
  emit(l, "fit_sweep", out);
  return 0;
}

int fit_fshift_cmd(const Common& c) {
  const auto l = load(c);
  if (l.cfg.inputs.size() != 1) throw Error(ErrorCode::Config, "fit-fshift takes one frequency-shift file");
  std::vector<io::Issue> issues;
  const auto rec = io::read_freq_shift(l.cfg.inputs.front(), &issues);
  json out = {{"device", rec.device}};
  try {
    out["fit"] = io::to_json(freqshift::fit_freq_shift(rec.dataset, l.cfg.gamma, l.cfg.freq_shift));
    json regimes = json::object();
    for (auto g : {freqshift::Gamma::ThinFilm, freqshift::Gamma::DirtyThick, freqshift::Gamma::ExtremeAnomalous}) {
      const auto f = freqshift::fit_freq_shift(rec.dataset, g, l.cfg.freq_shift);
      regimes[freqshift::to_string(g)] = {{"tc", f.params.tc}, {"tc_sigma", f.tc_sigma}, {"q_tls0", f.params.q_tls0}};
    }
    out["regimes"] = regimes;
  } catch (const Error& e) {
    out["error"] = {{"code", to_string(e.code())}, {"message", e.what()}};
    emit(l, "fit_fshift", out);
    return 1;
  }
  emit(l, "fit_fshift", out);
  return 0;
}

int decompose_cmd(const Common& c) {
  const auto l = load(c);
  std::vector<fs::path> paths(l.cfg.inputs.begin(), l.cfg.inputs.end());
  const auto reg = io::ingest(paths);
  for (const auto& i : reg.issues)
    if (i.code == ErrorCode::Parse) throw ParseError(i.file, i.line, i.message);
  std::vector<decomposition::SprDevice> devices;
  for (const auto& d : reg.devices)
    if (d.q_tls0 && d.q_tls0_sigma)
      devices.push_back({d.geometry.label, d.geometry.p_ms, *d.q_tls0, *d.q_tls0_sigma, d.geometry.treatment});
  const auto table = pipeline::surface_table(reg.surface_table, l.cfg);
  const auto dec = pipeline::decompose(devices, {}, table, l.cfg);
  if (l.out_given) {
    io::write_text(fs::path(l.cfg.out_dir) / "decomposition.csv", dec.treatment_csv);
    io::write_text(fs::path(l.cfg.out_dir) / "decomposition_terms.csv", dec.terms_csv);
  }
  emit(l, "decompose", dec.report);
  return dec.ran ? 0 : 1;
}

int design_cmd(const Common& c) {
  const auto l = load(c);
  if (l.cfg.inputs.size() != 1) throw Error(ErrorCode::Config, "design takes one JSON design file");
  const json spec = json::parse(io::read_text(l.cfg.inputs.front()));
  json out = json::object();
  if (spec.contains("cpw")) {
    const auto& s = spec["cpw"];
    design::CpwDesign d;
    d.length_m = s.value("length_m", 0.0);
    d.eps_eff = s.value("eps_eff", 1.0);
    d.velocity = s.value("velocity", d.velocity);
    d.z0_ohm = s.value("z0_ohm", d.z0_ohm);
    const double f0 = design::cpw_f0(d);
    json r = {{"f0_hz", f0}};
    if (s.contains("q_c")) r["coupling_capacitance_f"] = design::coupling_capacitance(s["q_c"].get<double>(), f0, d.z0_ohm);
    out["cpw"] = r;
  }
  if (spec.contains("cpw_target")) {
    const auto& s = spec["cpw_target"];
    out["cpw_target"] = {{"length_m", design::cpw_length(s.at("f0_hz").get<double>(), s.value("eps_eff", 1.0),
                                                         s.value("velocity", 299792458.0))}};
  }
  if (spec.contains("lumped")) {
    const auto& s = spec["lumped"];
    const std::string conv = s.value("convention", std::string("angular"));
    if (conv != "angular" && conv != "literal")
      throw Error(ErrorCode::Config, "lumped.convention must be 'angular' or 'literal'");
    const auto e = design::extract_lumped(
        s.at("c_load_f").get<double>(), s.at("f_meander_hz").get<double>(), s.at("f_resonator_hz").get<double>(),
        conv == "angular" ? design::FrequencyConvention::Angular : design::FrequencyConvention::Literal);
    out["lumped"] = {{"c_stray_f", e.c_stray}, {"inductance_h", e.inductance}, {"z0_ohm", e.z0},
                     {"f0_hz", e.f0},          {"convention", conv}};
  }
  emit(l, "design", out);
  return 0;
}

int synth_cmd(const Common& c) {
  auto l = load(c);
  const auto& s = l.cfg.synth;
  auto spec = synth::default_campaign(l.cfg.seed, s.devices_per_treatment);
  spec.sweep.trace.snr_db = s.snr_db;
  if (s.q_c)
    for (auto& d : spec.devices) d.q_c = *s.q_c;
  spec.sweep.attenuation_db = s.attenuation_db;
  spec.include_freq_shift = s.freq_shift;
  const auto campaign = synth::generate_campaign(spec, l.cfg.jobs);
  synth::write_campaign(campaign, l.cfg.out_dir);
  std::cout << "wrote " << spec.devices.size() << " devices to " << l.cfg.out_dir << "\n";
  return 0;
}

int run_cmd(const Common& c) {
  const auto l = load(c);
  if (l.cfg.inputs.empty()) throw Error(ErrorCode::Config, "run needs input paths (positional or run.inputs)");
  const auto summary = pipeline::run_pipeline(l.cfg);
  std::cout << "devices " << summary.devices << ": ok " << summary.devices_ok << ", failed " << summary.devices_failed
            << "; excluded traces " << summary.excluded_traces << "\n";
  for (const auto& n : summary.notices) std::cout << "notice: " << n << "\n";
  return summary.exit_code();
}

int report_cmd(const Common& c) {
  const auto l = load(c);
  const fs::path dir = l.cfg.inputs.empty() ? fs::path(l.cfg.out_dir) : fs::path(l.cfg.inputs.front());
  std::cout << pipeline::render_report(dir);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Loss-channel analysis for superconducting resonators"};
  app.require_subcommand(1);
  Common common;
  struct Sub {
    const char* name;
    const char* help;
    bool inputs;
    const char* inputs_help;
    int (*fn)(const Common&);
  };
  const Sub subs[] = {
      {"fit-trace", "fit resonator lineshapes", true, "trace CSV or sidecar files", fit_trace_cmd},
      {"fit-sweep", "fit the loss model to one Q_int grid", true, "sweep CSV or sidecar file", fit_sweep_cmd},
      {"fit-fshift", "fit frequency shift versus temperature", true, "frequency-shift file", fit_fshift_cmd},
      {"decompose", "SPR regression and surface decomposition", true, "device registry and surface table",
       decompose_cmd},
      {"design", "resonator design calculators", true, "JSON design file", design_cmd},
      {"synth", "write a synthetic campaign", false, "", synth_cmd},
      {"run", "full pipeline", true, "input files or directories", run_cmd},
      {"report", "summarize a run directory", true, "run directory", report_cmd},
  };
  std::vector<std::pair<CLI::App*, int (*)(const Common&)>> handlers;
  for (const auto& s : subs) {
    auto* sub = app.add_subcommand(s.name, s.help);
    add_common(sub, common, s.inputs, s.inputs_help);
    handlers.emplace_back(sub, s.fn);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitFatal;
  }
  try {
    for (const auto& [sub, fn] : handlers)
      if (sub->parsed()) return fn(common);
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.code()) << "]: " << e.what() << "\n";
    const bool fatal = e.code() == ErrorCode::Config || e.code() == ErrorCode::Parse;
    return fatal ? kExitFatal : 1;
  } catch (const json::exception& e) {
    std::cerr << "error [Parse]: " << e.what() << "\n";
    return kExitFatal;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFatal;
  }
  return kExitFatal;
}
