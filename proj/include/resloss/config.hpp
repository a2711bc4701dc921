#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "resloss/decomposition.hpp"
#include "resloss/freqshift.hpp"
#include "resloss/lineshape.hpp"
#include "resloss/lossmodel.hpp"

// Run configuration: an INI file, RESLOSS_* environment overrides and
// command-line flags, merged in that order of increasing precedence.

namespace resloss::config {

/// Flat "section.key" -> value map.
using Settings = std::map<std::string, std::string>;

struct SynthSettings {
  int devices_per_treatment = 3;
  double snr_db = 40.0;
  std::optional<double> q_c;  // fixed coupling Q; otherwise matched per device
  double attenuation_db = 80.0;
  bool freq_shift = true;
};

struct RunConfig {
  std::vector<std::string> inputs;
  std::string out_dir = "out";
  int jobs = 1;
  std::uint64_t seed = 1;
  freqshift::Gamma gamma = freqshift::Gamma::ThinFilm;

  std::optional<double> attenuation_db;                 // default for every line
  std::map<std::string, double> attenuation_by_device;  // per-line overrides

  lineshape::FitOptions lineshape;
  lossmodel::SweepFitOptions sweep;
  freqshift::FitOptions freq_shift;
  lineshape::NonlinearityOptions nonlinearity;
  double qc_cv_threshold = 0.2;

  double p_bulk = 1.0;
  std::optional<double> t0_nm;
  std::map<decomposition::Treatment, double> thickness_nm;
  std::map<decomposition::Treatment, double> thickness_sigma_nm;
  std::optional<double> alpha_ms;
  std::optional<double> beta_ma;

  SynthSettings synth;
};

/// Environment variable consulted for a key: RESLOSS_ + upper-cased key with
/// dots replaced by underscores, e.g. run.jobs -> RESLOSS_RUN_JOBS.
std::string env_name(const std::string& key);

/// Keys accepted in every layer; per-device and per-treatment keys are
/// patterns with a trailing '*'.
const std::vector<std::string>& known_keys();

/// Throws ParseError with the offending line on malformed or duplicate entries.
Settings read_ini(const std::filesystem::path& path);

using EnvLookup = std::function<const char*(const char*)>;
Settings env_settings(const EnvLookup& lookup);

/// Throws Error(Config) for unknown keys or invalid values.
RunConfig build(const Settings& settings);

/// file < environment < flags. The file may be absent.
RunConfig load(const std::optional<std::filesystem::path>& file, const Settings& flags,
               const EnvLookup& lookup);

}  // namespace resloss::config
