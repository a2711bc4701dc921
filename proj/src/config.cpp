#include "resloss/config.hpp"

#include <algorithm>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <cctype>
#include <sstream>

#include "resloss/error.hpp"
#include "resloss/io.hpp"

namespace resloss::config {

namespace {

bool matches(const std::string& key, const std::string& pattern) {
  if (!pattern.empty() && pattern.back() == '*') {
    const std::string prefix = pattern.substr(0, pattern.size() - 1);
    return key.size() > prefix.size() && key.compare(0, prefix.size(), prefix) == 0;
  }
  return key == pattern;
}

bool is_known(const std::string& key) {
  const auto& keys = known_keys();
  return std::any_of(keys.begin(), keys.end(), [&](const std::string& p) { return matches(key, p); });
}

double to_double(const std::string& key, const std::string& value) {
  try {
    return io::parse_double(value);
  } catch (const Error&) {
    throw Error(ErrorCode::Config, key + ": '" + value + "' is not a number");
  }
}

double positive(const std::string& key, const std::string& value) {
  const double v = to_double(key, value);
  if (!(v > 0.0) || !std::isfinite(v)) throw Error(ErrorCode::Config, key + " must be positive");
  return v;
}

long to_int(const std::string& key, const std::string& value, long lo) {
  try {
    std::size_t used = 0;
    const long v = std::stol(value, &used);
    if (used != value.size() || v < lo) throw std::invalid_argument("range");
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::Config, key + ": expected an integer >= " + std::to_string(lo));
  }
}

bool to_bool(const std::string& key, std::string value) {
  std::transform(value.begin(), value.end(), value.begin(), [](unsigned char c) { return std::tolower(c); });
  if (value == "1" || value == "true" || value == "yes" || value == "on") return true;
  if (value == "0" || value == "false" || value == "no" || value == "off") return false;
  throw Error(ErrorCode::Config, key + ": expected a boolean");
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

}  // namespace

std::string env_name(const std::string& key) {
  std::string name = "RESLOSS_";
  for (char c : key) name.push_back(c == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  return name;
}

const std::vector<std::string>& known_keys() {
  static const std::vector<std::string> keys = {
      "run.inputs",
      "run.out",
      "run.jobs",
      "run.seed",
      "run.gamma",
      "calibration.attenuation_db",
      "calibration.attenuation.*",
      "lineshape.max_iterations",
      "lineshape.multistart",
      "sweep.starts",
      "sweep.max_iterations",
      "sweep.fit_q_other",
      "sweep.tc_upper",
      "sweep.q_upper",
      "sweep.identifiability_delta_chi2",
      "sweep.correlation_threshold",
      "freq_shift.tc_upper",
      "freq_shift.max_iterations",
      "thresholds.nonlinearity_residual",
      "thresholds.nonlinearity_skew",
      "thresholds.qc_cv",
      "decomposition.p_bulk",
      "decomposition.t0_nm",
      "decomposition.thickness.*",
      "decomposition.thickness_sigma.*",
      "decomposition.alpha_ms",
      "decomposition.beta_ma",
      "synth.devices_per_treatment",
      "synth.snr_db",
      "synth.q_c",
      "synth.attenuation_db",
      "synth.freq_shift",
  };
  return keys;
}

Settings read_ini(const std::filesystem::path& path) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::ini_parser::read_ini(path.string(), tree);
  } catch (const pt::ini_parser_error& e) {
    throw ParseError(path.string(), e.line(), e.message());
  }
  Settings s;
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw ParseError(path.string(), 0, "key '" + section + "' outside a section");
    for (const auto& [key, value] : body) s[section + "." + key] = value.data();
  }
  return s;
}

Settings env_settings(const EnvLookup& lookup) {
  Settings s;
  for (const auto& key : known_keys()) {
    if (key.back() == '*') continue;  // open-ended keys come from files and flags only
    if (const char* v = lookup(env_name(key).c_str())) s[key] = v;
  }
  return s;
}

RunConfig build(const Settings& settings) {
  RunConfig c;
  for (const auto& [key, value] : settings) {
    if (!is_known(key)) throw Error(ErrorCode::Config, "unknown setting '" + key + "'");
    if (key == "run.inputs") {
      c.inputs = split_list(value);
    } else if (key == "run.out") {
      if (value.empty()) throw Error(ErrorCode::Config, "run.out must not be empty");
      c.out_dir = value;
    } else if (key == "run.jobs") {
      c.jobs = static_cast<int>(to_int(key, value, 1));
    } else if (key == "run.seed") {
      try {
        std::size_t used = 0;
        c.seed = std::stoull(value, &used);
        if (used != value.size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw Error(ErrorCode::Config, "run.seed: expected a non-negative integer");
      }
    } else if (key == "run.gamma") {
      try {
        c.gamma = freqshift::parse_gamma(value);
      } catch (const Error& e) {
        throw Error(ErrorCode::Config, std::string("run.gamma: ") + e.what());
      }
    } else if (key == "calibration.attenuation_db") {
      c.attenuation_db = to_double(key, value);
    } else if (matches(key, "calibration.attenuation.*")) {
      c.attenuation_by_device[key.substr(std::string("calibration.attenuation.").size())] = to_double(key, value);
    } else if (key == "lineshape.max_iterations") {
      c.lineshape.max_iterations = static_cast<int>(to_int(key, value, 1));
    } else if (key == "lineshape.multistart") {
      c.lineshape.multistart = to_bool(key, value);
    } else if (key == "sweep.starts") {
      c.sweep.starts = static_cast<int>(to_int(key, value, 1));
    } else if (key == "sweep.max_iterations") {
      c.sweep.max_iterations = static_cast<int>(to_int(key, value, 1));
    } else if (key == "sweep.fit_q_other") {
      c.sweep.fit_q_other = to_bool(key, value);
    } else if (key == "sweep.tc_upper") {
      c.sweep.tc_upper = positive(key, value);
    } else if (key == "sweep.q_upper") {
      c.sweep.q_upper = positive(key, value);
    } else if (key == "sweep.identifiability_delta_chi2") {
      c.sweep.identifiability_delta_chi2 = positive(key, value);
    } else if (key == "sweep.correlation_threshold") {
      c.sweep.correlation_threshold = positive(key, value);
    } else if (key == "freq_shift.tc_upper") {
      c.freq_shift.tc_upper = positive(key, value);
    } else if (key == "freq_shift.max_iterations") {
      c.freq_shift.max_iterations = static_cast<int>(to_int(key, value, 1));
    } else if (key == "thresholds.nonlinearity_residual") {
      c.nonlinearity.residual_threshold = positive(key, value);
    } else if (key == "thresholds.nonlinearity_skew") {
      c.nonlinearity.skew_threshold = positive(key, value);
    } else if (key == "thresholds.qc_cv") {
      c.qc_cv_threshold = positive(key, value);
    } else if (key == "decomposition.p_bulk") {
      c.p_bulk = positive(key, value);
    } else if (key == "decomposition.t0_nm") {
      c.t0_nm = positive(key, value);
    } else if (matches(key, "decomposition.thickness.*") || matches(key, "decomposition.thickness_sigma.*")) {
      const bool sigma = matches(key, "decomposition.thickness_sigma.*");
      const std::string name = key.substr(key.find('.', key.find('.') + 1) + 1);
      decomposition::Treatment t;
      try {
        t = decomposition::parse_treatment(name);
      } catch (const Error& e) {
        throw Error(ErrorCode::Config, key + ": " + e.what());
      }
      if (sigma) {
        const double v = to_double(key, value);
        if (!(v >= 0.0)) throw Error(ErrorCode::Config, key + " must be non-negative");
        c.thickness_sigma_nm[t] = v;
      } else {
        c.thickness_nm[t] = positive(key, value);
      }
    } else if (key == "decomposition.alpha_ms") {
      c.alpha_ms = positive(key, value);
    } else if (key == "decomposition.beta_ma") {
      c.beta_ma = positive(key, value);
    } else if (key == "synth.devices_per_treatment") {
      c.synth.devices_per_treatment = static_cast<int>(to_int(key, value, 1));
    } else if (key == "synth.snr_db") {
      c.synth.snr_db = to_double(key, value);
    } else if (key == "synth.q_c") {
      c.synth.q_c = positive(key, value);
    } else if (key == "synth.attenuation_db") {
      c.synth.attenuation_db = to_double(key, value);
    } else if (key == "synth.freq_shift") {
      c.synth.freq_shift = to_bool(key, value);
    }
  }
  return c;
}

RunConfig load(const std::optional<std::filesystem::path>& file, const Settings& flags, const EnvLookup& lookup) {
  Settings merged;
  if (file) merged = read_ini(*file);
  for (const auto& [k, v] : env_settings(lookup)) merged[k] = v;
  for (const auto& [k, v] : flags) merged[k] = v;
  return build(merged);
}

}  // namespace resloss::config
