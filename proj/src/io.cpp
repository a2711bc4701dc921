#include "resloss/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <tuple>

namespace resloss::io {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::size_t line_of_offset(const std::string& text, std::size_t offset) {
  offset = std::min(offset, text.size());
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<long>(offset), '\n'));
}

json parse_json_file(const fs::path& path) {
  const std::string text = read_text(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string(), line_of_offset(text, e.byte), e.what());
  }
}

// CSV with a header naming the columns; `required` must all be present.
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
  std::vector<std::size_t> lines;
};

Table read_csv(const fs::path& path, const std::vector<std::string>& required,
               const std::vector<std::string>& optional, std::vector<Issue>* issues) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path.string(), 0, "cannot open file");
  Table t;
  std::string line;
  std::size_t number = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++number;
    const std::string s = trim(line);
    if (s.empty() || s[0] == '#') continue;
    auto cells = split(s);
    if (!header) {
      for (const auto& name : required)
        if (std::find(cells.begin(), cells.end(), name) == cells.end())
          throw ParseError(path.string(), number, "header lacks column '" + name + "'");
      for (const auto& name : cells)
        if (std::find(required.begin(), required.end(), name) == required.end() &&
            std::find(optional.begin(), optional.end(), name) == optional.end())
          throw ParseError(path.string(), number, "unknown column '" + name + "'");
      t.columns = cells;
      header = true;
      continue;
    }
    if (cells.size() != t.columns.size()) {
      if (issues)
        issues->push_back({path.string(), number, ErrorCode::Parse,
                           "expected " + std::to_string(t.columns.size()) + " fields, found " +
                               std::to_string(cells.size())});
      continue;
    }
    std::vector<double> row;
    try {
      for (const auto& c : cells) row.push_back(parse_double(c));
    } catch (const Error& e) {
      if (issues) issues->push_back({path.string(), number, ErrorCode::Parse, e.what()});
      continue;
    }
    t.rows.push_back(std::move(row));
    t.lines.push_back(number);
  }
  if (!header) throw ParseError(path.string(), 0, "missing header line");
  return t;
}

int column(const Table& t, const std::string& name) {
  const auto it = std::find(t.columns.begin(), t.columns.end(), name);
  return it == t.columns.end() ? -1 : static_cast<int>(it - t.columns.begin());
}

// Columns either from the CSV next to a sidecar or inline under "data".
Table load_columns(const fs::path& sidecar, const json& meta, const std::vector<std::string>& required,
                   const std::vector<std::string>& optional, std::vector<Issue>* issues) {
  if (!meta.contains("data")) {
    fs::path csv = sidecar;
    csv.replace_extension(".csv");
    return read_csv(csv, required, optional, issues);
  }
  const json& data = meta["data"];
  Table t;
  std::size_t n = 0;
  bool first = true;
  for (const auto& name : required)
    if (!data.contains(name)) throw ParseError(sidecar.string(), 0, "data lacks column '" + name + "'");
  std::vector<std::string> names(required);
  for (const auto& name : optional)
    if (data.contains(name)) names.push_back(name);
  for (const auto& name : names) {
    if (!data[name].is_array()) throw ParseError(sidecar.string(), 0, "column '" + name + "' is not an array");
    if (first) n = data[name].size();
    if (data[name].size() != n) throw ParseError(sidecar.string(), 0, "columns differ in length");
    first = false;
  }
  t.columns = names;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> row;
    bool ok = true;
    for (const auto& name : names) {
      const auto& v = data[name][i];
      if (!v.is_number()) {
        ok = false;
        break;
      }
      row.push_back(v.get<double>());
    }
    if (!ok) {
      if (issues)
        issues->push_back({sidecar.string(), 0, ErrorCode::Parse, "non-numeric entry at index " + std::to_string(i)});
      continue;
    }
    t.rows.push_back(std::move(row));
    t.lines.push_back(0);
  }
  return t;
}

template <class T>
T require(const json& j, const char* key, const fs::path& path) {
  if (!j.contains(key)) throw ParseError(path.string(), 0, std::string("missing field '") + key + "'");
  try {
    return j[key].get<T>();
  } catch (const json::exception& e) {
    throw ParseError(path.string(), 0, std::string("field '") + key + "': " + e.what());
  }
}

std::optional<double> optional_number(const json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return j[key].get<double>();
}

json sidecar_for(const fs::path& path) {
  if (path.extension() == ".json") return parse_json_file(path);
  fs::path side = path;
  side.replace_extension(".json");
  if (fs::exists(side)) return parse_json_file(side);
  return json::object();
}

std::string csv_line(const std::vector<double>& values) {
  std::string s;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) s += ',';
    s += format_double(values[i]);
  }
  s += '\n';
  return s;
}

json matrix_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

}  // namespace

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& text) {
  const std::string s = trim(text);
  if (s.empty()) throw Error(ErrorCode::Parse, "empty number");
  const char* begin = s.data();
  if (*begin == '+') ++begin;
  double v = 0.0;
  const auto res = std::from_chars(begin, s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw Error(ErrorCode::Parse, "not a number: '" + s + "'");
  return v;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::InvalidInput, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::InvalidInput, "write failed for " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path.string(), 0, "cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

// ---- single files ------------------------------------------------------------

TraceRecord read_trace(const fs::path& path, std::vector<Issue>* issues) {
  const json meta = sidecar_for(path);
  const fs::path side = path.extension() == ".json" ? path : fs::path(path).replace_extension(".json");
  const Table t = load_columns(side, meta, {"freq_hz", "s21_mag"}, {"s21_sigma"}, issues);
  TraceRecord rec;
  rec.source = path.string();
  rec.device = meta.value("device", path.parent_path().filename().string());
  rec.trace.resonator_id = meta.value("resonator_id", rec.device);
  rec.trace.power_dbm = meta.value("power_dbm", 0.0);
  rec.trace.temperature_k = meta.value("temperature_k", 0.0);
  rec.attenuation_db = optional_number(meta, "attenuation_db");
  const int f = column(t, "freq_hz"), m = column(t, "s21_mag"), s = column(t, "s21_sigma");
  for (const auto& row : t.rows) {
    rec.trace.freq_hz.push_back(row[static_cast<std::size_t>(f)]);
    rec.trace.s21_mag.push_back(row[static_cast<std::size_t>(m)]);
    if (s >= 0) rec.trace.s21_sigma.push_back(row[static_cast<std::size_t>(s)]);
  }
  return rec;
}

SweepRecord read_sweep(const fs::path& path, std::vector<Issue>* issues) {
  const json meta = sidecar_for(path);
  const fs::path side = path.extension() == ".json" ? path : fs::path(path).replace_extension(".json");
  const Table t = load_columns(side, meta, {"nbar", "temperature_k", "q_int", "q_int_sigma"}, {"power_dbm"}, issues);
  SweepRecord rec;
  rec.source = path.string();
  rec.dataset.device = meta.value("device", path.stem().string());
  if (!meta.contains("f0_hz")) throw ParseError(side.string(), 0, "sweep metadata needs f0_hz");
  rec.dataset.omega = 2.0 * std::numbers::pi * meta["f0_hz"].get<double>();
  const int n = column(t, "nbar"), tk = column(t, "temperature_k"), q = column(t, "q_int"),
            qs = column(t, "q_int_sigma"), p = column(t, "power_dbm");
  for (const auto& row : t.rows) {
    lossmodel::SweepPoint pt;
    pt.nbar = row[static_cast<std::size_t>(n)];
    pt.temperature_k = row[static_cast<std::size_t>(tk)];
    pt.q_int = row[static_cast<std::size_t>(q)];
    pt.q_int_sigma = row[static_cast<std::size_t>(qs)];
    if (p >= 0) pt.power_dbm = row[static_cast<std::size_t>(p)];
    rec.dataset.points.push_back(pt);
  }
  return rec;
}

FreqShiftRecord read_freq_shift(const fs::path& path, std::vector<Issue>* issues) {
  const json meta = sidecar_for(path);
  const fs::path side = path.extension() == ".json" ? path : fs::path(path).replace_extension(".json");
  const Table t = load_columns(side, meta, {"temperature_k", "df_over_f"}, {"sigma"}, issues);
  FreqShiftRecord rec;
  rec.source = path.string();
  rec.device = meta.value("device", path.stem().string());
  rec.dataset.resonator_id = meta.value("resonator_id", rec.device);
  if (!meta.contains("f0_hz")) throw ParseError(side.string(), 0, "frequency-shift metadata needs f0_hz");
  rec.dataset.f0_hz = meta["f0_hz"].get<double>();
  const int tk = column(t, "temperature_k"), df = column(t, "df_over_f"), sg = column(t, "sigma");
  for (const auto& row : t.rows)
    rec.dataset.points.push_back({row[static_cast<std::size_t>(tk)], row[static_cast<std::size_t>(df)],
                                  sg >= 0 ? row[static_cast<std::size_t>(sg)] : 0.0});
  return rec;
}

std::vector<DeviceEntry> read_device_registry(const fs::path& path) {
  const json j = parse_json_file(path);
  const json& list = j.is_array() ? j : j.value("devices", json::array());
  std::vector<DeviceEntry> out;
  for (const auto& d : list) {
    DeviceEntry e;
    try {
      e.geometry.label = require<std::string>(d, "label", path);
      e.geometry.p_ms = require<double>(d, "p_ms", path);
      e.geometry.p_ma = optional_number(d, "p_ma");
      e.geometry.p_sa = optional_number(d, "p_sa");
      e.geometry.treatment = decomposition::parse_treatment(require<std::string>(d, "treatment", path));
      e.geometry.type = decomposition::parse_device_type(d.value("type", std::string("CPW")));
      e.geometry.tags = d.value("tags", std::vector<std::string>{});
      e.attenuation_db = optional_number(d, "attenuation_db");
      e.f0_hz = optional_number(d, "f0_hz");
      e.q_tls0 = optional_number(d, "q_tls0");
      e.q_tls0_sigma = optional_number(d, "q_tls0_sigma");
      decomposition::validate(e.geometry);
    } catch (const ParseError&) {
      throw;
    } catch (const std::exception& ex) {
      throw ParseError(path.string(), 0, ex.what());
    }
    out.push_back(e);
  }
  return out;
}

decomposition::SurfaceTable read_surface_table(const fs::path& path) {
  const json j = parse_json_file(path);
  decomposition::SurfaceTable t = decomposition::SurfaceTable::with_default_thicknesses();
  t.t0_nm = j.value("t0_nm", t.t0_nm);
  try {
    for (const auto& e : j.value("entries", json::array())) {
      const auto tr = decomposition::parse_treatment(require<std::string>(e, "treatment", path));
      auto& entry = t.at(tr);
      entry.tan_delta = {e.value("tan_delta", entry.tan_delta.value),
                         e.value("tan_delta_sigma", entry.tan_delta.sigma)};
      entry.thickness_nm = {e.value("thickness_nm", entry.thickness_nm.value),
                            e.value("thickness_sigma_nm", entry.thickness_nm.sigma)};
      entry.hydrocarbon = e.value("hydrocarbon", entry.hydrocarbon);
    }
    if (j.contains("tan_bulk") && !j["tan_bulk"].is_null())
      t.tan_bulk = decomposition::Measured{j["tan_bulk"].value("value", 0.0), j["tan_bulk"].value("sigma", 0.0)};
  } catch (const ParseError&) {
    throw;
  } catch (const std::exception& ex) {
    throw ParseError(path.string(), 0, ex.what());
  }
  for (const auto& e : t.entries)
    if (!(e.thickness_nm.value > 0.0)) throw ParseError(path.string(), 0, "thicknesses must be positive");
  return t;
}

void write_trace(const fs::path& csv_path, const TraceRecord& rec) {
  const auto& t = rec.trace;
  const bool sig = !t.s21_sigma.empty();
  std::string text = sig ? "freq_hz,s21_mag,s21_sigma\n" : "freq_hz,s21_mag\n";
  for (std::size_t i = 0; i < t.freq_hz.size(); ++i)
    text += sig ? csv_line({t.freq_hz[i], t.s21_mag[i], t.s21_sigma[i]}) : csv_line({t.freq_hz[i], t.s21_mag[i]});
  write_text(csv_path, text);
  json meta = {{"kind", "trace"},
               {"device", rec.device},
               {"resonator_id", t.resonator_id},
               {"power_dbm", t.power_dbm},
               {"temperature_k", t.temperature_k}};
  if (rec.attenuation_db) meta["attenuation_db"] = *rec.attenuation_db;
  write_text(fs::path(csv_path).replace_extension(".json"), dump(meta));
}

void write_sweep(const fs::path& csv_path, const lossmodel::SweepDataset& data) {
  std::string text = "nbar,temperature_k,q_int,q_int_sigma,power_dbm\n";
  for (const auto& p : data.points) text += csv_line({p.nbar, p.temperature_k, p.q_int, p.q_int_sigma, p.power_dbm});
  write_text(csv_path, text);
  write_text(fs::path(csv_path).replace_extension(".json"),
             dump({{"kind", "sweep"}, {"device", data.device}, {"f0_hz", data.omega / (2.0 * std::numbers::pi)}}));
}

void write_freq_shift(const fs::path& csv_path, const std::string& device, const freqshift::Dataset& data) {
  std::string text = "temperature_k,df_over_f,sigma\n";
  for (const auto& p : data.points) text += csv_line({p.temperature_k, p.df_over_f, p.sigma});
  write_text(csv_path, text);
  write_text(fs::path(csv_path).replace_extension(".json"),
             dump({{"kind", "freq_shift"},
                   {"device", device},
                   {"resonator_id", data.resonator_id},
                   {"f0_hz", data.f0_hz}}));
}

void write_device_registry(const fs::path& path, const std::vector<DeviceEntry>& devices) {
  json list = json::array();
  for (const auto& d : devices) {
    json e = {{"label", d.geometry.label},
              {"p_ms", d.geometry.p_ms},
              {"treatment", decomposition::to_string(d.geometry.treatment)},
              {"type", decomposition::to_string(d.geometry.type)},
              {"tags", d.geometry.tags}};
    if (d.geometry.p_ma) e["p_ma"] = *d.geometry.p_ma;
    if (d.geometry.p_sa) e["p_sa"] = *d.geometry.p_sa;
    if (d.attenuation_db) e["attenuation_db"] = *d.attenuation_db;
    if (d.f0_hz) e["f0_hz"] = *d.f0_hz;
    if (d.q_tls0) e["q_tls0"] = *d.q_tls0;
    if (d.q_tls0_sigma) e["q_tls0_sigma"] = *d.q_tls0_sigma;
    list.push_back(e);
  }
  write_text(path, dump({{"kind", "devices"}, {"devices", list}}));
}

void write_surface_table(const fs::path& path, const decomposition::SurfaceTable& table) {
  json j = to_json(table);
  j["kind"] = "surface_table";
  write_text(path, dump(j));
}

// ---- registry ------------------------------------------------------------------

Registry ingest(const std::vector<fs::path>& paths) {
  Registry reg;
  std::vector<fs::path> files;
  for (const auto& p : paths) {
    if (fs::is_directory(p)) {
      for (const auto& e : fs::recursive_directory_iterator(p))
        if (e.is_regular_file()) files.push_back(e.path());
    } else if (fs::exists(p)) {
      files.push_back(p);
    } else {
      reg.issues.push_back({p.string(), 0, ErrorCode::InvalidInput, "path does not exist"});
    }
  }
  std::sort(files.begin(), files.end());
  files.erase(std::unique(files.begin(), files.end()), files.end());

  for (const auto& file : files) {
    const auto ext = file.extension().string();
    if (ext == ".csv") {
      fs::path side = file;
      side.replace_extension(".json");
      if (!fs::exists(side))
        reg.issues.push_back({file.string(), 0, ErrorCode::Parse, "data file has no metadata sidecar"});
      continue;  // read through its sidecar
    }
    if (ext != ".json") continue;
    try {
      const json meta = parse_json_file(file);
      const std::string kind = meta.is_object() ? meta.value("kind", std::string()) : std::string();
      if (kind == "trace") {
        reg.traces.push_back(read_trace(file, &reg.issues));
      } else if (kind == "sweep") {
        reg.sweeps.push_back(read_sweep(file, &reg.issues));
      } else if (kind == "freq_shift") {
        reg.freq_shift.push_back(read_freq_shift(file, &reg.issues));
      } else if (kind == "devices") {
        for (auto& d : read_device_registry(file)) {
          const bool dup = std::any_of(reg.devices.begin(), reg.devices.end(),
                                       [&](const DeviceEntry& x) { return x.geometry.label == d.geometry.label; });
          if (dup)
            reg.issues.push_back({file.string(), 0, ErrorCode::DuplicateKey, "device '" + d.geometry.label + "' repeated"});
          else
            reg.devices.push_back(d);
        }
      } else if (kind == "surface_table") {
        if (reg.surface_table)
          reg.issues.push_back({file.string(), 0, ErrorCode::DuplicateKey, "second surface table ignored"});
        else
          reg.surface_table = read_surface_table(file);
      }
    } catch (const ParseError& e) {
      reg.issues.push_back({e.file(), e.line(), ErrorCode::Parse, e.what()});
    } catch (const Error& e) {
      reg.issues.push_back({file.string(), 0, e.code(), e.what()});
    } catch (const std::exception& e) {
      reg.issues.push_back({file.string(), 0, ErrorCode::Parse, e.what()});
    }
  }

  auto key = [](const TraceRecord& r) {
    return std::make_tuple(r.device, r.trace.resonator_id, r.trace.power_dbm, r.trace.temperature_k);
  };
  std::stable_sort(reg.traces.begin(), reg.traces.end(),
                   [&](const TraceRecord& a, const TraceRecord& b) { return key(a) < key(b); });
  std::vector<TraceRecord> unique;
  for (auto& r : reg.traces) {
    if (!unique.empty() && key(unique.back()) == key(r)) {
      reg.issues.push_back({r.source, 0, ErrorCode::DuplicateKey,
                            "trace key repeats " + unique.back().source});
      continue;
    }
    unique.push_back(std::move(r));
  }
  reg.traces = std::move(unique);

  auto dedupe = [&](auto& list, auto device_of) {
    std::stable_sort(list.begin(), list.end(),
                     [&](const auto& a, const auto& b) { return device_of(a) < device_of(b); });
    std::vector<std::decay_t<decltype(list.front())>> kept;
    for (auto& r : list) {
      if (!kept.empty() && device_of(kept.back()) == device_of(r)) {
        reg.issues.push_back({r.source, 0, ErrorCode::DuplicateKey, "device '" + device_of(r) + "' repeated"});
        continue;
      }
      kept.push_back(std::move(r));
    }
    list = std::move(kept);
  };
  if (!reg.sweeps.empty()) dedupe(reg.sweeps, [](const SweepRecord& r) { return r.dataset.device; });
  if (!reg.freq_shift.empty()) dedupe(reg.freq_shift, [](const FreqShiftRecord& r) { return r.device; });
  std::sort(reg.devices.begin(), reg.devices.end(),
            [](const DeviceEntry& a, const DeviceEntry& b) { return a.geometry.label < b.geometry.label; });
  return reg;
}

// ---- reports -----------------------------------------------------------------

json to_json(const decomposition::Measured& m) { return {{"value", m.value}, {"sigma", m.sigma}}; }

json to_json(const lineshape::TraceFit& fit) {
  const auto& p = fit.params;
  return {{"f0_hz", p.f0},
          {"f0_sigma", fit.f0_sigma},
          {"q_tot", p.q_tot},
          {"q_c", p.q_c},
          {"q_c_sigma", fit.q_c_sigma},
          {"q_int", fit.q_int},
          {"q_int_sigma", fit.q_int_sigma},
          {"asymmetry", p.asymmetry},
          {"baseline", p.baseline},
          {"noise_sigma", fit.noise_sigma},
          {"sigma_estimated", fit.sigma_estimated},
          {"chi_square", fit.chi_square},
          {"reduced_chi_square", fit.reduced_chi_square},
          {"converged", fit.converged},
          {"rank_deficient", fit.rank_deficient},
          {"iterations", fit.iterations},
          {"covariance", matrix_json(fit.covariance)}};
}

json to_json(const lossmodel::LossParams& p) {
  json j = {{"q_tls0", p.q_tls0}, {"d", p.d},         {"beta1", p.beta1},
            {"beta2", p.beta2},   {"q_qp0", p.q_qp0}, {"tc", p.tc}};
  j["q_other"] = p.q_other ? json(*p.q_other) : json(nullptr);
  return j;
}

json to_json(const lossmodel::LossFitResult& fit) {
  json sig = json::object();
  for (int i = 0; i < lossmodel::kNumParams; ++i) sig[lossmodel::param_name(i)] = fit.sigma(i);
  return {{"params", to_json(fit.params)},
          {"sigma", sig},
          {"covariance", matrix_json(fit.covariance)},
          {"chi_square", fit.chi_square},
          {"reduced_chi_square", fit.reduced_chi_square},
          {"degrees_of_freedom", fit.degrees_of_freedom},
          {"converged", fit.converged},
          {"rank_deficient", fit.rank_deficient},
          {"q_other_identified", fit.q_other_identified},
          {"q_other_delta_chi2", fit.q_other_delta_chi2},
          {"qp_identified", fit.qp_identified},
          {"qp_delta_chi2", fit.qp_delta_chi2},
          {"tc_qp0_correlation", fit.tc_qp0_correlation},
          {"tc_qp0_correlated", fit.tc_qp0_correlated},
          {"diagnostics", fit.diagnostics}};
}

json to_json(const freqshift::Fit& fit) {
  return {{"q_tls0", fit.params.q_tls0},
          {"q_tls0_sigma", fit.q_tls0_sigma},
          {"tc", fit.params.tc},
          {"tc_sigma", fit.tc_sigma},
          {"alpha_kin", fit.params.alpha_kin},
          {"alpha_sigma", fit.alpha_sigma},
          {"gamma", freqshift::to_string(fit.params.gamma)},
          {"t_ref", fit.t_ref},
          {"chi_square", fit.chi_square},
          {"reduced_chi_square", fit.reduced_chi_square},
          {"converged", fit.converged},
          {"rank_deficient", fit.rank_deficient},
          {"covariance", matrix_json(fit.covariance)}};
}

json to_json(const decomposition::SprFit& fit) {
  json surface = json::object();
  for (const auto& [t, m] : fit.tan_surface) surface[decomposition::to_string(t)] = to_json(m);
  json order = json::array();
  for (auto t : fit.order) order.push_back(decomposition::to_string(t));
  return {{"tan_surface", surface},
          {"l_bulk", to_json(fit.l_bulk)},
          {"tan_bulk", to_json(fit.tan_bulk)},
          {"p_bulk", fit.p_bulk},
          {"order", order},
          {"covariance", matrix_json(fit.covariance)},
          {"chi_square", fit.chi_square},
          {"degrees_of_freedom", fit.degrees_of_freedom},
          {"bulk_unidentifiable", fit.bulk_unidentifiable},
          {"diagnostics", fit.diagnostics}};
}

json to_json(const decomposition::DecompositionResult& r) {
  auto agg = [](const decomposition::Aggregate& a) {
    return json{{"value", a.value.value},
                {"sigma", a.value.sigma},
                {"chi_square", a.chi_square},
                {"degrees_of_freedom", a.degrees_of_freedom}};
  };
  json pairs = json::array();
  for (std::size_t i = 0; i < r.pairs.size(); ++i) {
    const auto& p = r.pairs[i];
    json e = {{"a", decomposition::to_string(p.a)},
              {"b", decomposition::to_string(p.b)},
              {"oxide", to_json(p.oxide)},
              {"substrate", to_json(p.substrate)},
              {"covariance", p.covariance},
              {"degenerate", p.degenerate},
              {"low_precision", p.low_precision}};
    if (i < r.hydrocarbon_per_pair.size()) {
      e["hydrocarbon"] = to_json(r.hydrocarbon_per_pair[i].value);
      e["hydrocarbon_unphysical"] = r.hydrocarbon_per_pair[i].unphysical;
    }
    pairs.push_back(e);
  }
  json j = {{"pairs", pairs},
            {"oxide", agg(r.oxide)},
            {"substrate", agg(r.substrate)},
            {"hydrocarbon", agg(r.hydrocarbon)},
            {"hydrocarbon_unphysical", r.hydrocarbon_unphysical}};
  if (r.intrinsic) {
    j["intrinsic"] = {{"alpha_ms", r.intrinsic->alpha_ms},
                      {"beta_ma", r.intrinsic->beta_ma},
                      {"oxide", to_json(r.intrinsic->oxide)},
                      {"hydrocarbon", to_json(r.intrinsic->hydrocarbon)},
                      {"identity_holds", r.intrinsic->identity_holds}};
  }
  return j;
}

json to_json(const decomposition::ExcludedModelSolution& s) {
  return {{"oxide", s.oxide},
          {"substrate", s.substrate},
          {"hydrocarbon_ma", s.hydrocarbon_ma},
          {"hydrocarbon_sa", s.hydrocarbon_sa},
          {"unphysical", s.unphysical}};
}

json to_json(const decomposition::SurfaceTable& table) {
  json entries = json::array();
  for (const auto& e : table.entries)
    entries.push_back({{"treatment", decomposition::to_string(e.treatment)},
                       {"tan_delta", e.tan_delta.value},
                       {"tan_delta_sigma", e.tan_delta.sigma},
                       {"thickness_nm", e.thickness_nm.value},
                       {"thickness_sigma_nm", e.thickness_nm.sigma},
                       {"hydrocarbon", e.hydrocarbon}});
  json j = {{"t0_nm", table.t0_nm}, {"entries", entries}};
  j["tan_bulk"] = table.tan_bulk ? to_json(*table.tan_bulk) : json(nullptr);
  return j;
}

}  // namespace resloss::io
