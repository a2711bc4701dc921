#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "resloss/decomposition.hpp"
#include "resloss/error.hpp"
#include "resloss/freqshift.hpp"
#include "resloss/lineshape.hpp"
#include "resloss/lossmodel.hpp"

// File formats. Every data file is a CSV with a JSON sidecar of the same stem
// whose "kind" names the content; a sidecar may instead carry the columns
// inline under "data". Registry files (device list, surface table) are JSON.

namespace resloss::io {

using nlohmann::json;

/// 17 significant digits, locale independent; "nan", "inf", "-inf".
std::string format_double(double v);
/// Parses a double written by format_double or any plain decimal. Throws
/// Error(Parse) on trailing garbage.
double parse_double(const std::string& text);

struct TraceRecord {
  std::string device;
  lineshape::Trace trace;
  std::optional<double> attenuation_db;
  std::string source;  // file the record came from
};

struct SweepRecord {
  lossmodel::SweepDataset dataset;
  std::string source;
};

struct FreqShiftRecord {
  std::string device;
  freqshift::Dataset dataset;
  std::string source;
};

struct DeviceEntry {
  decomposition::DeviceGeometry geometry;
  std::optional<double> attenuation_db;
  std::optional<double> f0_hz;
  std::optional<double> q_tls0;  // previously fitted, for stand-alone decomposition
  std::optional<double> q_tls0_sigma;
};

struct Issue {
  std::string file;
  std::size_t line = 0;  // 1-based, 0 for the whole file
  ErrorCode code = ErrorCode::Parse;
  std::string message;
};

struct Registry {
  std::vector<TraceRecord> traces;  // sorted by (device, resonator, power, temperature)
  std::vector<SweepRecord> sweeps;
  std::vector<FreqShiftRecord> freq_shift;
  std::vector<DeviceEntry> devices;
  std::optional<decomposition::SurfaceTable> surface_table;
  std::vector<Issue> issues;  // malformed rows, unreadable files, duplicates
};

/// Loads files and directories (recursively, in sorted order). Rows that fail
/// to parse are dropped and reported; later duplicates of a trace key are
/// dropped and reported as DuplicateKey.
Registry ingest(const std::vector<std::filesystem::path>& paths);

// ---- single files ------------------------------------------------------------

/// Reads a trace from its CSV or sidecar. Row problems go to `issues`;
/// unreadable files throw ParseError.
TraceRecord read_trace(const std::filesystem::path& path, std::vector<Issue>* issues = nullptr);
SweepRecord read_sweep(const std::filesystem::path& path, std::vector<Issue>* issues = nullptr);
FreqShiftRecord read_freq_shift(const std::filesystem::path& path, std::vector<Issue>* issues = nullptr);
std::vector<DeviceEntry> read_device_registry(const std::filesystem::path& path);
decomposition::SurfaceTable read_surface_table(const std::filesystem::path& path);

/// Writers take the CSV path; the sidecar lands next to it.
void write_trace(const std::filesystem::path& csv_path, const TraceRecord& record);
void write_sweep(const std::filesystem::path& csv_path, const lossmodel::SweepDataset& data);
void write_freq_shift(const std::filesystem::path& csv_path, const std::string& device,
                      const freqshift::Dataset& data);
void write_device_registry(const std::filesystem::path& path, const std::vector<DeviceEntry>& devices);
void write_surface_table(const std::filesystem::path& path, const decomposition::SurfaceTable& table);

/// Creates parent directories and writes the text in one go.
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);
/// Pretty JSON with two-space indent and a trailing newline.
std::string dump(const json& j);

// ---- reports -----------------------------------------------------------------

json to_json(const lineshape::TraceFit& fit);
json to_json(const lossmodel::LossParams& p);
json to_json(const lossmodel::LossFitResult& fit);
json to_json(const freqshift::Fit& fit);
json to_json(const decomposition::SprFit& fit);
json to_json(const decomposition::DecompositionResult& result);
json to_json(const decomposition::ExcludedModelSolution& s);
json to_json(const decomposition::SurfaceTable& table);
json to_json(const decomposition::Measured& m);

}  // namespace resloss::io
