#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "resloss/config.hpp"
#include "resloss/decomposition.hpp"
#include "resloss/io.hpp"

// Batch orchestration: trace fits -> sweep fits -> SPR regression and surface
// decomposition, with per-device and campaign reports written to disk.

namespace resloss::pipeline {

struct RunSummary {
  int devices = 0;
  int devices_ok = 0;
  int devices_failed = 0;
  int excluded_traces = 0;
  int issues = 0;
  bool decomposition_ran = false;
  std::vector<std::string> notices;
  /// 0 when every device succeeded, 1 when any device failed.
  int exit_code() const { return devices_failed > 0 ? 1 : 0; }
};

/// Runs every stage the inputs allow and writes the report bundle into
/// config.out_dir. Device failures are recorded, never fatal.
RunSummary run_pipeline(const config::RunConfig& config);

struct DecompositionOutput {
  nlohmann::json report;          // SPR fits, surface table, decomposition
  std::string treatment_csv;      // one row per treatment plus the bulk row
  std::string terms_csv;          // oxide, substrate and hydrocarbon terms
  std::vector<std::string> notices;
  bool ran = false;
};

/// SPR regression over Q_TLS0 (and optionally the single-photon values) and
/// the surface-chemistry split. Missing prerequisites produce notices.
DecompositionOutput decompose(const std::vector<decomposition::SprDevice>& devices,
                              const std::vector<decomposition::SprDevice>& single_photon,
                              decomposition::SurfaceTable table, const config::RunConfig& config);

/// Surface table from defaults, an optional ingested table and config overrides.
decomposition::SurfaceTable surface_table(const std::optional<decomposition::SurfaceTable>& ingested,
                                          const config::RunConfig& config);

/// Plain-text summary of a finished run directory.
std::string render_report(const std::filesystem::path& out_dir);

}  // namespace resloss::pipeline
