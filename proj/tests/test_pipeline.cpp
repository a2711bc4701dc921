#include <algorithm>
#include <filesystem>
#include <map>
#include <sstream>

#include "doctest.h"
#include "resloss/config.hpp"
#include "resloss/io.hpp"
#include "resloss/pipeline.hpp"
#include "resloss/synth.hpp"

using namespace resloss;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("resloss_test_pipeline_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).generic_string()] = io::read_text(e.path());
  }
  return out;
}

int count_lines(const std::string& text) { return static_cast<int>(std::count(text.begin(), text.end(), '\n')); }

config::RunConfig run_config(const fs::path& in, const fs::path& out, int jobs) {
  config::RunConfig c;
  c.inputs = {in.string()};
  c.out_dir = out.string();
  c.jobs = jobs;
  return c;
}

}  // namespace

TEST_CASE("full synthetic campaign runs end to end and reproducibly") {
  TempDir dir("campaign");
  synth::write_campaign(synth::generate_campaign(synth::default_campaign(3)), dir.path / "data");

  const pipeline::RunSummary first = pipeline::run_pipeline(run_config(dir.path / "data", dir.path / "out1", 1));
  CHECK(first.devices == 12);
  CHECK(first.devices_ok == 12);
  CHECK(first.exit_code() == 0);
  CHECK(first.decomposition_ran);

  const std::string table = io::read_text(dir.path / "out1" / "decomposition.csv");
  CHECK(table.rfind("row,tan_delta,sigma,thickness_nm,thickness_sigma_nm\n", 0) == 0);
  CHECK(count_lines(table) == 6);
  for (const char* row : {"native,", "BOE,", "longBOE,", "triacid,", "bulk,"}) {
    CHECK(table.find(std::string("\n") + row) != std::string::npos);
  }
  for (const char* f : {"campaign.json", "summary.json", "exclusions.csv", "decomposition_terms.csv",
                        "plots/qint_vs_nbar.csv", "plots/qtls_vs_pms.csv", "plots/freq_shift.csv",
                        "devices/BOE_1.json"}) {
    CHECK_MESSAGE(fs::exists(dir.path / "out1" / f), f);
  }

  pipeline::run_pipeline(run_config(dir.path / "data", dir.path / "out2", 1));
  pipeline::run_pipeline(run_config(dir.path / "data", dir.path / "out3", 3));
  const auto a = snapshot(dir.path / "out1");
  CHECK(a == snapshot(dir.path / "out2"));
  CHECK(a == snapshot(dir.path / "out3"));

  const std::string report = pipeline::render_report(dir.path / "out1");
  CHECK(report.find("BOE_1") != std::string::npos);
}

TEST_CASE("a single device without a registry skips the decomposition") {
  TempDir dir("single");
  synth::CampaignSpec spec = synth::default_campaign(4);
  spec.devices.resize(1);
  synth::write_campaign(synth::generate_campaign(spec), dir.path / "data");
  fs::remove(dir.path / "data" / "devices.json");

  const pipeline::RunSummary s = pipeline::run_pipeline(run_config(dir.path / "data", dir.path / "out", 1));
  CHECK(s.devices == 1);
  CHECK(s.devices_ok == 1);
  CHECK_FALSE(s.decomposition_ran);
  CHECK(std::find(s.notices.begin(), s.notices.end(), "decomposition skipped: no device registry") !=
        s.notices.end());
  CHECK(fs::exists(dir.path / "out" / "summary.json"));
  CHECK_FALSE(fs::exists(dir.path / "out" / "decomposition.csv"));
}

TEST_CASE("broken files are reported and the run continues") {
  TempDir dir("broken");
  synth::CampaignSpec spec = synth::default_campaign(4);
  spec.devices.resize(1);
  synth::write_campaign(synth::generate_campaign(spec), dir.path / "data");
  io::write_text(dir.path / "data" / "junk.csv", "freq_hz,s21_mag\n1,1\n");

  const pipeline::RunSummary s = pipeline::run_pipeline(run_config(dir.path / "data", dir.path / "out", 1));
  CHECK(s.devices_ok == 1);
  CHECK(s.issues >= 1);
  const std::string exclusions = io::read_text(dir.path / "out" / "exclusions.csv");
  CHECK(exclusions.find("junk.csv") != std::string::npos);
}

TEST_CASE("decomposition needs enough devices per treatment") {
  config::RunConfig c;
  std::vector<decomposition::SprDevice> few{{"a", 1e-3, 5e5, 1e4, decomposition::Treatment::Native},
                                            {"b", 2e-3, 3e5, 1e4, decomposition::Treatment::BOE}};
  const auto out = pipeline::decompose(few, {}, pipeline::surface_table(std::nullopt, c), c);
  CHECK_FALSE(out.ran);
  CHECK_FALSE(out.notices.empty());
}

TEST_CASE("surface table overrides") {
  config::RunConfig c;
  c.t0_nm = 2.5;
  c.thickness_nm[decomposition::Treatment::LongBOE] = 1.7;
  c.thickness_sigma_nm[decomposition::Treatment::LongBOE] = 0.2;
  const auto t = pipeline::surface_table(std::nullopt, c);
  CHECK(t.t0_nm == 2.5);
  CHECK(t.at(decomposition::Treatment::LongBOE).thickness_nm.value == 1.7);
  CHECK(t.at(decomposition::Treatment::LongBOE).thickness_nm.sigma == 0.2);
  CHECK(t.at(decomposition::Treatment::Triacid).thickness_nm.value == 6.0);
}
