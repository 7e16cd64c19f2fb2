#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gnssbench/align.hpp"

namespace gnssbench::cli {

/// Resolved settings for one invocation. Precedence: flags > config file >
/// these defaults.
struct RunConfig {
  std::string ref_path;
  std::string eval_path;
  std::string output_path = ".";
  std::string alignment_path;
  std::string source = "auto"; // continuity/map stream: auto | ref | eval
  std::optional<std::string> date; // YYYY-MM-DD for NMEA time of day

  double sigma_max = 0.10;
  double max_gap = 0.5;
  std::vector<double> windows = {4.0, 7.0, 15.0, 30.0};
  std::vector<double> service_thresholds = {5.0, 1.5, 0.5, 0.3};
  double cell_size = 0.001;
  std::optional<double> cell_size_lat;
  std::optional<double> cell_size_lon;
  AlignmentModel model = AlignmentModel::Full15;
  RotationSource rotation_source = RotationSource::Raw;
  bool assume_identity = false;
  bool signed_errors = false;
  bool reanchor = false;
  double segment_km = 100.0;

  // selftest
  std::uint64_t seed = 1;
  std::size_t n = 1000;
  double noise = 0.0;
  bool constant_heading = false;
};

nlohmann::json to_json(const RunConfig &c);

/// Applies keys from a JSON config document, skipping any in `explicit_keys`
/// (set on the command line).
void apply_config(RunConfig &c, const nlohmann::json &doc, const std::set<std::string> &explicit_keys);

/// Throws Error(Domain) when a numeric parameter is out of range.
void validate(const RunConfig &c);

/// Exit code for a library error kind.
int exit_code_for(ErrorKind kind);

/// Each command writes its artefacts into config.output_path (staged to
/// temporary files and renamed only on success) and returns a summary.
nlohmann::json cmd_align(const RunConfig &config);
nlohmann::json cmd_report(const RunConfig &config);
nlohmann::json cmd_continuity(const RunConfig &config);
nlohmann::json cmd_map(const RunConfig &config);

struct SelftestResult {
  bool pass = false;
  nlohmann::json verdict;
};
SelftestResult cmd_selftest(const RunConfig &config);

/// Hex SHA-256 of a file's bytes.
std::string file_sha256(const std::string &path);

} // namespace gnssbench::cli
