#include <fstream>
#include <iostream>
#include <set>
#include <string>

#include <CLI11.hpp>

#include "gnssbench/pipeline.hpp"

using gnssbench::Error;
using gnssbench::ErrorKind;
using gnssbench::cli::RunConfig;
using nlohmann::json;

namespace {

struct Options {
  RunConfig config;
  std::string config_path;
  std::string model = "full15";
  std::string rotation_source = "raw";
  std::string date;
  double cell_size_lat = 0.0;
  double cell_size_lon = 0.0;
};

void add_common(CLI::App *app, Options &o) {
  RunConfig &c = o.config;
  app->add_option("--ref", c.ref_path, "Reference CSV")->group("Inputs");
  app->add_option("--eval", c.eval_path, "Evaluated receiver NMEA log")->group("Inputs");
  app->add_option("--out", c.output_path, "Output directory")->capture_default_str();
  app->add_option("--config", o.config_path, "JSON config file (flags take precedence)");
  app->add_option("--date", o.date, "UTC date of the NMEA log, YYYY-MM-DD");
  app->add_option("--sigma-max", c.sigma_max, "Reference sigma_h gate in metres")->capture_default_str();
  app->add_option("--max-gap", c.max_gap, "Longest reference bracket to interpolate across, s")
      ->capture_default_str();
  app->add_option("--model", o.model, "full15 | no-global-offset | translation-only")
      ->check(CLI::IsMember({"full15", "no-global-offset", "translation-only"}))
      ->capture_default_str();
  app->add_option("--rotation-source", o.rotation_source, "raw | orthonormalized")
      ->check(CLI::IsMember({"raw", "orthonormalized"}))
      ->capture_default_str();
  app->add_flag("--reanchor", c.reanchor, "Start a new local frame every --segment-km");
  app->add_option("--segment-km", c.segment_km, "Re-anchoring radius in km")->capture_default_str();
}

void add_alignment_input(CLI::App *app, Options &o) {
  app->add_option("--alignment", o.config.alignment_path, "alignment.json from the align command");
}

void add_source(CLI::App *app, Options &o) {
  app->add_option("--source", o.config.source, "Stream to analyse: auto | ref | eval")
      ->check(CLI::IsMember({"auto", "ref", "eval"}))
      ->capture_default_str();
}

/// Long option names given on the command line, as config-file keys.
std::set<std::string> explicit_keys(const CLI::App &app) {
  std::set<std::string> keys;
  for (const CLI::App *sub : app.get_subcommands())
    for (const CLI::Option *opt : sub->get_options())
      if (opt->count() > 0) {
        std::string name = opt->get_name(false, true);
        while (!name.empty() && name.front() == '-')
          name.erase(name.begin());
        for (char &ch : name)
          if (ch == '-')
            ch = '_';
        keys.insert(name);
      }
  return keys;
}

int run(const std::string &command, Options &o, const CLI::App &app) {
  RunConfig &c = o.config;
  std::set<std::string> keys = explicit_keys(app);
  if (keys.count("cell_size_lat")) c.cell_size_lat = o.cell_size_lat;
  if (keys.count("cell_size_lon")) c.cell_size_lon = o.cell_size_lon;
  if (keys.count("date")) c.date = o.date;
  c.model = gnssbench::parse_alignment_model(o.model);
  c.rotation_source = o.rotation_source == "raw" ? gnssbench::RotationSource::Raw
                                                 : gnssbench::RotationSource::Orthonormalized;
  if (!o.config_path.empty()) {
    std::ifstream in(o.config_path);
    if (!in)
      throw Error(ErrorKind::Io, "cannot open config file '" + o.config_path + "'");
    json doc;
    try {
      in >> doc;
    } catch (const json::exception &e) {
      throw Error(ErrorKind::Format, std::string("config file: ") + e.what());
    }
    gnssbench::cli::apply_config(c, doc, keys);
  }

  json summary;
  if (command == "align") summary = gnssbench::cli::cmd_align(c);
  else if (command == "report") summary = gnssbench::cli::cmd_report(c);
  else if (command == "continuity") summary = gnssbench::cli::cmd_continuity(c);
  else if (command == "map") summary = gnssbench::cli::cmd_map(c);
  else {
    const auto r = gnssbench::cli::cmd_selftest(c);
    std::cout << r.verdict.dump() << '\n';
    return r.pass ? 0 : 1;
  }

  if (command == "align") {
    for (const json &s : summary["segments"]) {
      std::cout << "segment " << s["segment"].get<std::size_t>() << ": N = " << s["n_points"]
                << ", heading span = " << s["heading_span_deg"].get<double>() << " deg"
                << ", condition number = " << s["condition_number"].get<double>()
                << ", RMS residual = " << s["rms_residual_m"].get<double>() << " m\n";
      for (const json &w : s["warnings"])
        std::cout << "  warning: " << w.get<std::string>() << '\n';
    }
    std::cout << "wrote " << summary["output"].get<std::string>() << '\n';
  } else {
    std::cout << summary.dump() << '\n';
  }
  return 0;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"GNSS receiver evaluation against a reference trajectory"};
  app.require_subcommand(1);
  Options o;

  CLI::App *align = app.add_subcommand("align", "Estimate the eval-to-reference transform");
  add_common(align, o);

  CLI::App *report = app.add_subcommand("report", "Accuracy and availability report");
  add_common(report, o);
  add_alignment_input(report, o);
  report->add_flag("--assume-identity", o.config.assume_identity,
                   "Skip estimation; requires --model translation-only");
  report->add_option("--thresholds", o.config.service_thresholds, "Service-level thresholds, m")
      ->delimiter(',');
  report->add_flag("--signed-errors", o.config.signed_errors,
                   "Keep the sign of lateral/longitudinal/vertical errors in CDF exports");

  CLI::App *continuity = app.add_subcommand("continuity", "Continuity loss and outage analysis");
  add_common(continuity, o);
  add_alignment_input(continuity, o);
  add_source(continuity, o);
  continuity->add_option("--windows", o.config.windows, "Maneuver windows, s")->delimiter(',');
  continuity->add_option("--thresholds", o.config.service_thresholds,
                         "Lateral-error thresholds, m")
      ->delimiter(',');

  CLI::App *map = app.add_subcommand("map", "Gridded GeoJSON performance map");
  add_common(map, o);
  add_alignment_input(map, o);
  add_source(map, o);
  map->add_option("--cell-size", o.config.cell_size, "Cell edge in degrees")->capture_default_str();
  map->add_option("--cell-size-lat", o.cell_size_lat, "Latitude cell edge, degrees");
  map->add_option("--cell-size-lon", o.cell_size_lon, "Longitude cell edge, degrees");

  CLI::App *selftest = app.add_subcommand("selftest", "Synthetic end-to-end recovery check");
  selftest->add_option("--out", o.config.output_path, "Working directory for fixtures")
      ->capture_default_str();
  selftest->add_option("--config", o.config_path, "JSON config file");
  selftest->add_option("--seed", o.config.seed, "Generator seed")->capture_default_str();
  selftest->add_option("--n", o.config.n, "Epochs to generate")->capture_default_str();
  selftest->add_option("--noise", o.config.noise, "Reference position noise sigma, m")
      ->capture_default_str();
  selftest->add_flag("--constant-heading", o.config.constant_heading,
                     "Freeze attitude; expects a rank-deficiency error");
  selftest->add_option("--model", o.model, "Model for the recovery check")
      ->check(CLI::IsMember({"full15", "no-global-offset", "translation-only"}))
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    return run(command, o, app);
  } catch (const Error &e) {
    std::cerr << "error (" << gnssbench::to_string(e.kind()) << "): " << e.what() << '\n';
    return gnssbench::cli::exit_code_for(e.kind());
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
