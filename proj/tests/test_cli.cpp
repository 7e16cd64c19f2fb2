#include <sys/wait.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "gnssbench/nmea.hpp"
#include "gnssbench/ref_csv.hpp"
#include "gnssbench/synthetic.hpp"
#include "gnssbench/pipeline.hpp"

using namespace gnssbench;
namespace fs = std::filesystem;

namespace {

class TempDir {
public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() /
            ("gnssbench_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path &path() const { return path_; }
  std::string operator/(const std::string &name) const { return (path_ / name).string(); }

private:
  fs::path path_;
};

std::string read_file(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

nlohmann::json read_json(const std::string &path) { return nlohmann::json::parse(read_file(path)); }

void write_files(const std::vector<RefEpoch> &refs, const std::vector<EvalEpoch> &evals,
                 const std::string &ref_path, const std::string &nmea_path) {
  std::ofstream csv(ref_path);
  write_ref_csv(csv, refs);
  std::ofstream nmea(nmea_path);
  const double day_start = std::floor(refs.front().t / 86400.0) * 86400.0;
  for (const EvalEpoch &e : evals)
    nmea << nmea::format_gga(e, day_start) << "\r\n";
}

struct CommandResult {
  int exit_code = -1;
  std::string stderr_text;
};

CommandResult run_cli(const std::string &args, const TempDir &dir) {
  const std::string err = dir / "stderr.txt";
  const std::string cmd = std::string(GNSSBENCH_CLI_PATH) + " " + args + " 2>" + err + " >/dev/null";
  const int status = std::system(cmd.c_str());
  CommandResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.stderr_text = read_file(err);
  return r;
}

cli::RunConfig config_for(const TempDir &dir, const std::string &out = "out") {
  cli::RunConfig c;
  c.ref_path = dir / "ref.csv";
  c.eval_path = dir / "eval.nmea";
  c.output_path = dir / out;
  return c;
}

/// Fixture whose stored files satisfy the forward model: eval positions are
/// taken as the NMEA reader will see them and references rebuilt from those.
void write_exact_fixture(const TempDir &dir, std::size_t n) {
  synthetic::FixtureConfig fc;
  fc.route.n = n;
  synthetic::Fixture fx = synthetic::make_fixture(fc);
  const double day_start = std::floor(fx.refs.front().t / 86400.0) * 86400.0;
  std::stringstream nmea_text;
  for (const EvalEpoch &e : fx.evals)
    nmea_text << nmea::format_gga(e, day_start) << "\r\n";
  const nmea::ReadResult parsed = nmea::read_nmea(nmea_text, {day_start});
  ASSERT_EQ(parsed.epochs.size(), fx.refs.size());
  for (std::size_t i = 0; i < fx.refs.size(); ++i) {
    const Eigen::Vector3d x_eval = fx.frame.to_ned(parsed.epochs[i].position).vec();
    const Eigen::Matrix3d r_body = euler_to_rotation(fx.refs[i].attitude).m;
    const Eigen::Vector3d x_ref =
        fx.truth.rotation * x_eval + r_body * fx.truth.y_body + fx.truth.y_eval;
    fx.refs[i].position = fx.frame.to_geodetic(LocalVector::from(x_ref));
  }
  std::ofstream csv(dir / "ref.csv");
  write_ref_csv(csv, fx.refs);
  std::ofstream(dir / "eval.nmea") << nmea_text.str();
}

void write_default_fixture(const TempDir &dir, std::size_t n = 600) {
  synthetic::FixtureConfig fc;
  fc.route.n = n;
  const synthetic::Fixture fx = synthetic::make_fixture(fc);
  write_files(fx.refs, fx.evals, dir / "ref.csv", dir / "eval.nmea");
}

} // namespace

TEST(Cli, ExitCodeMapping) {
  EXPECT_EQ(cli::exit_code_for(ErrorKind::Format), 2);
  EXPECT_EQ(cli::exit_code_for(ErrorKind::Checksum), 2);
  EXPECT_EQ(cli::exit_code_for(ErrorKind::Domain), 2);
  EXPECT_EQ(cli::exit_code_for(ErrorKind::InsufficientData), 3);
  EXPECT_EQ(cli::exit_code_for(ErrorKind::RankDeficient), 3);
  EXPECT_EQ(cli::exit_code_for(ErrorKind::EmptyReport), 3);
  EXPECT_EQ(cli::exit_code_for(ErrorKind::Io), 4);
}

TEST(Cli, Sha256) {
  TempDir dir;
  std::ofstream(dir / "abc.txt") << "abc";
  EXPECT_EQ(cli::file_sha256(dir / "abc.txt"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Cli, FlagsOverrideConfigFile) {
  cli::RunConfig c;
  c.sigma_max = 0.2; // given on the command line
  const nlohmann::json doc = {{"sigma_max", 0.05}, {"max_gap", 0.3}, {"cell_size", 0.01}};
  cli::apply_config(c, doc, {"sigma_max"});
  EXPECT_EQ(c.sigma_max, 0.2);
  EXPECT_EQ(c.max_gap, 0.3);
  EXPECT_EQ(c.cell_size, 0.01);
  EXPECT_EQ(cli::to_json(c)["max_gap"], 0.3);
}

TEST(Cli, ValidateRejectsBadParameters) {
  cli::RunConfig c;
  c.sigma_max = -1.0;
  EXPECT_THROW(cli::validate(c), Error);
  c = {};
  c.windows = {4.0, 0.0};
  EXPECT_THROW(cli::validate(c), Error);
  c = {};
  c.source = "both";
  EXPECT_THROW(cli::validate(c), Error);
}

TEST(Cli, MissingColumnExitsTwoAndNamesIt) {
  TempDir dir;
  write_default_fixture(dir, 50);
  std::string csv = read_file(dir / "ref.csv");
  csv.replace(csv.find("yaw_deg"), 7, "heading");
  std::ofstream(dir / "ref.csv") << csv;
  const CommandResult r = run_cli("align --ref " + (dir / "ref.csv") + " --eval " +
                                      (dir / "eval.nmea") + " --out " + (dir / "out"),
                                  dir);
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_NE(r.stderr_text.find("yaw_deg"), std::string::npos) << r.stderr_text;
}

TEST(Cli, NoValidFixesExitsThree) {
  TempDir dir;
  synthetic::FixtureConfig fc;
  fc.route.n = 300;
  synthetic::Fixture fx = synthetic::make_fixture(fc);
  for (EvalEpoch &e : fx.evals) {
    e.position_valid = false;
    e.fix_quality = 0;
  }
  write_files(fx.refs, fx.evals, dir / "ref.csv", dir / "eval.nmea");
  const CommandResult r = run_cli("align --ref " + (dir / "ref.csv") + " --eval " +
                                      (dir / "eval.nmea") + " --out " + (dir / "out"),
                                  dir);
  EXPECT_EQ(r.exit_code, 3) << r.stderr_text;
}

TEST(Cli, MissingFileExitsFour) {
  TempDir dir;
  const CommandResult r = run_cli("align --ref " + (dir / "nope.csv") + " --eval " +
                                      (dir / "nope.nmea") + " --out " + (dir / "out"),
                                  dir);
  EXPECT_EQ(r.exit_code, 4);
}

TEST(Cli, BadFlagValueExitsTwo) {
  TempDir dir;
  write_default_fixture(dir, 50);
  const CommandResult r = run_cli("align --ref " + (dir / "ref.csv") + " --eval " +
                                      (dir / "eval.nmea") + " --sigma-max -3",
                                  dir);
  EXPECT_EQ(r.exit_code, 2);
}

TEST(Cli, SelftestPasses) {
  TempDir dir;
  EXPECT_EQ(run_cli("selftest --out " + (dir / "st"), dir).exit_code, 0);
  EXPECT_EQ(run_cli("selftest --constant-heading --out " + (dir / "st2"), dir).exit_code, 0);
  EXPECT_EQ(run_cli("selftest --n 10 --out " + (dir / "st3"), dir).exit_code, 0);
}

TEST(Cli, AlignWritesSolution) {
  TempDir dir;
  write_default_fixture(dir);
  const cli::RunConfig c = config_for(dir);
  cli::cmd_align(c);
  const nlohmann::json doc = read_json(dir / "out/alignment.json");
  EXPECT_EQ(doc["format"], "gnssbench.alignment/1");
  ASSERT_EQ(doc["segments"].size(), 1u);
  EXPECT_EQ(doc["inputs"][0]["role"], "reference");
  EXPECT_EQ(doc["inputs"][0]["sha256"], cli::file_sha256(c.ref_path));
}

TEST(Cli, NoiseFreeReportIsExact) {
  TempDir dir;
  write_exact_fixture(dir, 1000);
  cli::RunConfig c = config_for(dir);
  cli::cmd_align(c);
  c.alignment_path = dir / "out/alignment.json";
  cli::cmd_report(c);
  const nlohmann::json doc = read_json(dir / "out/report.json");
  const nlohmann::json &acc = doc["accuracy"]["evaluated"];
  for (const char *axis : {"lateral_m", "longitudinal_m", "horizontal_m", "vertical_m"})
    for (const char *p : {"p68", "p95", "p99"})
      EXPECT_LE(acc[axis][p].get<double>(), 1e-9) << axis << " " << p;
  EXPECT_EQ(doc["service_levels"]["evaluated"]["levels"][0]["availability"], 1.0);
  for (const char *f : {"cdf_lateral.csv", "cdf_horizontal.csv", "cdf_ref_sats.csv"})
    EXPECT_TRUE(fs::exists(dir / ("out/" + std::string(f)))) << f;
}

TEST(Cli, HalfNormalLateralErrorsGiveWhichLaneShare) {
  TempDir dir;
  synthetic::FixtureConfig fc;
  fc.route.n = 20000;
  fc.route.heading_span_deg = 720.0;
  const synthetic::Fixture fx = synthetic::make_fixture(fc, synthetic::Truth{});
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<EvalEpoch> evals = fx.evals;
  for (std::size_t i = 0; i < evals.size(); ++i) {
    const Eigen::Matrix3d r_body = euler_to_rotation(fx.refs[i].attitude).m;
    const Eigen::Vector3d x = fx.route[i].ref_ned - g(rng) * r_body.col(1);
    evals[i].position = fx.frame.to_geodetic(LocalVector::from(x));
  }
  write_files(fx.refs, evals, dir / "ref.csv", dir / "eval.nmea");
  cli::RunConfig c = config_for(dir);
  c.assume_identity = true;
  c.model = AlignmentModel::TranslationOnly;
  cli::cmd_report(c);
  const nlohmann::json doc = read_json(dir / "out/report.json");
  const double which_lane =
      doc["service_levels"]["evaluated"]["levels"][1]["availability"].get<double>();
  EXPECT_NEAR(which_lane, std::erf(1.5 / std::sqrt(2.0)), 0.01);
  EXPECT_NEAR(doc["accuracy"]["evaluated"]["lateral_m"]["p68"].get<double>(), 0.994, 0.03);
  EXPECT_LT(doc["accuracy"]["evaluated"]["longitudinal_m"]["p99"].get<double>(), 1e-6);
}

TEST(Cli, ReportModeFractions) {
  TempDir dir;
  synthetic::FixtureConfig fc;
  fc.route.n = 4000;
  fc.ref_modes = ModeFractions{0.5, 0.2, 0.0, 0.25, 0.05};
  const synthetic::Fixture fx = synthetic::make_fixture(fc);
  write_files(fx.refs, fx.evals, dir / "ref.csv", dir / "eval.nmea");
  std::array<std::size_t, 5> counts{};
  for (const RefEpoch &r : fx.refs)
    ++counts[static_cast<std::size_t>(r.mode)];
  cli::RunConfig c = config_for(dir);
  c.sigma_max = 100.0;
  cli::cmd_align(c);
  c.alignment_path = dir / "out/alignment.json";
  cli::cmd_report(c);
  const nlohmann::json modes = read_json(dir / "out/report.json")["position_modes"]["reference"];
  for (PositionMode m : kAllModes)
    EXPECT_EQ(modes[std::string(to_string(m))].get<double>(),
              static_cast<double>(counts[static_cast<std::size_t>(m)]) / 4000.0)
        << to_string(m);
}

TEST(Cli, ContinuityOnFixedOnlyReferenceIsLossFree) {
  TempDir dir;
  write_default_fixture(dir);
  cli::RunConfig c = config_for(dir);
  c.source = "ref";
  cli::cmd_continuity(c);
  const nlohmann::json doc = read_json(dir / "out/continuity.json");
  for (const auto &row : doc["tables"]["modes"]["loss_probability"])
    for (const auto &cell : row)
      EXPECT_EQ(cell, 0.0);
  EXPECT_TRUE(doc["outages"].is_object());
  EXPECT_TRUE(fs::exists(dir / "out/continuity_satellites.csv"));
}

TEST(Cli, MapIsByteDeterministic) {
  TempDir dir;
  write_default_fixture(dir);
  cli::RunConfig c = config_for(dir, "a");
  c.source = "ref";
  cli::cmd_map(c);
  c.output_path = dir / "b";
  cli::cmd_map(c);
  EXPECT_EQ(read_file(dir / "a/perfmap.geojson"), read_file(dir / "b/perfmap.geojson"));
  EXPECT_EQ(read_file(dir / "a/perfmap_cells.csv"), read_file(dir / "b/perfmap_cells.csv"));
  const nlohmann::json g = read_json(dir / "a/perfmap.geojson");
  std::size_t total = 0;
  for (const auto &f : g["features"])
    total += f["properties"]["epoch_count"].get<std::size_t>();
  EXPECT_EQ(total, 600u);
}

TEST(Cli, FailedCommandLeavesNoPartialOutputs) {
  TempDir dir;
  write_default_fixture(dir, 4);
  const cli::RunConfig c = config_for(dir);
  EXPECT_THROW(cli::cmd_align(c), Error);
  if (fs::exists(c.output_path)) {
    EXPECT_TRUE(fs::is_empty(c.output_path));
  }
}
