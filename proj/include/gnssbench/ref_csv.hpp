#pragma once

#include <array>
#include <cmath>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "gnssbench/detail/text.hpp"
#include "gnssbench/epochs.hpp"
#include "gnssbench/error.hpp"

namespace gnssbench {

inline constexpr std::array<std::string_view, 12> kRefCsvColumns = {
    "time_unix_s", "lat_deg",   "lon_deg",   "alt_m",    "roll_deg", "pitch_deg",
    "yaw_deg",     "sigma_h_m", "pos_mode",  "num_sats", "hdop",     "corr_age_s"};

struct RefCsvResult {
  std::vector<RefEpoch> epochs;
  std::size_t rows = 0;
  std::size_t skipped_rows = 0;
  std::vector<std::string> diagnostics;
};

namespace detail {

/// Degrees value whose conversion reproduces `radians` bit for bit, so a
/// parsed epoch written back out re-parses identically.
inline double degrees_for_radians(double radians) {
  const double guess = rad_to_deg(radians);
  if (deg_to_rad(guess) == radians)
    return guess;
  double up = guess, down = guess;
  for (int i = 0; i < 8; ++i) {
    up = std::nextafter(up, INFINITY);
    down = std::nextafter(down, -INFINITY);
    if (deg_to_rad(up) == radians)
      return up;
    if (deg_to_rad(down) == radians)
      return down;
  }
  return guess;
}

inline double attitude_from_degrees(double deg) {
  const double rad = deg_to_rad(deg);
  return (rad >= -std::numbers::pi && rad < std::numbers::pi) ? rad : wrap_pi(rad);
}

} // namespace detail

/// Reads the ground-truth CSV. Missing columns and non-increasing time are
/// format errors; rows that fail to parse are counted and skipped.
inline RefCsvResult parse_ref_csv(std::istream &in, std::size_t max_diagnostics = 50) {
  using detail::to_double;
  using detail::to_int;
  using detail::trim;

  RefCsvResult out;
  std::string line;
  if (!std::getline(in, line))
    throw Error(ErrorKind::Format, "reference CSV is empty (header row required)");

  std::vector<std::string_view> cells;
  detail::split(trim(line), ',', cells);
  std::array<std::size_t, kRefCsvColumns.size()> col{};
  for (std::size_t k = 0; k < kRefCsvColumns.size(); ++k) {
    std::size_t found = cells.size();
    for (std::size_t c = 0; c < cells.size(); ++c)
      if (trim(cells[c]) == kRefCsvColumns[k])
        found = c;
    if (found == cells.size())
      throw Error(ErrorKind::Format,
                  "reference CSV missing column '" + std::string(kRefCsvColumns[k]) + "'");
    col[k] = found;
  }
  const std::size_t width = cells.size();

  auto skip = [&](const std::string &why) {
    ++out.skipped_rows;
    if (out.diagnostics.size() < max_diagnostics)
      out.diagnostics.push_back("row " + std::to_string(out.rows) + ": " + why);
  };

  while (std::getline(in, line)) {
    const std::string_view row = trim(line);
    if (row.empty())
      continue;
    ++out.rows;
    detail::split(row, ',', cells);
    if (cells.size() != width) {
      skip("expected " + std::to_string(width) + " cells, got " + std::to_string(cells.size()));
      continue;
    }
    auto cell = [&](std::size_t k) { return trim(cells[col[k]]); };

    const auto t = to_double(cell(0));
    const auto lat = to_double(cell(1));
    const auto lon = to_double(cell(2));
    const auto alt = to_double(cell(3));
    const auto roll = to_double(cell(4));
    const auto pitch = to_double(cell(5));
    const auto yaw = to_double(cell(6));
    const auto sigma = to_double(cell(7));
    const auto mode = parse_position_mode(cell(8));
    const auto sats = to_int(cell(9));
    if (!t || !lat || !lon || !alt || !roll || !pitch || !yaw || !sigma || !mode || !sats ||
        !std::isfinite(*t)) {
      skip("unparseable field");
      continue;
    }
    RefEpoch e;
    e.t = *t;
    e.position = {*lat, *lon, *alt};
    e.attitude = {detail::attitude_from_degrees(*yaw), deg_to_rad(*pitch),
                  detail::attitude_from_degrees(*roll)};
    e.sigma_h = *sigma;
    e.mode = *mode;
    e.num_sats = static_cast<int>(*sats);
    if (!cell(10).empty()) {
      e.hdop = to_double(cell(10));
      if (!e.hdop || *e.hdop <= 0.0) {
        skip("hdop must be positive");
        continue;
      }
    }
    if (!cell(11).empty()) {
      e.corr_age = to_double(cell(11));
      if (!e.corr_age || *e.corr_age < 0.0) {
        skip("corr_age_s must be non-negative");
        continue;
      }
    }
    if (!is_valid(e.position) || e.sigma_h < 0.0 || *sats < 0 ||
        std::abs(e.attitude.pitch) > std::numbers::pi / 2) {
      skip("value out of range");
      continue;
    }
    if (!out.epochs.empty() && e.t <= out.epochs.back().t)
      throw Error(ErrorKind::Format, "reference CSV time not strictly increasing at row " +
                                         std::to_string(out.rows));
    out.epochs.push_back(e);
  }
  return out;
}

inline void write_ref_csv_header(std::ostream &os) {
  for (std::size_t k = 0; k < kRefCsvColumns.size(); ++k)
    os << (k ? "," : "") << kRefCsvColumns[k];
  os << '\n';
}

inline void append_ref_csv_row(std::string &row, const RefEpoch &e) {
  using detail::append_double;
  append_double(row, e.t);
  row += ',';
  append_double(row, e.position.latitude);
  row += ',';
  append_double(row, e.position.longitude);
  row += ',';
  append_double(row, e.position.altitude);
  row += ',';
  append_double(row, detail::degrees_for_radians(e.attitude.roll));
  row += ',';
  append_double(row, detail::degrees_for_radians(e.attitude.pitch));
  row += ',';
  append_double(row, detail::degrees_for_radians(e.attitude.yaw));
  row += ',';
  append_double(row, e.sigma_h);
  row += ',';
  row += to_string(e.mode);
  row += ',';
  row += std::to_string(e.num_sats);
  row += ',';
  if (e.hdop)
    append_double(row, *e.hdop);
  row += ',';
  if (e.corr_age)
    append_double(row, *e.corr_age);
  row += '\n';
}

inline void write_ref_csv(std::ostream &os, const std::vector<RefEpoch> &epochs) {
  write_ref_csv_header(os);
  std::string row;
  for (const RefEpoch &e : epochs) {
    row.clear();
    append_ref_csv_row(row, e);
    os << row;
  }
}

} // namespace gnssbench
