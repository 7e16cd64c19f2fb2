#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gnssbench/epochs.hpp"
#include "gnssbench/error.hpp"
#include "gnssbench/detail/text.hpp"

namespace gnssbench::nmea {

/// XOR of every byte of the sentence body (between '$' and '*').
inline std::uint8_t checksum(std::string_view body) {
  std::uint8_t sum = 0;
  for (char c : body)
    sum ^= static_cast<std::uint8_t>(c);
  return sum;
}

inline std::string checksum_hex(std::uint8_t sum) {
  constexpr char digits[] = "0123456789ABCDEF";
  return {digits[sum >> 4], digits[sum & 0x0F]};
}

/// "$" + body + "*" + two uppercase hex digits.
inline std::string frame_sentence(std::string_view body) {
  std::string out;
  out.reserve(body.size() + 4);
  out += '$';
  out += body;
  out += '*';
  out += checksum_hex(checksum(body));
  return out;
}

struct GgaFix {
  double time_of_day = 0.0; // seconds since UTC midnight
  GeodeticPosition position; // altitude is ellipsoidal (MSL + geoid separation)
  bool position_valid = false;
  int quality = 0;
  int num_sats = 0;
  std::optional<double> hdop;
  std::optional<double> corr_age;
};

struct GsaInfo {
  std::optional<double> hdop;
};

enum class Status { Gga, Gsa, Skip, ChecksumError, ParseError };

struct SentenceResult {
  Status status = Status::Skip;
  GgaFix gga;
  GsaInfo gsa;
  std::string message; // set for errors
};

namespace detail {

inline std::optional<double> parse_hhmmss(std::string_view s) {
  s = gnssbench::detail::trim(s);
  if (s.size() < 6)
    return std::nullopt;
  const auto hh = gnssbench::detail::to_int(s.substr(0, 2));
  const auto mm = gnssbench::detail::to_int(s.substr(2, 2));
  const auto ss = gnssbench::detail::to_double(s.substr(4));
  if (!hh || !mm || !ss || *hh > 23 || *mm > 59 || *ss < 0.0 || *ss >= 61.0)
    return std::nullopt;
  return static_cast<double>(*hh * 3600 + *mm * 60) + *ss;
}

/// ddmm.mmmm / dddmm.mmmm -> signed decimal degrees.
inline std::optional<double> parse_coordinate(std::string_view value, std::string_view hemi,
                                              int degree_digits) {
  value = gnssbench::detail::trim(value);
  hemi = gnssbench::detail::trim(hemi);
  const std::size_t dot = value.find('.');
  const std::size_t int_len = dot == std::string_view::npos ? value.size() : dot;
  if (int_len < 3 || int_len > static_cast<std::size_t>(degree_digits) + 2)
    return std::nullopt;
  const auto deg = gnssbench::detail::to_int(value.substr(0, int_len - 2));
  const auto minutes = gnssbench::detail::to_double(value.substr(int_len - 2));
  if (!deg || !minutes || *deg < 0 || *minutes < 0.0 || *minutes >= 60.0)
    return std::nullopt;
  double result = static_cast<double>(*deg) + *minutes / 60.0;
  if (hemi == "S" || hemi == "W")
    result = -result;
  else if (hemi != "N" && hemi != "E")
    return std::nullopt;
  return result;
}

inline SentenceResult parse_error(std::string message) {
  SentenceResult r;
  r.status = Status::ParseError;
  r.message = std::move(message);
  return r;
}

} // namespace detail

/// Parses one physical line. Never throws: failures come back as
/// ChecksumError / ParseError with a message naming the line.
inline SentenceResult parse_nmea_sentence(std::string_view line, std::size_t line_no = 0) {
  using gnssbench::detail::to_double;
  using gnssbench::detail::to_int;
  using gnssbench::detail::trim;

  const std::string where = "line " + std::to_string(line_no) + ": ";
  line = trim(line);
  SentenceResult result;
  if (line.empty())
    return result;
  if (line.front() != '$')
    return detail::parse_error(where + "no '$' sentence start");

  const std::size_t star = line.rfind('*');
  if (star == std::string_view::npos || star + 3 != line.size()) {
    result.status = Status::ChecksumError;
    result.message = where + "missing or malformed checksum";
    return result;
  }
  const std::string_view body = line.substr(1, star - 1);
  const auto expected = line.substr(star + 1);
  if (expected != checksum_hex(checksum(body))) {
    result.status = Status::ChecksumError;
    result.message = where + "checksum mismatch (got " + std::string(expected) +
                     ", computed " + checksum_hex(checksum(body)) + ")";
    return result;
  }

  std::vector<std::string_view> f;
  gnssbench::detail::split(body, ',', f);
  const std::string_view address = f[0];
  if (address.size() != 5 || address.front() == 'P')
    return result; // proprietary or non-standard address: skip
  const std::string_view type = address.substr(2);

  if (type == "GGA") {
    if (f.size() < 14)
      return detail::parse_error(where + "GGA has " + std::to_string(f.size()) + " fields");
    GgaFix &g = result.gga;
    const auto tod = detail::parse_hhmmss(f[1]);
    if (!tod)
      return detail::parse_error(where + "GGA time field '" + std::string(f[1]) + "'");
    g.time_of_day = *tod;

    const auto quality = to_int(f[6]);
    if (!quality || *quality < 0 || *quality > 8)
      return detail::parse_error(where + "GGA quality field '" + std::string(f[6]) + "'");
    g.quality = static_cast<int>(*quality);

    if (!trim(f[7]).empty()) {
      const auto sats = to_int(f[7]);
      if (!sats || *sats < 0)
        return detail::parse_error(where + "GGA satellite count '" + std::string(f[7]) + "'");
      g.num_sats = static_cast<int>(*sats);
    }
    if (!trim(f[8]).empty()) {
      const auto hdop = to_double(f[8]);
      if (!hdop || *hdop < 0.0)
        return detail::parse_error(where + "GGA HDOP '" + std::string(f[8]) + "'");
      if (*hdop > 0.0)
        g.hdop = *hdop;
    }
    if (!trim(f[13]).empty()) {
      const auto age = to_double(f[13]);
      if (!age || *age < 0.0)
        return detail::parse_error(where + "GGA correction age '" + std::string(f[13]) + "'");
      g.corr_age = *age;
    }

    const bool has_coords = !trim(f[2]).empty() && !trim(f[4]).empty();
    if (has_coords) {
      const auto lat = detail::parse_coordinate(f[2], f[3], 2);
      const auto lon = detail::parse_coordinate(f[4], f[5], 3);
      if (!lat || !lon)
        return detail::parse_error(where + "GGA coordinates");
      double alt = 0.0;
      if (!trim(f[9]).empty()) {
        const auto msl = to_double(f[9]);
        if (!msl)
          return detail::parse_error(where + "GGA altitude '" + std::string(f[9]) + "'");
        alt = *msl;
      }
      if (!trim(f[11]).empty()) {
        const auto sep = to_double(f[11]);
        if (!sep)
          return detail::parse_error(where + "GGA geoid separation '" + std::string(f[11]) + "'");
        alt += *sep;
      }
      g.position = {*lat, *lon, alt};
      if (g.position.longitude >= 180.0)
        g.position.longitude -= 360.0;
      g.position_valid = g.quality != 0 && is_valid(g.position);
    }
    result.status = Status::Gga;
    return result;
  }

  if (type == "GSA") {
    if (f.size() < 18)
      return detail::parse_error(where + "GSA has " + std::to_string(f.size()) + " fields");
    if (!trim(f[16]).empty()) {
      const auto hdop = to_double(f[16]);
      if (!hdop || *hdop < 0.0)
        return detail::parse_error(where + "GSA HDOP '" + std::string(f[16]) + "'");
      if (*hdop > 0.0)
        result.gsa.hdop = *hdop;
    }
    result.status = Status::Gsa;
    return result;
  }

  return result;
}

struct ReadCounts {
  std::size_t lines = 0;
  std::size_t gga = 0;
  std::size_t gsa = 0;
  std::size_t skipped = 0;
  std::size_t checksum_errors = 0;
  std::size_t parse_errors = 0;
  std::size_t non_monotonic = 0;
  std::size_t unknown_quality = 0;
};

struct ReadResult {
  std::vector<EvalEpoch> epochs;
  ReadCounts counts;
  std::vector<std::string> diagnostics; // first few failure messages
};

struct ReadOptions {
  double day_start = 0.0; // Unix seconds of the UTC midnight the log starts on
  std::size_t max_diagnostics = 50;
};

/// Streams an NMEA log into evaluation epochs. GGA carries only time of day;
/// a backwards jump of more than 12 h is taken as a midnight rollover.
/// GSA HDOP fills in a GGA whose own HDOP field is empty, whichever order the
/// two sentences of an epoch arrive in.
inline ReadResult read_nmea(std::istream &in, const ReadOptions &options) {
  ReadResult out;
  auto note = [&](const std::string &msg) {
    if (out.diagnostics.size() < options.max_diagnostics)
      out.diagnostics.push_back(msg);
  };

  std::optional<double> pending_gsa_hdop;
  bool last_epoch_open = false; // last GGA lacked HDOP and no GSA seen since
  double day_offset = 0.0;
  std::optional<double> prev_tod;

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    ++out.counts.lines;
    const SentenceResult r = parse_nmea_sentence(line, line_no);
    switch (r.status) {
    case Status::Skip:
      ++out.counts.skipped;
      break;
    case Status::ChecksumError:
      ++out.counts.checksum_errors;
      note(r.message);
      break;
    case Status::ParseError:
      ++out.counts.parse_errors;
      note(r.message);
      break;
    case Status::Gsa:
      ++out.counts.gsa;
      if (last_epoch_open && r.gsa.hdop) {
        out.epochs.back().hdop = r.gsa.hdop;
        last_epoch_open = false;
      } else {
        pending_gsa_hdop = r.gsa.hdop;
      }
      break;
    case Status::Gga: {
      ++out.counts.gga;
      const GgaFix &g = r.gga;
      if (prev_tod && g.time_of_day < *prev_tod - 43200.0)
        day_offset += 86400.0;
      prev_tod = g.time_of_day;

      EvalEpoch e;
      e.t = options.day_start + day_offset + g.time_of_day;
      e.position = g.position;
      e.position_valid = g.position_valid;
      e.num_sats = g.num_sats;
      e.hdop = g.hdop ? g.hdop : pending_gsa_hdop;
      e.fix_quality = g.quality;
      e.corr_age = g.corr_age;
      pending_gsa_hdop.reset();

      bool known = true;
      mode_from_gga_quality(g.quality, &known);
      if (!known) {
        ++out.counts.unknown_quality;
        note("line " + std::to_string(line_no) + ": unknown GGA quality " +
             std::to_string(g.quality) + " treated as SPS");
      }
      if (!out.epochs.empty() && e.t <= out.epochs.back().t) {
        ++out.counts.non_monotonic;
        note("line " + std::to_string(line_no) + ": non-increasing GGA time dropped");
        last_epoch_open = false;
        break;
      }
      last_epoch_open = !e.hdop.has_value();
      out.epochs.push_back(e);
      break;
    }
    }
  }
  return out;
}

/// Writes a GGA sentence for `e`. Coordinates use more minute decimals than
/// receivers emit so synthetic fixtures survive the text round trip at the
/// nanometre level; parsers accept any number of decimals.
inline std::string format_gga(const EvalEpoch &e, double day_start, double geoid_separation = 0.0,
                              int minute_decimals = 13) {
  using gnssbench::detail::append_double;
  using gnssbench::detail::append_fixed;

  std::string body = "GPGGA,";
  double tod = std::fmod(e.t - day_start, 86400.0);
  if (tod < 0.0)
    tod += 86400.0;
  // Round to the emitted resolution first so 59.9999995 does not print as 60.
  tod = std::round(tod * 1e6) / 1e6;
  if (tod >= 86400.0)
    tod -= 86400.0;
  const int hh = static_cast<int>(tod / 3600.0);
  const int mm = static_cast<int>((tod - hh * 3600.0) / 60.0);
  const double ss = tod - hh * 3600.0 - mm * 60.0;
  char hhmm[8];
  std::snprintf(hhmm, sizeof(hhmm), "%02d%02d", hh, mm);
  body += hhmm;
  if (ss < 10.0)
    body += '0';
  append_fixed(body, ss, 6);
  body += ',';

  auto append_coord = [&](double deg_signed, int deg_width, char pos, char neg) {
    const double a = std::abs(deg_signed);
    int deg = static_cast<int>(a);
    double minutes = (a - deg) * 60.0;
    std::string min_text = gnssbench::detail::fixed(minutes, minute_decimals);
    if (min_text.rfind("60", 0) == 0) { // rounding carried into the next degree
      ++deg;
      min_text = gnssbench::detail::fixed(0.0, minute_decimals);
    }
    char dbuf[8];
    std::snprintf(dbuf, sizeof(dbuf), "%0*d", deg_width, deg);
    body += dbuf;
    if (min_text.find('.') == 1)
      body += '0';
    body += min_text;
    body += ',';
    body += deg_signed < 0.0 ? neg : pos;
    body += ',';
  };

  if (e.position_valid) {
    append_coord(e.position.latitude, 2, 'N', 'S');
    append_coord(e.position.longitude, 3, 'E', 'W');
  } else {
    body += ",,,,";
  }
  body += std::to_string(e.fix_quality);
  body += ',';
  char sats[8];
  std::snprintf(sats, sizeof(sats), "%02d", e.num_sats);
  body += sats;
  body += ',';
  if (e.hdop)
    append_double(body, *e.hdop);
  body += ',';
  if (e.position_valid)
    append_fixed(body, e.position.altitude - geoid_separation, 11);
  body += ",M,";
  append_fixed(body, geoid_separation, 3);
  body += ",M,";
  if (e.corr_age)
    append_double(body, *e.corr_age);
  body += ",0000";
  return frame_sentence(body);
}

} // namespace gnssbench::nmea
