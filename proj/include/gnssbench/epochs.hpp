#pragma once

#include <array>
#include <optional>
#include <string_view>

#include "gnssbench/geodesy.hpp"

namespace gnssbench {

enum class PositionMode { RtkFixed, RtkFloat, DiffCode, Sps, None };

inline constexpr std::array<PositionMode, 5> kAllModes = {
    PositionMode::RtkFixed, PositionMode::RtkFloat, PositionMode::DiffCode,
    PositionMode::Sps, PositionMode::None};

/// CSV spelling of a mode.
inline std::string_view to_string(PositionMode mode) {
  switch (mode) {
  case PositionMode::RtkFixed: return "rtk_fixed";
  case PositionMode::RtkFloat: return "rtk_float";
  case PositionMode::DiffCode: return "diff_code";
  case PositionMode::Sps: return "sps";
  case PositionMode::None: return "none";
  }
  return "none";
}

inline std::optional<PositionMode> parse_position_mode(std::string_view text) {
  for (PositionMode m : kAllModes)
    if (text == to_string(m))
      return m;
  return std::nullopt;
}

/// GGA fix-quality mapping. Dead reckoning (6) is not a GNSS fix. Unknown
/// codes fall back to Sps; `known` reports whether the code was recognized.
inline PositionMode mode_from_gga_quality(int quality, bool *known = nullptr) {
  if (known)
    *known = true;
  switch (quality) {
  case 0: return PositionMode::None;
  case 1: return PositionMode::Sps;
  case 2: return PositionMode::DiffCode;
  case 4: return PositionMode::RtkFixed;
  case 5: return PositionMode::RtkFloat;
  case 6: return PositionMode::None;
  default:
    if (known)
      *known = false;
    return PositionMode::Sps;
  }
}

/// Ground-truth INS sample.
struct RefEpoch {
  double t = 0.0; // Unix seconds
  GeodeticPosition position;
  EulerAttitude attitude;
  double sigma_h = 0.0;
  PositionMode mode = PositionMode::None;
  int num_sats = 0;
  std::optional<double> hdop;
  std::optional<double> corr_age;

  bool operator==(const RefEpoch &) const = default;
};

/// Device-under-test fix, assembled from GGA (and GSA for HDOP).
struct EvalEpoch {
  double t = 0.0;
  GeodeticPosition position;
  bool position_valid = false;
  int num_sats = 0;
  std::optional<double> hdop;
  int fix_quality = 0;
  std::optional<double> corr_age;

  PositionMode mode() const { return mode_from_gga_quality(fix_quality); }
  bool has_fix() const { return position_valid && mode() != PositionMode::None; }

  bool operator==(const EvalEpoch &) const = default;
};

/// Receiver-agnostic quality view consumed by the continuity and map stages.
/// Absent fields stay absent; they are never defaulted to zero.
struct ServiceEpoch {
  double t = 0.0;
  std::optional<GeodeticPosition> position;
  std::optional<PositionMode> mode;
  std::optional<int> num_sats;
  std::optional<double> hdop;
  std::optional<double> corr_age;
  std::optional<double> lateral_error; // signed, metres

  static ServiceEpoch from(const RefEpoch &r) {
    ServiceEpoch s;
    s.t = r.t;
    if (is_valid(r.position))
      s.position = r.position;
    s.mode = r.mode;
    s.num_sats = r.num_sats;
    s.hdop = r.hdop;
    s.corr_age = r.corr_age;
    return s;
  }

  static ServiceEpoch from(const EvalEpoch &e) {
    ServiceEpoch s;
    s.t = e.t;
    if (e.position_valid)
      s.position = e.position;
    s.mode = e.mode();
    s.num_sats = e.num_sats;
    s.hdop = e.hdop;
    s.corr_age = e.corr_age;
    return s;
  }
};

} // namespace gnssbench
