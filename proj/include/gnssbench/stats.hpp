#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gnssbench/epochs.hpp"
#include "gnssbench/error.hpp"

namespace gnssbench {

/// Sorted, non-empty sample buffer.
class EmpiricalDistribution {
public:
  explicit EmpiricalDistribution(std::vector<double> samples)
      : sorted_(std::move(samples)) {
    if (sorted_.empty())
      throw Error(ErrorKind::EmptyReport, "empirical distribution needs at least one sample");
    std::sort(sorted_.begin(), sorted_.end());
  }

  template <class Range>
  static EmpiricalDistribution from(const Range &values) {
    return EmpiricalDistribution(std::vector<double>(std::begin(values), std::end(values)));
  }

  std::size_t size() const { return sorted_.size(); }
  std::span<const double> sorted_samples() const { return sorted_; }
  double min() const { return sorted_.front(); }
  double max() const { return sorted_.back(); }

private:
  std::vector<double> sorted_;
};

/// 1-based nearest rank ceil(p*n). Products within 1e-9 of an integer snap to
/// it so that e.g. 0.68 * 100 selects rank 68, not 69.
inline std::size_t nearest_rank(double p, std::size_t n) {
  if (!(p > 0.0 && p <= 1.0))
    throw Error(ErrorKind::Domain, "percentile fraction must lie in (0, 1]");
  const double x = p * static_cast<double>(n);
  const double r = std::round(x);
  const double rank = std::abs(x - r) <= 1e-9 * std::max(1.0, x) ? r : std::ceil(x);
  return std::clamp<std::size_t>(static_cast<std::size_t>(rank), 1, n);
}

/// Nearest-rank percentile, no interpolation.
inline double percentile(const EmpiricalDistribution &d, double p) {
  return d.sorted_samples()[nearest_rank(p, d.size()) - 1];
}

/// Lower-tail reading used for "at least" quantities such as satellites in
/// view: the value met or exceeded by a fraction p of the samples, i.e. the
/// ceil(p*n)-th largest.
inline double at_least_percentile(const EmpiricalDistribution &d, double p) {
  return d.sorted_samples()[d.size() - nearest_rank(p, d.size())];
}

/// Step points (x, F(x)) of the empirical CDF with duplicate values collapsed.
inline std::vector<std::pair<double, double>> cdf_points(const EmpiricalDistribution &d) {
  const auto s = d.sorted_samples();
  const double n = static_cast<double>(s.size());
  std::vector<std::pair<double, double>> pts;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i + 1 < s.size() && s[i + 1] == s[i])
      continue;
    pts.emplace_back(s[i], i + 1 == s.size() ? 1.0 : static_cast<double>(i + 1) / n);
  }
  return pts;
}

// =============================================================================
// Availability tables
// =============================================================================

struct ServiceLevel {
  std::string name;
  double threshold = 0.0; // metres, strict upper bound
  double availability = 0.0;
};

struct ServiceLevelReport {
  std::vector<ServiceLevel> levels;
};

inline const std::vector<std::pair<std::string, double>> &default_service_levels() {
  static const std::vector<std::pair<std::string, double>> levels = {
      {"which_road", 5.0},
      {"which_lane", 1.5},
      {"where_in_lane_highway", 0.5},
      {"where_in_lane_local", 0.3}};
  return levels;
}

/// Names the default levels when four thresholds are given, otherwise
/// "level_<i>".
inline std::vector<std::pair<std::string, double>>
name_service_levels(const std::vector<double> &thresholds) {
  std::vector<std::pair<std::string, double>> out;
  const auto &defaults = default_service_levels();
  for (std::size_t i = 0; i < thresholds.size(); ++i)
    out.emplace_back(thresholds.size() == defaults.size() ? defaults[i].first
                                                          : "level_" + std::to_string(i + 1),
                     thresholds[i]);
  return out;
}

inline ServiceLevelReport
service_level_availability(std::span<const double> lateral_magnitudes,
                           const std::vector<std::pair<std::string, double>> &levels =
                               default_service_levels()) {
  if (lateral_magnitudes.empty())
    throw Error(ErrorKind::EmptyReport, "service-level availability needs samples");
  ServiceLevelReport report;
  const double n = static_cast<double>(lateral_magnitudes.size());
  for (const auto &[name, threshold] : levels) {
    if (!(threshold > 0.0))
      throw Error(ErrorKind::Domain, "service-level thresholds must be positive");
    const auto count = std::count_if(lateral_magnitudes.begin(), lateral_magnitudes.end(),
                                     [t = threshold](double v) { return v < t; });
    report.levels.push_back({name, threshold, static_cast<double>(count) / n});
  }
  return report;
}

/// Fractions indexed like kAllModes.
using ModeFractions = std::array<double, kAllModes.size()>;

inline ModeFractions mode_availability(std::span<const PositionMode> modes) {
  if (modes.empty())
    throw Error(ErrorKind::EmptyReport, "mode availability needs epochs");
  std::array<std::size_t, kAllModes.size()> counts{};
  for (PositionMode m : modes)
    ++counts[static_cast<std::size_t>(m)];
  ModeFractions out{};
  const double n = static_cast<double>(modes.size());
  for (std::size_t i = 0; i < counts.size(); ++i)
    out[i] = static_cast<double>(counts[i]) / n;
  return out;
}

inline const std::vector<double> &default_correction_age_thresholds() {
  static const std::vector<double> t = {2.0, 10.0, 120.0};
  return t;
}

/// Fraction of epochs whose correction age is strictly below each threshold.
/// Epochs without an age fail every threshold.
inline std::vector<double>
correction_age_availability(std::span<const std::optional<double>> ages,
                            const std::vector<double> &thresholds =
                                default_correction_age_thresholds()) {
  if (ages.empty())
    throw Error(ErrorKind::EmptyReport, "correction-age availability needs epochs");
  for (std::size_t i = 0; i < thresholds.size(); ++i)
    if (!(thresholds[i] > 0.0) || (i > 0 && thresholds[i] <= thresholds[i - 1]))
      throw Error(ErrorKind::Domain, "correction-age thresholds must be positive and ascending");
  std::vector<double> out;
  const double n = static_cast<double>(ages.size());
  for (double t : thresholds) {
    const auto count = std::count_if(ages.begin(), ages.end(),
                                     [t](const std::optional<double> &a) { return a && *a < t; });
    out.push_back(static_cast<double>(count) / n);
  }
  return out;
}

/// Percentile columns used throughout the accuracy and geometry tables.
inline constexpr std::array<double, 3> kReportPercentiles = {0.68, 0.95, 0.99};

} // namespace gnssbench
