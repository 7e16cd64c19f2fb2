#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "gnssbench/detail/text.hpp"
#include "gnssbench/epochs.hpp"
#include "gnssbench/error.hpp"
#include "gnssbench/stats.hpp"

namespace gnssbench {

/// Grid spacing in degrees; latitude and longitude may differ.
struct CellSize {
  double lat = 0.001;
  double lon = 0.001;

  static CellSize uniform(double deg) { return {deg, deg}; }
};

struct CellIndex {
  long long lat = 0;
  long long lon = 0;

  auto operator<=>(const CellIndex &) const = default;
};

struct CellMetrics {
  std::optional<double> rtk_fixed_availability;
  std::optional<double> mean_hdop;
  std::optional<double> p68_sats; // met or exceeded in 68% of epochs
  std::optional<double> p95_corr_age;
  std::optional<double> p68_lateral_error;
};

struct PerfMapCell {
  CellIndex index;
  CellSize size;
  std::size_t epoch_count = 0;
  CellMetrics metrics;
};

struct Binning {
  CellSize size;
  std::map<CellIndex, std::vector<ServiceEpoch>> groups; // ordered: lat, then lon
  std::size_t excluded = 0; // epochs without a valid position
};

/// floor(coord / size). The 1e-9 cell nudge keeps values sitting exactly on
/// a boundary (37.001 / 0.001 = 37000.99999...) in the upper cell.
inline long long cell_coordinate(double deg, double size) {
  return static_cast<long long>(std::floor(deg / size + 1e-9));
}

inline CellIndex cell_of(const GeodeticPosition &p, const CellSize &size) {
  return {cell_coordinate(p.latitude, size.lat), cell_coordinate(p.longitude, size.lon)};
}

inline Binning bin_epochs(std::span<const ServiceEpoch> epochs, CellSize size = {}) {
  if (!(size.lat > 0.0) || !(size.lon > 0.0))
    throw Error(ErrorKind::Domain, "cell size must be positive");
  Binning b;
  b.size = size;
  for (const ServiceEpoch &e : epochs) {
    if (!e.position || !is_valid(*e.position)) {
      ++b.excluded;
      continue;
    }
    b.groups[cell_of(*e.position, size)].push_back(e);
  }
  return b;
}

inline CellMetrics cell_metrics(std::span<const ServiceEpoch> epochs) {
  std::vector<PositionMode> modes;
  std::vector<double> hdop, sats, age, lateral;
  for (const ServiceEpoch &e : epochs) {
    if (e.mode) modes.push_back(*e.mode);
    if (e.hdop) hdop.push_back(*e.hdop);
    if (e.num_sats) sats.push_back(*e.num_sats);
    if (e.corr_age) age.push_back(*e.corr_age);
    if (e.lateral_error) lateral.push_back(std::abs(*e.lateral_error));
  }
  CellMetrics m;
  if (!modes.empty())
    m.rtk_fixed_availability =
        mode_availability(modes)[static_cast<std::size_t>(PositionMode::RtkFixed)];
  if (!hdop.empty()) {
    double sum = 0.0;
    for (double h : hdop)
      sum += h;
    m.mean_hdop = sum / static_cast<double>(hdop.size());
  }
  if (!sats.empty())
    m.p68_sats = at_least_percentile(EmpiricalDistribution(std::move(sats)), 0.68);
  if (!age.empty())
    m.p95_corr_age = percentile(EmpiricalDistribution(std::move(age)), 0.95);
  if (!lateral.empty())
    m.p68_lateral_error = percentile(EmpiricalDistribution(std::move(lateral)), 0.68);
  return m;
}

inline std::vector<PerfMapCell> aggregate_cells(const Binning &binning) {
  std::vector<PerfMapCell> cells;
  cells.reserve(binning.groups.size());
  for (const auto &[index, group] : binning.groups)
    cells.push_back({index, binning.size, group.size(), cell_metrics(group)});
  return cells;
}

namespace detail {

inline nlohmann::json cell_properties(const PerfMapCell &c) {
  nlohmann::json p;
  p["cell_lat_index"] = c.index.lat;
  p["cell_lon_index"] = c.index.lon;
  p["epoch_count"] = c.epoch_count;
  auto put = [&](const char *key, const std::optional<double> &v) {
    p[key] = v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  put("rtk_fixed_availability", c.metrics.rtk_fixed_availability);
  put("mean_hdop", c.metrics.mean_hdop);
  put("p68_sats", c.metrics.p68_sats);
  put("p95_corr_age_s", c.metrics.p95_corr_age);
  put("p68_lateral_error_m", c.metrics.p68_lateral_error);
  return p;
}

} // namespace detail

/// GeoJSON FeatureCollection, one Polygon per cell in (lat, lon) index order.
/// Corner coordinates carry 7 decimals; output is byte-deterministic.
inline std::string export_geojson(std::span<const PerfMapCell> cells) {
  std::vector<const PerfMapCell *> ordered;
  for (const PerfMapCell &c : cells)
    ordered.push_back(&c);
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const PerfMapCell *a, const PerfMapCell *b) { return a->index < b->index; });

  std::string out = "{\"type\":\"FeatureCollection\",\"features\":[";
  bool first = true;
  for (const PerfMapCell *c : ordered) {
    const double lat0 = static_cast<double>(c->index.lat) * c->size.lat;
    const double lat1 = static_cast<double>(c->index.lat + 1) * c->size.lat;
    const double lon0 = static_cast<double>(c->index.lon) * c->size.lon;
    const double lon1 = static_cast<double>(c->index.lon + 1) * c->size.lon;
    const std::pair<double, double> ring[5] = {
        {lon0, lat0}, {lon1, lat0}, {lon1, lat1}, {lon0, lat1}, {lon0, lat0}};

    out += first ? "\n" : ",\n";
    first = false;
    out += "{\"type\":\"Feature\",\"geometry\":{\"type\":\"Polygon\",\"coordinates\":[[";
    for (int k = 0; k < 5; ++k) {
      out += k ? ",[" : "[";
      detail::append_fixed(out, ring[k].first, 7);
      out += ',';
      detail::append_fixed(out, ring[k].second, 7);
      out += ']';
    }
    out += "]]},\"properties\":";
    out += detail::cell_properties(*c).dump();
    out += '}';
  }
  out += first ? "]}\n" : "\n]}\n";
  return out;
}

/// Flat cell table; empty cells denote absent metrics.
inline std::string export_cells_csv(std::span<const PerfMapCell> cells) {
  std::string out = "cell_lat_index,cell_lon_index,lat_min_deg,lon_min_deg,epoch_count,"
                    "rtk_fixed_availability,mean_hdop,p68_sats,p95_corr_age_s,"
                    "p68_lateral_error_m\n";
  auto opt = [&](const std::optional<double> &v) {
    out += ',';
    if (v)
      detail::append_double(out, *v);
  };
  for (const PerfMapCell &c : cells) {
    out += std::to_string(c.index.lat) + ',' + std::to_string(c.index.lon) + ',';
    detail::append_fixed(out, static_cast<double>(c.index.lat) * c.size.lat, 7);
    out += ',';
    detail::append_fixed(out, static_cast<double>(c.index.lon) * c.size.lon, 7);
    out += ',' + std::to_string(c.epoch_count);
    opt(c.metrics.rtk_fixed_availability);
    opt(c.metrics.mean_hdop);
    opt(c.metrics.p68_sats);
    opt(c.metrics.p95_corr_age);
    opt(c.metrics.p68_lateral_error);
    out += '\n';
  }
  return out;
}

} // namespace gnssbench
