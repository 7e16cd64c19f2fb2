#include <random>
#include <sstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "gnssbench/perfmap.hpp"

using namespace gnssbench;

namespace {

ServiceEpoch at(double lat, double lon) {
  ServiceEpoch e;
  e.position = GeodeticPosition{lat, lon, 0.0};
  return e;
}

} // namespace

TEST(Perfmap, CellIndexExample) {
  const CellIndex c = cell_of({37.0005, -122.0004, 0.0}, CellSize::uniform(0.001));
  EXPECT_EQ(c.lat, 37000);
  EXPECT_EQ(c.lon, -122001);
}

TEST(Perfmap, BoundaryValueLandsInUpperCell) {
  EXPECT_EQ(cell_coordinate(37.001, 0.001), 37001);
  EXPECT_EQ(cell_coordinate(-122.0, 0.001), -122000);
}

TEST(Perfmap, NearbyPointsShareACell) {
  std::vector<ServiceEpoch> e = {at(37.0005, -122.0005), at(37.0005 + 1e-6, -122.0005 + 1e-6)};
  const Binning b = bin_epochs(e);
  EXPECT_EQ(b.groups.size(), 1u);
  EXPECT_EQ(b.groups.begin()->second.size(), 2u);
}

TEST(Perfmap, InvalidPositionsExcluded) {
  std::vector<ServiceEpoch> e = {at(37.0005, -122.0005), ServiceEpoch{}, at(95.0, 0.0)};
  const Binning b = bin_epochs(e);
  EXPECT_EQ(b.excluded, 2u);
  EXPECT_EQ(b.groups.size(), 1u);
  EXPECT_THROW(bin_epochs(e, CellSize::uniform(0.0)), Error);
}

TEST(Perfmap, CellMetrics) {
  std::vector<ServiceEpoch> e(4, at(37.0005, -122.0005));
  e[0].mode = PositionMode::RtkFixed;
  e[1].mode = PositionMode::RtkFloat;
  e[2].mode = PositionMode::RtkFixed;
  e[3].mode = PositionMode::Sps;
  const CellMetrics m = cell_metrics(e);
  EXPECT_EQ(*m.rtk_fixed_availability, 0.5);
  EXPECT_FALSE(m.mean_hdop);
  EXPECT_FALSE(m.p68_sats);
  EXPECT_FALSE(m.p68_lateral_error);
}

TEST(Perfmap, AggregatesMatchPerCellOracle) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> lat(37.0, 37.01), lon(-122.01, -122.0), u(0.0, 1.0);
  std::vector<ServiceEpoch> epochs(5000);
  for (ServiceEpoch &e : epochs) {
    e = at(lat(rng), lon(rng));
    e.hdop = 0.5 + u(rng);
    e.num_sats = static_cast<int>(4 + 16 * u(rng));
    e.mode = u(rng) < 0.7 ? PositionMode::RtkFixed : PositionMode::RtkFloat;
  }
  const CellSize size = CellSize::uniform(0.001);
  const auto cells = aggregate_cells(bin_epochs(epochs, size));
  std::size_t total = 0;
  for (const PerfMapCell &c : cells) {
    double hdop = 0.0;
    std::size_t n = 0, fixed = 0;
    for (const ServiceEpoch &e : epochs) {
      const CellIndex i = cell_of(*e.position, size);
      if (i.lat != c.index.lat || i.lon != c.index.lon)
        continue;
      ++n;
      hdop += *e.hdop;
      fixed += *e.mode == PositionMode::RtkFixed;
    }
    ASSERT_EQ(n, c.epoch_count);
    EXPECT_NEAR(*c.metrics.mean_hdop, hdop / static_cast<double>(n), 1e-12);
    EXPECT_EQ(*c.metrics.rtk_fixed_availability, static_cast<double>(fixed) / static_cast<double>(n));
    total += c.epoch_count;
  }
  EXPECT_EQ(total, epochs.size());
}

TEST(Perfmap, EmptyGeojson) {
  const nlohmann::json j = nlohmann::json::parse(export_geojson({}));
  EXPECT_EQ(j["type"], "FeatureCollection");
  EXPECT_TRUE(j["features"].empty());
}

TEST(Perfmap, SingleCellPolygon) {
  std::vector<ServiceEpoch> e = {at(37.0005, -122.0004)};
  e[0].hdop = 0.8;
  const auto cells = aggregate_cells(bin_epochs(e));
  const nlohmann::json j = nlohmann::json::parse(export_geojson(cells));
  ASSERT_EQ(j["features"].size(), 1u);
  const auto &f = j["features"][0];
  EXPECT_EQ(f["geometry"]["type"], "Polygon");
  const auto &ring = f["geometry"]["coordinates"][0];
  ASSERT_EQ(ring.size(), 5u);
  EXPECT_EQ(ring[0], ring[4]);
  EXPECT_NEAR(ring[0][0].get<double>(), -122.001, 1e-9);
  EXPECT_NEAR(ring[0][1].get<double>(), 37.000, 1e-9);
  EXPECT_NEAR(ring[2][0].get<double>(), -122.000, 1e-9);
  EXPECT_NEAR(ring[2][1].get<double>(), 37.001, 1e-9);
  // Counter-clockwise: positive shoelace area.
  double area = 0.0;
  for (std::size_t k = 0; k + 1 < ring.size(); ++k)
    area += ring[k][0].get<double>() * ring[k + 1][1].get<double>() -
            ring[k + 1][0].get<double>() * ring[k][1].get<double>();
  EXPECT_GT(area, 0.0);
  EXPECT_EQ(f["properties"]["epoch_count"], 1);
  EXPECT_EQ(f["properties"]["mean_hdop"], 0.8);
  EXPECT_TRUE(f["properties"]["p68_sats"].is_null());
  EXPECT_NE(export_geojson(cells).find("[-122.0010000,37.0000000]"), std::string::npos);
}

TEST(Perfmap, DeterministicOutput) {
  std::vector<ServiceEpoch> e = {at(37.0005, -122.0004), at(37.0015, -122.0004),
                                 at(37.0005, -122.0014)};
  const auto cells = aggregate_cells(bin_epochs(e));
  EXPECT_EQ(export_geojson(cells), export_geojson(cells));
  std::vector<PerfMapCell> reversed(cells.rbegin(), cells.rend());
  EXPECT_EQ(export_geojson(reversed), export_geojson(cells));
}

TEST(Perfmap, CellsCsv) {
  std::vector<ServiceEpoch> e = {at(37.0005, -122.0004)};
  e[0].num_sats = 11;
  const std::string csv = export_cells_csv(aggregate_cells(bin_epochs(e)));
  std::istringstream in(csv);
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  EXPECT_EQ(header.substr(0, 30), "cell_lat_index,cell_lon_index,");
  EXPECT_EQ(row, "37000,-122001,37.0000000,-122.0010000,1,,,11,,");
}
