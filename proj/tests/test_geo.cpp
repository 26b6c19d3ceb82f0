#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numbers>

#include "solarmap/geo.hpp"
#include "solarmap/geojson.hpp"
#include "support/oracles.hpp"

using namespace solarmap::geo;

namespace {

constexpr double R = 6378137.0;
constexpr double kDeg = std::numbers::pi / 180.0;

// Web Mercator: one pixel at zoom z spans 360 / (256 * 2^z) degrees of longitude.
double px_lon_deg(int zoom) { return 360.0 / (256.0 * std::ldexp(1.0, zoom)); }

// Lat/lon rectangle whose sides measure `side_m` on the sphere at its centre.
Polygon metric_square(double lon, double lat, double side_m) {
  const double dlat = side_m / R / kDeg;
  const double dlon = side_m / (R * std::cos(lat * kDeg)) / kDeg;
  return box_polygon(lon - dlon / 2, lat - dlat / 2, lon + dlon / 2, lat + dlat / 2);
}

// Exact spherical area of a lat/lon rectangle.
double sphere_rect_area(const Polygon& p) {
  const auto b = bounding_box(p);
  return R * R * (b.east - b.west) * kDeg * (std::sin(b.north * kDeg) - std::sin(b.south * kDeg));
}

}  // namespace

TEST_CASE("ground resolution at the equator and at Denver") {
  const double equator = 2 * std::numbers::pi * R / 256.0;
  CHECK(ground_resolution(0, 0) == doctest::Approx(equator).epsilon(1e-12));
  CHECK(std::abs(ground_resolution(0, 0) - 156543.034) < 0.01);
  CHECK(std::abs(ground_resolution(39.7, 20) - 0.1149) < 0.0005);
  CHECK(ground_resolution(90, 20) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("ground resolution halves per zoom level and is even in latitude") {
  for (int z = 0; z < 23; ++z) {
    CHECK(ground_resolution(39.7, z + 1) == doctest::Approx(ground_resolution(39.7, z) / 2).epsilon(1e-14));
    CHECK(ground_resolution(-39.7, z) == ground_resolution(39.7, z));
  }
}

TEST_CASE("ground resolution rejects bad inputs") {
  CHECK_THROWS(ground_resolution(91, 3));
  CHECK_THROWS(ground_resolution(10, -1));
}

TEST_CASE("footprint bounds follow the pixel extent") {
  const auto fp = make_footprint({-104.99, 39.7}, 20, 640, 640);
  const auto b = footprint_bounds(fp);
  CHECK(b.east - b.west == doctest::Approx(640 * px_lon_deg(20)).epsilon(1e-12));
  // Ground extent east-west at the centre latitude, about 73.5 m.
  const double width_m = (b.east - b.west) * kDeg * R * std::cos(39.7 * kDeg);
  CHECK(width_m == doctest::Approx(640 * fp.gsd_m_per_px).epsilon(1e-9));
  CHECK(std::abs(width_m - 73.5) < 0.5);
  const double height_m = (b.north - b.south) * kDeg * R;
  CHECK(height_m == doctest::Approx(width_m).epsilon(1e-3));

  const auto point = footprint_bounds(make_footprint({-104.99, 39.7}, 20, 0, 0));
  CHECK(point.west == doctest::Approx(-104.99));
  CHECK(point.east == point.west);
  CHECK(point.north == point.south);
  CHECK_THROWS(footprint_bounds(make_footprint({0, 85.06}, 20, 640, 640)));
}

TEST_CASE("tile plans cover small and 2x2 rectangles") {
  const double dlon = 640 * px_lon_deg(20);
  const double dlat = 640 * ground_resolution(39.7, 20) / R / kDeg;

  BlockUnit small{"a", box_polygon(-105.0, 39.7, -105.0 + dlon / 3, 39.7 + dlat / 3), 10};
  CHECK(plan_tiles(small, 20, 640, 640).footprints.size() == 1);

  BlockUnit quad{"b", box_polygon(-105.0, 39.7, -105.0 + 1.95 * dlon, 39.7 + 1.95 * dlat), 10};
  const auto plan = plan_tiles(quad, 20, 640, 640);
  REQUIRE(plan.footprints.size() == 4);
  // Row-major, north to south then west to east.
  CHECK(plan.grid_index[0] == std::pair{0, 0});
  CHECK(plan.grid_index[1] == std::pair{0, 1});
  CHECK(plan.grid_index[2] == std::pair{1, 0});
  const auto b00 = footprint_bounds(plan.footprints[0]);
  const auto b01 = footprint_bounds(plan.footprints[1]);
  const auto b10 = footprint_bounds(plan.footprints[2]);
  CHECK(b00.east == doctest::Approx(b01.west).epsilon(1e-12));
  CHECK(b00.south == doctest::Approx(b10.north).epsilon(1e-12));
  // Anchored at the north-west corner of the bounding box.
  CHECK(b00.west == doctest::Approx(-105.0).epsilon(1e-12));
  CHECK(b00.north == doctest::Approx(39.7 + 1.95 * dlat).epsilon(1e-12));

  BlockUnit wide{"c", box_polygon(-105.0, 39.7, -105.0 + 2.05 * dlon, 39.7 + 0.5 * dlat), 10};
  CHECK(plan_tiles(wide, 20, 640, 640).footprints.size() == 3);
}

TEST_CASE("tile plans drop cells outside an L-shaped polygon and cover every vertex") {
  const double d = 640 * px_lon_deg(20);
  Polygon ell;
  ell.exterior = {{-105.0, 39.7},         {-105.0 + 2.9 * d, 39.7}, {-105.0 + 2.9 * d, 39.7 + 0.4 * d},
                  {-105.0 + 0.4 * d, 39.7 + 0.4 * d}, {-105.0 + 0.4 * d, 39.7 + 2.2 * d}, {-105.0, 39.7 + 2.2 * d}};
  const auto plan = plan_tiles({"l", ell, 3}, 20, 640, 640);
  const auto box = bounding_box(ell);
  for (const auto& fp : plan.footprints) {
    const auto b = footprint_bounds(fp);
    CHECK(intersection_area_m2(ell, box_polygon(b.west, b.south, b.east, b.north)) > 0.0);
  }
  for (const auto& v : ell.exterior) {
    bool covered = false;
    for (const auto& fp : plan.footprints) covered = covered || footprint_bounds(fp).contains(v);
    CHECK(covered);
  }
  // A 3x3 grid over the bounding box; the L touches the left column and the
  // bottom row only.
  CHECK(plan.footprints.size() == 5);
  CHECK(box.west == -105.0);
}

TEST_CASE("select_populated keeps positive populations in order") {
  std::vector<BlockUnit> blocks;
  const int pops[] = {0, 5, 0, 1};
  for (int i = 0; i < 4; ++i) blocks.push_back({std::to_string(i), box_polygon(0, 0, 1, 1), pops[i]});
  const auto kept = select_populated(blocks);
  REQUIRE(kept.size() == 2);
  CHECK(kept[0].geoid == "1");
  CHECK(kept[1].geoid == "3");
}

TEST_CASE("polygon areas of analytic shapes") {
  for (double side : {100.0, 1000.0, 10000.0}) {
    for (double lat : {0.0, 39.7, 60.0}) {
      const auto sq = metric_square(-105.0, lat, side);
      const double a = polygon_area_m2(sq);
      CHECK(a / (side * side) == doctest::Approx(1.0).epsilon(2e-3));
      CHECK(a == doctest::Approx(sphere_rect_area(sq)).epsilon(1e-3));
    }
  }
  // Right triangle with 1 km legs.
  const double dlat = 1000.0 / R / kDeg;
  const double dlon = 1000.0 / (R * std::cos(39.7 * kDeg)) / kDeg;
  Polygon tri;
  tri.exterior = {{-105.0, 39.7}, {-105.0 + dlon, 39.7}, {-105.0, 39.7 + dlat}};
  CHECK(polygon_area_m2(tri) == doctest::Approx(5e5).epsilon(1e-3));

  // A hole removes its own area.
  auto holed = metric_square(-105.0, 39.7, 1000.0);
  holed.holes.push_back(metric_square(-105.0, 39.7, 200.0).exterior);
  CHECK(polygon_area_m2(holed) == doctest::Approx(1000.0 * 1000.0 - 200.0 * 200.0).epsilon(2e-3));

  Polygon degenerate;
  degenerate.exterior = {{0, 0}, {1, 1}, {2, 2}};
  CHECK_THROWS(polygon_area_m2(degenerate));
}

TEST_CASE("intersection areas") {
  const double s = 0.01;
  const auto a = box_polygon(-105.0, 39.7, -105.0 + s, 39.7 + s);
  const auto b = box_polygon(-105.0 + s / 2, 39.7 + s / 2, -105.0 + 1.5 * s, 39.7 + 1.5 * s);
  const auto far = box_polygon(-104.0, 39.7, -104.0 + s, 39.7 + s);
  CHECK(intersection_area_m2(a, a) == doctest::Approx(polygon_area_m2(a)).epsilon(1e-9));
  CHECK(intersection_area_m2(a, far) == 0.0);
  CHECK(intersection_area_m2(a, b) / polygon_area_m2(a) == doctest::Approx(0.25).epsilon(2e-3));
  CHECK(intersection_area_m2(a, b) == intersection_area_m2(b, a));
  CHECK(intersection_area_m2(a, b) <= std::min(polygon_area_m2(a), polygon_area_m2(b)));
}

TEST_CASE("rook adjacency needs a shared edge") {
  const auto a = box_polygon(0, 0, 1, 1);
  CHECK(shares_boundary(a, box_polygon(1, 0, 2, 1)));
  CHECK(shares_boundary(a, box_polygon(1, 0.5, 2, 3)));
  CHECK_FALSE(shares_boundary(a, box_polygon(1, 1, 2, 2)));
  CHECK_FALSE(shares_boundary(a, box_polygon(3, 0, 4, 1)));
}

TEST_CASE("GeoJSON explodes multipolygons into parts") {
  const auto doc = nlohmann::json::parse(R"({"type":"FeatureCollection","features":[
    {"type":"Feature","properties":{"geoid":"080010001001","population":12},
     "geometry":{"type":"MultiPolygon","coordinates":[
       [[[0,0],[1,0],[1,1],[0,1],[0,0]]],
       [[[2,0],[3,0],[3,1],[2,1],[2,0]]]]}},
    {"type":"Feature","properties":{"geoid":"080010001002","population":0},
     "geometry":{"type":"Polygon","coordinates":[[[0,2],[1,2],[1,3],[0,3],[0,2]]]}}]})");
  const auto features = parse_feature_collection(doc);
  REQUIRE(features.size() == 3);
  CHECK(features[0].properties.at("geoid") == features[1].properties.at("geoid"));
  CHECK(features[0].polygon.exterior.size() == 4);
}
