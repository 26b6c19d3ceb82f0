#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace solarmap::geo {

/// WGS84 equatorial radius, also the Web Mercator sphere radius.
inline constexpr double kEarthRadiusM = 6378137.0;
/// Latitude at which the Web Mercator square world ends.
inline constexpr double kMercatorMaxLat = 85.05112877980659;
/// Pixels per tile edge at zoom 0.
inline constexpr double kTileSizePx = 256.0;

struct GeoPoint {
  double lon = 0.0;
  double lat = 0.0;

  friend bool operator==(const GeoPoint&, const GeoPoint&) = default;
};

using Ring = std::vector<GeoPoint>;

/// Exterior ring plus optional holes. Rings are implicitly closed: a repeated
/// closing vertex is tolerated and ignored.
struct Polygon {
  Ring exterior;
  std::vector<Ring> holes;
};

struct GeoBox {
  double west = 0.0;
  double south = 0.0;
  double east = 0.0;
  double north = 0.0;

  bool contains(GeoPoint p) const {
    return p.lon >= west && p.lon <= east && p.lat >= south && p.lat <= north;
  }
};

struct BlockUnit {
  std::string geoid;
  Polygon geometry;
  std::int64_t population = 0;
};

/// A fixed-pixel Web Mercator image centred on a point.
struct ImageFootprint {
  GeoPoint center;
  int zoom = 0;
  int width_px = 0;
  int height_px = 0;
  double gsd_m_per_px = 0.0;
};

struct TilePlan {
  std::string unit_geoid;
  std::vector<ImageFootprint> footprints;
  /// (row, col) of each footprint in the anchored grid, parallel to footprints.
  std::vector<std::pair<int, int>> grid_index;
};

struct PlanarPoint {
  double x = 0.0;
  double y = 0.0;
};

/// Spherical Lambert azimuthal equal-area projection about an origin.
class EqualAreaProjection {
 public:
  explicit EqualAreaProjection(GeoPoint origin);

  PlanarPoint forward(GeoPoint p) const;
  GeoPoint inverse(PlanarPoint p) const;

 private:
  double lon0_;
  double sin_lat0_;
  double cos_lat0_;
};

void validate_point(GeoPoint p);

/// Throws std::invalid_argument on rings with fewer than three distinct
/// vertices, zero area, self-intersections, or holes escaping the exterior.
void validate_polygon(const Polygon& polygon);

/// Drops a repeated closing vertex from every ring.
Polygon normalized(Polygon polygon);

/// Mean of the exterior vertices.
GeoPoint vertex_centroid(const Polygon& polygon);

GeoBox bounding_box(const Polygon& polygon);

double mercator_x(double lon);
double mercator_y(double lat);
double mercator_lon(double x);
double mercator_lat(double y);

/// Ground metres per pixel at a latitude and zoom level.
double ground_resolution(double lat, int zoom);

/// Builds a footprint with its cached ground sample distance.
ImageFootprint make_footprint(GeoPoint center, int zoom, int width_px, int height_px);

GeoBox footprint_bounds(const ImageFootprint& fp);

/// Covers the unit polygon with a grid of footprints anchored at the north-west
/// corner of its bounding box. Cells not overlapping the polygon are dropped.
TilePlan plan_tiles(const BlockUnit& unit, int zoom, int width_px, int height_px);

std::vector<BlockUnit> select_populated(std::span<const BlockUnit> blocks);

double polygon_area_m2(const Polygon& polygon);

double intersection_area_m2(const Polygon& a, const Polygon& b);

/// Rook contiguity: true when the polygons share a boundary segment of
/// positive length (a shared corner alone does not count).
bool shares_boundary(const Polygon& a, const Polygon& b, double tol_deg = 1e-9);

/// Polygon with corners at the given lon/lat bounds.
Polygon box_polygon(double west, double south, double east, double north);

}  // namespace solarmap::geo
