#include "solarmap/geo.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include <boost/geometry.hpp>
#include <boost/geometry/geometries/point_xy.hpp>
#include <boost/geometry/geometries/polygon.hpp>
#include <fmt/format.h>

namespace solarmap::geo {

namespace {

namespace bg = boost::geometry;
using BgPoint = bg::model::d2::point_xy<double>;
using BgPolygon = bg::model::polygon<BgPoint>;
using BgMultiPolygon = bg::model::multi_polygon<BgPolygon>;

constexpr double kDegToRad = std::numbers::pi / 180.0;
constexpr double kRadToDeg = 180.0 / std::numbers::pi;

Ring strip_closing(Ring ring) {
  if (ring.size() > 1 && ring.front() == ring.back()) ring.pop_back();
  return ring;
}

double cross(PlanarPoint o, PlanarPoint a, PlanarPoint b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

PlanarPoint as_planar(GeoPoint p) { return {p.lon, p.lat}; }

int orientation(PlanarPoint a, PlanarPoint b, PlanarPoint c) {
  const double v = cross(a, b, c);
  if (v > 0) return 1;
  if (v < 0) return -1;
  return 0;
}

bool on_segment(PlanarPoint a, PlanarPoint b, PlanarPoint p) {
  return std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) &&
         std::min(a.y, b.y) <= p.y && p.y <= std::max(a.y, b.y);
}

bool segments_intersect(PlanarPoint p1, PlanarPoint p2, PlanarPoint q1, PlanarPoint q2) {
  const int o1 = orientation(p1, p2, q1);
  const int o2 = orientation(p1, p2, q2);
  const int o3 = orientation(q1, q2, p1);
  const int o4 = orientation(q1, q2, p2);
  if (o1 != o2 && o3 != o4) return true;
  if (o1 == 0 && on_segment(p1, p2, q1)) return true;
  if (o2 == 0 && on_segment(p1, p2, q2)) return true;
  if (o3 == 0 && on_segment(q1, q2, p1)) return true;
  if (o4 == 0 && on_segment(q1, q2, p2)) return true;
  return false;
}

template <typename Project>
double ring_signed_area(const Ring& ring, Project&& project) {
  double twice = 0.0;
  const std::size_t n = ring.size();
  for (std::size_t i = 0; i < n; ++i) {
    const PlanarPoint a = project(ring[i]);
    const PlanarPoint b = project(ring[(i + 1) % n]);
    twice += a.x * b.y - b.x * a.y;
  }
  return 0.5 * twice;
}

void validate_ring(const Ring& ring, const char* what) {
  Ring distinct = ring;
  std::sort(distinct.begin(), distinct.end(), [](GeoPoint a, GeoPoint b) {
    return std::pair(a.lon, a.lat) < std::pair(b.lon, b.lat);
  });
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (distinct.size() < 3) {
    throw std::invalid_argument(fmt::format("geo: {} ring has fewer than 3 distinct vertices", what));
  }
  for (GeoPoint p : ring) validate_point(p);
  if (ring_signed_area(ring, as_planar) == 0.0) {
    throw std::invalid_argument(fmt::format("geo: {} ring has zero area", what));
  }
  // O(n^2) scan over non-adjacent edge pairs.
  const std::size_t n = ring.size();
  for (std::size_t i = 0; i < n; ++i) {
    const PlanarPoint a1 = as_planar(ring[i]);
    const PlanarPoint a2 = as_planar(ring[(i + 1) % n]);
    for (std::size_t j = i + 2; j < n; ++j) {
      if (i == 0 && j == n - 1) continue;
      const PlanarPoint b1 = as_planar(ring[j]);
      const PlanarPoint b2 = as_planar(ring[(j + 1) % n]);
      if (segments_intersect(a1, a2, b1, b2)) {
        throw std::invalid_argument(
            fmt::format("geo: {} ring self-intersects (edges {} and {})", what, i, j));
      }
    }
  }
}

BgPolygon to_boost(const Polygon& polygon, auto&& project) {
  BgPolygon out;
  for (GeoPoint p : polygon.exterior) {
    const PlanarPoint q = project(p);
    out.outer().emplace_back(q.x, q.y);
  }
  for (const Ring& hole : polygon.holes) {
    auto& inner = out.inners().emplace_back();
    for (GeoPoint p : hole) {
      const PlanarPoint q = project(p);
      inner.emplace_back(q.x, q.y);
    }
  }
  bg::correct(out);
  return out;
}

double boost_intersection_area(const BgPolygon& a, const BgPolygon& b) {
  BgMultiPolygon out;
  bg::intersection(a, b, out);
  return std::abs(bg::area(out));
}

bool ring_less(const BgPolygon& a, const BgPolygon& b) {
  const auto key = [](const BgPoint& p) { return std::pair(p.x(), p.y()); };
  return std::lexicographical_compare(
      a.outer().begin(), a.outer().end(), b.outer().begin(), b.outer().end(),
      [&](const BgPoint& p, const BgPoint& q) { return key(p) < key(q); });
}

}  // namespace

EqualAreaProjection::EqualAreaProjection(GeoPoint origin)
    : lon0_(origin.lon * kDegToRad),
      sin_lat0_(std::sin(origin.lat * kDegToRad)),
      cos_lat0_(std::cos(origin.lat * kDegToRad)) {}

PlanarPoint EqualAreaProjection::forward(GeoPoint p) const {
  const double lat = p.lat * kDegToRad;
  const double dlon = p.lon * kDegToRad - lon0_;
  const double sin_lat = std::sin(lat);
  const double cos_lat = std::cos(lat);
  const double cos_dlon = std::cos(dlon);
  const double denom = 1.0 + sin_lat0_ * sin_lat + cos_lat0_ * cos_lat * cos_dlon;
  if (denom <= 0.0) throw std::domain_error("geo: point antipodal to projection origin");
  const double k = std::sqrt(2.0 / denom);
  return {kEarthRadiusM * k * cos_lat * std::sin(dlon),
          kEarthRadiusM * k * (cos_lat0_ * sin_lat - sin_lat0_ * cos_lat * cos_dlon)};
}

GeoPoint EqualAreaProjection::inverse(PlanarPoint p) const {
  const double x = p.x / kEarthRadiusM;
  const double y = p.y / kEarthRadiusM;
  const double rho = std::hypot(x, y);
  if (rho == 0.0) return {lon0_ * kRadToDeg, std::asin(sin_lat0_) * kRadToDeg};
  const double c = 2.0 * std::asin(std::min(1.0, rho / 2.0));
  const double sin_c = std::sin(c);
  const double cos_c = std::cos(c);
  const double lat = std::asin(cos_c * sin_lat0_ + y * sin_c * cos_lat0_ / rho);
  const double lon = lon0_ + std::atan2(x * sin_c, rho * cos_lat0_ * cos_c - y * sin_lat0_ * sin_c);
  return {lon * kRadToDeg, lat * kRadToDeg};
}

void validate_point(GeoPoint p) {
  if (!std::isfinite(p.lon) || !std::isfinite(p.lat) || p.lon < -180.0 || p.lon > 180.0 ||
      p.lat < -90.0 || p.lat > 90.0) {
    throw std::domain_error(fmt::format("geo: coordinate ({}, {}) out of WGS84 range", p.lon, p.lat));
  }
}

Polygon normalized(Polygon polygon) {
  polygon.exterior = strip_closing(std::move(polygon.exterior));
  for (Ring& hole : polygon.holes) hole = strip_closing(std::move(hole));
  return polygon;
}

void validate_polygon(const Polygon& raw) {
  const Polygon polygon = normalized(raw);
  validate_ring(polygon.exterior, "exterior");
  if (polygon.holes.empty()) return;
  BgPolygon outer;
  for (GeoPoint p : polygon.exterior) outer.outer().emplace_back(p.lon, p.lat);
  bg::correct(outer);
  for (const Ring& hole : polygon.holes) {
    validate_ring(hole, "hole");
    for (GeoPoint p : hole) {
      if (!bg::covered_by(BgPoint(p.lon, p.lat), outer)) {
        throw std::invalid_argument("geo: hole vertex lies outside the exterior ring");
      }
    }
  }
}

GeoPoint vertex_centroid(const Polygon& raw) {
  const Ring ring = strip_closing(raw.exterior);
  if (ring.empty()) throw std::invalid_argument("geo: empty exterior ring");
  double lon = 0.0;
  double lat = 0.0;
  for (GeoPoint p : ring) {
    lon += p.lon;
    lat += p.lat;
  }
  const auto n = static_cast<double>(ring.size());
  return {lon / n, lat / n};
}

GeoBox bounding_box(const Polygon& polygon) {
  if (polygon.exterior.empty()) throw std::invalid_argument("geo: empty exterior ring");
  GeoBox box{polygon.exterior.front().lon, polygon.exterior.front().lat,
             polygon.exterior.front().lon, polygon.exterior.front().lat};
  for (GeoPoint p : polygon.exterior) {
    box.west = std::min(box.west, p.lon);
    box.east = std::max(box.east, p.lon);
    box.south = std::min(box.south, p.lat);
    box.north = std::max(box.north, p.lat);
  }
  return box;
}

double mercator_x(double lon) { return kEarthRadiusM * lon * kDegToRad; }

double mercator_y(double lat) {
  if (!(std::abs(lat) < kMercatorMaxLat)) {
    throw std::domain_error(fmt::format("geo: latitude {} beyond the Web Mercator limit", lat));
  }
  return kEarthRadiusM * std::log(std::tan(std::numbers::pi / 4.0 + lat * kDegToRad / 2.0));
}

double mercator_lon(double x) { return x / kEarthRadiusM * kRadToDeg; }

double mercator_lat(double y) {
  return (2.0 * std::atan(std::exp(y / kEarthRadiusM)) - std::numbers::pi / 2.0) * kRadToDeg;
}

double ground_resolution(double lat, int zoom) {
  if (!std::isfinite(lat) || std::abs(lat) > 90.0) {
    throw std::domain_error(fmt::format("geo: latitude {} out of range", lat));
  }
  if (zoom < 0) throw std::domain_error(fmt::format("geo: negative zoom {}", zoom));
  const double value = std::cos(lat * kDegToRad) * 2.0 * std::numbers::pi * kEarthRadiusM /
                       (kTileSizePx * std::ldexp(1.0, zoom));
  return std::max(0.0, value);
}

ImageFootprint make_footprint(GeoPoint center, int zoom, int width_px, int height_px) {
  validate_point(center);
  if (width_px < 0 || height_px < 0) throw std::domain_error("geo: negative image size");
  return {center, zoom, width_px, height_px, ground_resolution(center.lat, zoom)};
}

GeoBox footprint_bounds(const ImageFootprint& fp) {
  const double cx = mercator_x(fp.center.lon);
  const double cy = mercator_y(fp.center.lat);
  const double m_per_px = 2.0 * std::numbers::pi * kEarthRadiusM / (kTileSizePx * std::ldexp(1.0, fp.zoom));
  const double half_w = 0.5 * fp.width_px * m_per_px;
  const double half_h = 0.5 * fp.height_px * m_per_px;
  if (half_w == 0.0 && half_h == 0.0) {
    return {fp.center.lon, fp.center.lat, fp.center.lon, fp.center.lat};
  }
  return {mercator_lon(cx - half_w), mercator_lat(cy - half_h), mercator_lon(cx + half_w),
          mercator_lat(cy + half_h)};
}

TilePlan plan_tiles(const BlockUnit& unit, int zoom, int width_px, int height_px) {
  if (width_px <= 0 || height_px <= 0) throw std::invalid_argument("geo: tile size must be positive");
  if (zoom < 0) throw std::domain_error("geo: negative zoom");
  const Polygon polygon = normalized(unit.geometry);
  validate_polygon(polygon);

  const GeoBox bbox = bounding_box(polygon);
  const double m_per_px = 2.0 * std::numbers::pi * kEarthRadiusM / (kTileSizePx * std::ldexp(1.0, zoom));
  const double cell_w = width_px * m_per_px;
  const double cell_h = height_px * m_per_px;
  const double x_west = mercator_x(bbox.west);
  const double y_north = mercator_y(bbox.north);
  const double span_x = (mercator_x(bbox.east) - x_west) / cell_w;
  const double span_y = (y_north - mercator_y(bbox.south)) / cell_h;
  // Slack keeps an exact multiple of the cell size from growing an extra column.
  constexpr double kSlack = 1e-9;
  const int ncols = std::max(1, static_cast<int>(std::ceil(span_x - kSlack)));
  const int nrows = std::max(1, static_cast<int>(std::ceil(span_y - kSlack)));

  const BgPolygon shape = to_boost(polygon, as_planar);
  TilePlan plan{unit.geoid, {}, {}};
  for (int row = 0; row < nrows; ++row) {
    for (int col = 0; col < ncols; ++col) {
      const GeoPoint center{mercator_lon(x_west + (col + 0.5) * cell_w),
                            mercator_lat(y_north - (row + 0.5) * cell_h)};
      const ImageFootprint fp = make_footprint(center, zoom, width_px, height_px);
      const GeoBox b = footprint_bounds(fp);
      const BgPolygon cell = to_boost(box_polygon(b.west, b.south, b.east, b.north), as_planar);
      if (boost_intersection_area(shape, cell) <= 0.0) continue;
      plan.footprints.push_back(fp);
      plan.grid_index.emplace_back(row, col);
    }
  }
  return plan;
}

std::vector<BlockUnit> select_populated(std::span<const BlockUnit> blocks) {
  std::vector<BlockUnit> out;
  for (const BlockUnit& b : blocks) {
    if (b.population > 0) out.push_back(b);
  }
  return out;
}

double polygon_area_m2(const Polygon& raw) {
  const Polygon polygon = normalized(raw);
  validate_polygon(polygon);
  const EqualAreaProjection proj(vertex_centroid(polygon));
  const auto project = [&](GeoPoint p) { return proj.forward(p); };
  double area = std::abs(ring_signed_area(polygon.exterior, project));
  for (const Ring& hole : polygon.holes) area -= std::abs(ring_signed_area(hole, project));
  return std::max(0.0, area);
}

double intersection_area_m2(const Polygon& raw_a, const Polygon& raw_b) {
  const Polygon a = normalized(raw_a);
  const Polygon b = normalized(raw_b);
  const GeoPoint ca = vertex_centroid(a);
  const GeoPoint cb = vertex_centroid(b);
  const EqualAreaProjection proj({(ca.lon + cb.lon) / 2.0, (ca.lat + cb.lat) / 2.0});
  const auto project = [&](GeoPoint p) { return proj.forward(p); };
  const BgPolygon pa = to_boost(a, project);
  const BgPolygon pb = to_boost(b, project);
  const double raw = ring_less(pb, pa) ? boost_intersection_area(pb, pa) : boost_intersection_area(pa, pb);
  const double cap = std::min(std::abs(bg::area(pa)), std::abs(bg::area(pb)));
  return std::clamp(raw, 0.0, cap);
}

bool shares_boundary(const Polygon& raw_a, const Polygon& raw_b, double tol_deg) {
  const Polygon a = normalized(raw_a);
  const Polygon b = normalized(raw_b);
  const GeoBox ba = bounding_box(a);
  const GeoBox bb = bounding_box(b);
  if (ba.west > bb.east + tol_deg || bb.west > ba.east + tol_deg || ba.south > bb.north + tol_deg ||
      bb.south > ba.north + tol_deg) {
    return false;
  }
  const auto edges = [](const Polygon& p) {
    std::vector<std::pair<PlanarPoint, PlanarPoint>> out;
    const auto add = [&](const Ring& r) {
      for (std::size_t i = 0; i < r.size(); ++i) {
        out.emplace_back(as_planar(r[i]), as_planar(r[(i + 1) % r.size()]));
      }
    };
    add(p.exterior);
    for (const Ring& h : p.holes) add(h);
    return out;
  };
  const auto ea = edges(a);
  const auto eb = edges(b);
  for (const auto& [p1, p2] : ea) {
    const double len = std::hypot(p2.x - p1.x, p2.y - p1.y);
    if (len <= tol_deg) continue;
    const double ux = (p2.x - p1.x) / len;
    const double uy = (p2.y - p1.y) / len;
    for (const auto& [q1, q2] : eb) {
      // Perpendicular distance of both endpoints to the supporting line.
      const double d1 = std::abs((q1.x - p1.x) * uy - (q1.y - p1.y) * ux);
      const double d2 = std::abs((q2.x - p1.x) * uy - (q2.y - p1.y) * ux);
      if (d1 > tol_deg || d2 > tol_deg) continue;
      const double t1 = (q1.x - p1.x) * ux + (q1.y - p1.y) * uy;
      const double t2 = (q2.x - p1.x) * ux + (q2.y - p1.y) * uy;
      const double lo = std::max(0.0, std::min(t1, t2));
      const double hi = std::min(len, std::max(t1, t2));
      if (hi - lo > tol_deg) return true;
    }
  }
  return false;
}

Polygon box_polygon(double west, double south, double east, double north) {
  return Polygon{{{west, south}, {east, south}, {east, north}, {west, north}}, {}};
}

}  // namespace solarmap::geo
