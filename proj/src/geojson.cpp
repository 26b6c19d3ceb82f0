#include "solarmap/geojson.hpp"

#include <fstream>
#include <stdexcept>

#include <fmt/format.h>

namespace solarmap::geo {

namespace {

Ring parse_ring(const nlohmann::json& coords) {
  Ring ring;
  for (const auto& c : coords) {
    if (!c.is_array() || c.size() < 2) throw std::invalid_argument("geojson: malformed position");
    ring.push_back({c[0].get<double>(), c[1].get<double>()});
  }
  return ring;
}

Polygon parse_polygon(const nlohmann::json& rings) {
  if (!rings.is_array() || rings.empty()) throw std::invalid_argument("geojson: polygon without rings");
  Polygon polygon;
  polygon.exterior = parse_ring(rings[0]);
  for (std::size_t i = 1; i < rings.size(); ++i) polygon.holes.push_back(parse_ring(rings[i]));
  return normalized(std::move(polygon));
}

nlohmann::json ring_to_json(const Ring& ring) {
  auto out = nlohmann::json::array();
  for (GeoPoint p : ring) out.push_back({p.lon, p.lat});
  if (!ring.empty()) out.push_back({ring.front().lon, ring.front().lat});
  return out;
}

}  // namespace

std::vector<PolygonFeature> parse_feature_collection(const nlohmann::json& doc) {
  if (doc.value("type", "") != "FeatureCollection") {
    throw std::invalid_argument("geojson: expected a FeatureCollection");
  }
  std::vector<PolygonFeature> out;
  for (const auto& feature : doc.at("features")) {
    const auto& geometry = feature.at("geometry");
    const std::string type = geometry.at("type").get<std::string>();
    nlohmann::json props = feature.value("properties", nlohmann::json::object());
    if (type == "Polygon") {
      out.push_back({parse_polygon(geometry.at("coordinates")), props});
    } else if (type == "MultiPolygon") {
      for (const auto& part : geometry.at("coordinates")) out.push_back({parse_polygon(part), props});
    } else {
      throw std::invalid_argument(fmt::format("geojson: unsupported geometry type '{}'", type));
    }
  }
  return out;
}

std::vector<PolygonFeature> read_feature_collection(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(fmt::format("geojson: cannot open {}", path.string()));
  return parse_feature_collection(nlohmann::json::parse(in));
}

std::vector<BlockUnit> read_block_units(const std::filesystem::path& path) {
  std::vector<BlockUnit> units;
  for (auto& f : read_feature_collection(path)) {
    BlockUnit unit;
    unit.geoid = f.properties.at("geoid").get<std::string>();
    unit.population = f.properties.at("population").get<std::int64_t>();
    if (unit.geoid.empty()) throw std::invalid_argument("geojson: empty geoid");
    if (unit.population < 0) throw std::invalid_argument(fmt::format("geojson: negative population for {}", unit.geoid));
    unit.geometry = std::move(f.polygon);
    units.push_back(std::move(unit));
  }
  return units;
}

nlohmann::json polygon_to_geojson(const Polygon& polygon) {
  auto rings = nlohmann::json::array();
  rings.push_back(ring_to_json(polygon.exterior));
  for (const Ring& hole : polygon.holes) rings.push_back(ring_to_json(hole));
  return {{"type", "Polygon"}, {"coordinates", rings}};
}

nlohmann::json make_feature_collection(const std::vector<PolygonFeature>& features) {
  auto list = nlohmann::json::array();
  for (const auto& f : features) {
    list.push_back({{"type", "Feature"}, {"properties", f.properties}, {"geometry", polygon_to_geojson(f.polygon)}});
  }
  return {{"type", "FeatureCollection"}, {"features", list}};
}

}  // namespace solarmap::geo
