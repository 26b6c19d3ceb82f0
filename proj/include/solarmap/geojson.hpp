#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "solarmap/geo.hpp"

namespace solarmap::geo {

/// One polygon part of a GeoJSON feature. MultiPolygon features yield one
/// PolygonFeature per part, all sharing the same properties.
struct PolygonFeature {
  Polygon polygon;
  nlohmann::json properties;
};

std::vector<PolygonFeature> parse_feature_collection(const nlohmann::json& doc);
std::vector<PolygonFeature> read_feature_collection(const std::filesystem::path& path);

/// Reads features with `geoid` (string) and `population` (integer) properties.
std::vector<BlockUnit> read_block_units(const std::filesystem::path& path);

nlohmann::json polygon_to_geojson(const Polygon& polygon);
nlohmann::json make_feature_collection(const std::vector<PolygonFeature>& features);

}  // namespace solarmap::geo
