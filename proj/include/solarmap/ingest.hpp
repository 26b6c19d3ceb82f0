#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "solarmap/geo.hpp"
#include "solarmap/geojson.hpp"
#include "solarmap/schema.hpp"

namespace solarmap::ingest {

/// One block-group row. values is parallel to FeatureSchema::features().
struct BlockGroupRecord {
  std::string geoid;
  std::vector<std::optional<double>> values;
  std::optional<double> pv_count_per_hh;
  std::optional<double> pv_to_roof_ratio;

  static BlockGroupRecord empty(std::string geoid, const FeatureSchema& schema);
  std::optional<double>& at(const FeatureSchema& schema, std::string_view name);
  const std::optional<double>& at(const FeatureSchema& schema, std::string_view name) const;
};

struct OverlayFeature {
  std::string id;
  geo::Polygon polygon;
  std::map<std::string, std::optional<double>> payload;
  std::optional<double> population;
};

/// Polygons carrying attributes to be attached to block groups (jurisdiction
/// policy flags, utility territory, zip rates, ...).
struct OverlayLayer {
  std::string name;
  std::vector<OverlayFeature> features;

  /// Throws when a payload key is not a schema feature.
  void validate(const FeatureSchema& schema) const;
};

/// Builds a layer from GeoJSON features. Properties named like schema
/// features become payload; `population_property` (when non-empty) is read
/// as the feature population.
OverlayLayer overlay_from_features(std::string name, const std::vector<geo::PolygonFeature>& features,
                                   std::string_view id_property, const FeatureSchema& schema,
                                   std::string_view population_property = {});

struct JoinResult {
  /// Index into the layer of the selected feature; empty when unassigned.
  std::optional<std::size_t> chosen;
  /// Overlap area with every layer feature, in layer order.
  std::vector<double> shares_m2;
};

/// Relative tolerance under which two overlap areas count as a tie.
inline constexpr double kShareTieTolerance = 1e-9;

/// Attaches the feature with the largest overlap; ties go to the smallest id.
JoinResult spatial_join_largest_share(std::span<const geo::Polygon> bg_parts, const OverlayLayer& layer);
JoinResult spatial_join_largest_share(const geo::Polygon& bg, const OverlayLayer& layer);

/// Among overlapping zips, the most populous; ties go to the numerically
/// smaller zip code.
JoinResult assign_zip_by_population(std::span<const geo::Polygon> bg_parts, const OverlayLayer& zips);
JoinResult assign_zip_by_population(const geo::Polygon& bg, const OverlayLayer& zips);

/// Parent tract of a 12-digit block-group geoid (first 11 digits).
std::string tract_of(std::string_view bg_geoid);

using TractTable = std::map<std::string, std::map<std::string, double>>;

struct BroadcastResult {
  std::map<std::string, std::map<std::string, double>> values;
  std::vector<std::string> unknown;
};

BroadcastResult broadcast_tract_to_blockgroups(const TractTable& tracts, std::span<const std::string> bg_geoids);

/// Reads a CSV keyed by a tract geoid column ("tract" or "geoid"); every
/// other column named like a schema feature is kept.
TractTable read_tract_table(const std::filesystem::path& path, const FeatureSchema& schema);

using AdjacencyGraph = std::map<std::string, std::set<std::string>>;

/// Rook contiguity between units (several polygon parts may share a geoid).
AdjacencyGraph rook_adjacency(const std::vector<std::pair<std::string, geo::Polygon>>& units);
void validate_graph(const AdjacencyGraph& graph);

struct UnresolvedValue {
  std::string geoid;
  std::string feature;
};

struct ImputationResult {
  std::vector<BlockGroupRecord> records;
  std::vector<UnresolvedValue> unresolved;
  std::size_t filled = 0;
  std::size_t passes = 0;
};

/// Fills nulls with the mean of non-null neighbours. Passes repeat, each using
/// the previous pass's values, until a pass fills nothing; what remains is
/// reported unresolved.
ImputationResult impute_adjacent_mean(std::vector<BlockGroupRecord> records, const AdjacencyGraph& graph,
                                      std::span<const std::string> features, const FeatureSchema& schema);

struct FeatureValidation {
  std::string name;
  std::size_t nulls = 0;
  std::size_t out_of_range = 0;
  std::vector<std::string> offending_geoids;
};

struct ValidationReport {
  std::vector<FeatureValidation> features;  // predictors then targets
  std::size_t total_violations() const;
  std::size_t total_nulls() const;
  std::string to_csv() const;
};

ValidationReport validate_schema(std::span<const BlockGroupRecord> records, const FeatureSchema& schema);

// Feature table CSV: geoid, the 43 feature columns, then the two targets.
std::vector<BlockGroupRecord> read_feature_table(const std::filesystem::path& path, const FeatureSchema& schema);
std::vector<BlockGroupRecord> parse_feature_table(std::istream& in, const FeatureSchema& schema);
std::string feature_table_csv(std::span<const BlockGroupRecord> records, const FeatureSchema& schema);

struct JoinFlag {
  std::string geoid;
  std::string stage;
  std::string message;
};

struct JoinInputs {
  /// Block-group polygons; a geoid may appear on several parts.
  std::vector<std::pair<std::string, geo::Polygon>> block_groups;
  /// Block-group level values already keyed by geoid.
  std::vector<BlockGroupRecord> base;
  std::optional<OverlayLayer> jurisdictions;
  std::optional<OverlayLayer> utilities;
  std::optional<OverlayLayer> zips;
  TractTable tracts;
  std::vector<std::string> impute_features{"Median Home Value", "Year Structure Built"};
};

struct JoinOutput {
  std::vector<BlockGroupRecord> records;
  std::vector<JoinFlag> flags;
};

/// Full feature assembly: overlay joins, zip assignment, tract broadcast and
/// adjacency imputation, in that order. Output is ordered by geoid.
JoinOutput join_features(const JoinInputs& inputs, const FeatureSchema& schema);

}  // namespace solarmap::ingest
