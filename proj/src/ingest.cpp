#include "solarmap/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>

#include "solarmap/table_io.hpp"

namespace solarmap::ingest {

namespace {

bool boxes_overlap(const geo::GeoBox& a, const geo::GeoBox& b) {
  return a.west <= b.east && b.west <= a.east && a.south <= b.north && b.south <= a.north;
}

std::vector<double> overlap_shares(std::span<const geo::Polygon> bg_parts, const OverlayLayer& layer) {
  std::vector<geo::GeoBox> part_boxes;
  for (const auto& p : bg_parts) part_boxes.push_back(geo::bounding_box(p));
  std::vector<double> shares(layer.features.size(), 0.0);
  for (std::size_t j = 0; j < layer.features.size(); ++j) {
    const geo::GeoBox fbox = geo::bounding_box(layer.features[j].polygon);
    for (std::size_t i = 0; i < bg_parts.size(); ++i) {
      if (!boxes_overlap(part_boxes[i], fbox)) continue;
      shares[j] += geo::intersection_area_m2(bg_parts[i], layer.features[j].polygon);
    }
  }
  return shares;
}

bool shares_tied(double a, double b) {
  return std::abs(a - b) <= kShareTieTolerance * std::max(std::abs(a), std::abs(b));
}

/// Numeric comparison when both codes are integers, lexicographic otherwise.
bool zip_less(const std::string& a, const std::string& b) {
  long long va = 0;
  long long vb = 0;
  const auto ra = std::from_chars(a.data(), a.data() + a.size(), va);
  const auto rb = std::from_chars(b.data(), b.data() + b.size(), vb);
  const bool na = ra.ec == std::errc() && ra.ptr == a.data() + a.size();
  const bool nb = rb.ec == std::errc() && rb.ptr == b.data() + b.size();
  if (na && nb && va != vb) return va < vb;
  return a < b;
}

}  // namespace

BlockGroupRecord BlockGroupRecord::empty(std::string geoid, const FeatureSchema& schema) {
  BlockGroupRecord r;
  r.geoid = std::move(geoid);
  r.values.assign(schema.size(), std::nullopt);
  return r;
}

std::optional<double>& BlockGroupRecord::at(const FeatureSchema& schema, std::string_view name) {
  return values.at(schema.index_of(name));
}

const std::optional<double>& BlockGroupRecord::at(const FeatureSchema& schema, std::string_view name) const {
  return values.at(schema.index_of(name));
}

void OverlayLayer::validate(const FeatureSchema& schema) const {
  for (const auto& f : features) {
    for (const auto& [key, _] : f.payload) {
      if (!schema.contains(key)) {
        throw std::invalid_argument(fmt::format("ingest: layer '{}' feature '{}' carries unknown attribute '{}'",
                                                name, f.id, key));
      }
    }
  }
}

OverlayLayer overlay_from_features(std::string name, const std::vector<geo::PolygonFeature>& features,
                                   std::string_view id_property, const FeatureSchema& schema,
                                   std::string_view population_property) {
  OverlayLayer layer{std::move(name), {}};
  for (const auto& f : features) {
    OverlayFeature of;
    const auto& id = f.properties.at(std::string(id_property));
    of.id = id.is_string() ? id.get<std::string>() : id.dump();
    of.polygon = f.polygon;
    for (const auto& [key, value] : f.properties.items()) {
      if (!schema.contains(key)) continue;
      of.payload[key] = value.is_number() ? std::optional<double>(value.get<double>()) : std::nullopt;
    }
    if (!population_property.empty()) {
      const auto it = f.properties.find(std::string(population_property));
      if (it != f.properties.end() && it->is_number()) of.population = it->get<double>();
    }
    layer.features.push_back(std::move(of));
  }
  return layer;
}

JoinResult spatial_join_largest_share(std::span<const geo::Polygon> bg_parts, const OverlayLayer& layer) {
  JoinResult result;
  result.shares_m2 = overlap_shares(bg_parts, layer);
  for (std::size_t j = 0; j < layer.features.size(); ++j) {
    const double share = result.shares_m2[j];
    if (!(share > 0.0)) continue;
    if (!result.chosen) {
      result.chosen = j;
      continue;
    }
    const double best = result.shares_m2[*result.chosen];
    if (shares_tied(share, best)) {
      if (layer.features[j].id < layer.features[*result.chosen].id) result.chosen = j;
    } else if (share > best) {
      result.chosen = j;
    }
  }
  return result;
}

JoinResult spatial_join_largest_share(const geo::Polygon& bg, const OverlayLayer& layer) {
  return spatial_join_largest_share(std::span<const geo::Polygon>(&bg, 1), layer);
}

JoinResult assign_zip_by_population(std::span<const geo::Polygon> bg_parts, const OverlayLayer& zips) {
  JoinResult result;
  result.shares_m2 = overlap_shares(bg_parts, zips);
  for (std::size_t j = 0; j < zips.features.size(); ++j) {
    if (!(result.shares_m2[j] > 0.0)) continue;
    const auto& zip = zips.features[j];
    if (!zip.population) throw std::invalid_argument(fmt::format("ingest: zip {} has no population", zip.id));
    if (!result.chosen) {
      result.chosen = j;
      continue;
    }
    const auto& best = zips.features[*result.chosen];
    if (*zip.population > *best.population ||
        (*zip.population == *best.population && zip_less(zip.id, best.id))) {
      result.chosen = j;
    }
  }
  return result;
}

JoinResult assign_zip_by_population(const geo::Polygon& bg, const OverlayLayer& zips) {
  return assign_zip_by_population(std::span<const geo::Polygon>(&bg, 1), zips);
}

std::string tract_of(std::string_view bg_geoid) {
  if (bg_geoid.size() != 12 || !std::all_of(bg_geoid.begin(), bg_geoid.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    throw std::invalid_argument(fmt::format("ingest: '{}' is not a 12-digit block-group geoid", bg_geoid));
  }
  return std::string(bg_geoid.substr(0, 11));
}

BroadcastResult broadcast_tract_to_blockgroups(const TractTable& tracts, std::span<const std::string> bg_geoids) {
  BroadcastResult result;
  for (const auto& bg : bg_geoids) {
    const auto it = tracts.find(tract_of(bg));
    if (it == tracts.end()) {
      result.unknown.push_back(bg);
      continue;
    }
    result.values[bg] = it->second;
  }
  return result;
}

TractTable read_tract_table(const std::filesystem::path& path, const FeatureSchema& schema) {
  const auto table = io::read_csv(path);
  auto key = table.find_column("tract");
  if (!key) key = table.find_column("geoid");
  if (!key) throw std::invalid_argument("ingest: tract table needs a 'tract' or 'geoid' column");
  TractTable out;
  for (const auto& row : table.rows) {
    auto& values = out[row[*key]];
    for (std::size_t c = 0; c < table.header.size(); ++c) {
      if (c == *key || !schema.contains(table.header[c])) continue;
      if (auto v = io::parse_optional(row[c])) values[table.header[c]] = *v;
    }
  }
  return out;
}

AdjacencyGraph rook_adjacency(const std::vector<std::pair<std::string, geo::Polygon>>& units) {
  AdjacencyGraph graph;
  for (const auto& [id, _] : units) graph[id];
  for (std::size_t i = 0; i < units.size(); ++i) {
    for (std::size_t j = i + 1; j < units.size(); ++j) {
      if (units[i].first == units[j].first) continue;
      if (geo::shares_boundary(units[i].second, units[j].second)) {
        graph[units[i].first].insert(units[j].first);
        graph[units[j].first].insert(units[i].first);
      }
    }
  }
  return graph;
}

void validate_graph(const AdjacencyGraph& graph) {
  for (const auto& [node, neighbours] : graph) {
    for (const auto& n : neighbours) {
      if (n == node) throw std::invalid_argument(fmt::format("ingest: {} is adjacent to itself", node));
      const auto back = graph.find(n);
      if (back == graph.end() || !back->second.contains(node)) {
        throw std::invalid_argument(fmt::format("ingest: adjacency {} -> {} is not symmetric", node, n));
      }
    }
  }
}

ImputationResult impute_adjacent_mean(std::vector<BlockGroupRecord> records, const AdjacencyGraph& graph,
                                      std::span<const std::string> features, const FeatureSchema& schema) {
  ImputationResult result;
  std::map<std::string, std::size_t> row_of;
  for (std::size_t i = 0; i < records.size(); ++i) row_of[records[i].geoid] = i;

  for (const auto& feature : features) {
    const std::size_t col = schema.index_of(feature);
    std::size_t passes = 0;
    while (true) {
      std::vector<std::pair<std::size_t, double>> fills;
      for (std::size_t i = 0; i < records.size(); ++i) {
        if (records[i].values[col]) continue;
        const auto node = graph.find(records[i].geoid);
        if (node == graph.end()) continue;
        double sum = 0.0;
        std::size_t count = 0;
        for (const auto& n : node->second) {
          const auto r = row_of.find(n);
          if (r == row_of.end()) continue;
          if (const auto& v = records[r->second].values[col]) {
            sum += *v;
            ++count;
          }
        }
        if (count > 0) fills.emplace_back(i, sum / static_cast<double>(count));
      }
      // Fills are applied after the scan so every pass reads the previous pass only.
      for (const auto& [i, v] : fills) records[i].values[col] = v;
      if (fills.empty()) break;
      result.filled += fills.size();
      ++passes;
    }
    result.passes = std::max(result.passes, passes);
    for (const auto& r : records) {
      if (!r.values[col]) result.unresolved.push_back({r.geoid, feature});
    }
  }
  result.records = std::move(records);
  return result;
}

std::size_t ValidationReport::total_violations() const {
  std::size_t n = 0;
  for (const auto& f : features) n += f.out_of_range;
  return n;
}

std::size_t ValidationReport::total_nulls() const {
  std::size_t n = 0;
  for (const auto& f : features) n += f.nulls;
  return n;
}

std::string ValidationReport::to_csv() const {
  std::string out = "feature,nulls,out_of_range,offending_geoids\n";
  for (const auto& f : features) {
    std::string ids;
    for (std::size_t i = 0; i < f.offending_geoids.size(); ++i) {
      if (i) ids += ';';
      ids += f.offending_geoids[i];
    }
    out += io::csv_line({f.name, std::to_string(f.nulls), std::to_string(f.out_of_range), ids});
  }
  return out;
}

ValidationReport validate_schema(std::span<const BlockGroupRecord> records, const FeatureSchema& schema) {
  ValidationReport report;
  const auto check = [&](const FeatureSpec& spec, auto&& get) {
    FeatureValidation fv{spec.name, 0, 0, {}};
    for (const auto& r : records) {
      const std::optional<double> v = get(r);
      if (!v) {
        ++fv.nulls;
      } else if (!spec.in_range(*v)) {
        ++fv.out_of_range;
        fv.offending_geoids.push_back(r.geoid);
      }
    }
    report.features.push_back(std::move(fv));
  };
  for (std::size_t c = 0; c < schema.size(); ++c) {
    check(schema.features()[c], [&](const BlockGroupRecord& r) {
      return c < r.values.size() ? r.values[c] : std::nullopt;
    });
  }
  check(schema.target(kTargetPvCount), [](const BlockGroupRecord& r) { return r.pv_count_per_hh; });
  check(schema.target(kTargetPvRatio), [](const BlockGroupRecord& r) { return r.pv_to_roof_ratio; });
  return report;
}

std::vector<BlockGroupRecord> parse_feature_table(std::istream& in, const FeatureSchema& schema) {
  const auto table = io::parse_csv(in);
  const std::size_t geoid = table.column("geoid");
  std::vector<std::optional<std::size_t>> cols;
  for (const auto& f : schema.features()) cols.push_back(table.find_column(f.name));
  const auto count_col = table.find_column(kTargetPvCount);
  const auto ratio_col = table.find_column(kTargetPvRatio);
  std::vector<BlockGroupRecord> out;
  for (const auto& row : table.rows) {
    auto rec = BlockGroupRecord::empty(row[geoid], schema);
    for (std::size_t c = 0; c < cols.size(); ++c) {
      if (cols[c]) rec.values[c] = io::parse_optional(row[*cols[c]]);
    }
    if (count_col) rec.pv_count_per_hh = io::parse_optional(row[*count_col]);
    if (ratio_col) rec.pv_to_roof_ratio = io::parse_optional(row[*ratio_col]);
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<BlockGroupRecord> read_feature_table(const std::filesystem::path& path, const FeatureSchema& schema) {
  std::istringstream in(io::read_file(path));
  return parse_feature_table(in, schema);
}

std::string feature_table_csv(std::span<const BlockGroupRecord> records, const FeatureSchema& schema) {
  std::vector<std::string> header{"geoid"};
  for (const auto& f : schema.features()) header.push_back(f.name);
  header.emplace_back(kTargetPvCount);
  header.emplace_back(kTargetPvRatio);
  std::string out = io::csv_line(header);
  for (const auto& r : records) {
    std::vector<std::string> row{r.geoid};
    for (const auto& v : r.values) row.push_back(io::format_optional(v));
    row.push_back(io::format_optional(r.pv_count_per_hh));
    row.push_back(io::format_optional(r.pv_to_roof_ratio));
    out += io::csv_line(row);
  }
  return out;
}

JoinOutput join_features(const JoinInputs& inputs, const FeatureSchema& schema) {
  JoinOutput out;
  std::map<std::string, std::vector<geo::Polygon>> parts;
  for (const auto& [id, polygon] : inputs.block_groups) parts[id].push_back(polygon);

  std::map<std::string, BlockGroupRecord> records;
  for (const auto& [id, _] : parts) records.emplace(id, BlockGroupRecord::empty(id, schema));
  for (const auto& base : inputs.base) {
    auto it = records.find(base.geoid);
    if (it == records.end()) {
      out.flags.push_back({base.geoid, "geometry", "no block-group polygon; spatial joins skipped"});
      it = records.emplace(base.geoid, BlockGroupRecord::empty(base.geoid, schema)).first;
    }
    auto& rec = it->second;
    for (std::size_t c = 0; c < std::min(base.values.size(), rec.values.size()); ++c) {
      if (base.values[c]) rec.values[c] = base.values[c];
    }
    if (base.pv_count_per_hh) rec.pv_count_per_hh = base.pv_count_per_hh;
    if (base.pv_to_roof_ratio) rec.pv_to_roof_ratio = base.pv_to_roof_ratio;
  }

  const auto apply_layer = [&](const std::optional<OverlayLayer>& layer, bool by_population) {
    if (!layer) return;
    layer->validate(schema);
    for (const auto& [id, polys] : parts) {
      const JoinResult jr = by_population ? assign_zip_by_population(polys, *layer)
                                          : spatial_join_largest_share(polys, *layer);
      if (!jr.chosen) {
        out.flags.push_back({id, layer->name, "no overlapping feature; left unassigned"});
        continue;
      }
      auto& rec = records.at(id);
      for (const auto& [key, value] : layer->features[*jr.chosen].payload) rec.at(schema, key) = value;
    }
  };
  apply_layer(inputs.jurisdictions, false);
  apply_layer(inputs.utilities, false);
  apply_layer(inputs.zips, true);

  if (!inputs.tracts.empty()) {
    std::vector<std::string> ids;
    for (const auto& [id, _] : records) ids.push_back(id);
    const auto broadcast = broadcast_tract_to_blockgroups(inputs.tracts, ids);
    for (const auto& [bg, values] : broadcast.values) {
      auto& rec = records.at(bg);
      for (const auto& [key, v] : values) rec.at(schema, key) = v;
    }
    for (const auto& bg : broadcast.unknown) out.flags.push_back({bg, "tract", "parent tract not found"});
  }

  std::vector<BlockGroupRecord> list;
  for (auto& [_, rec] : records) list.push_back(std::move(rec));
  if (!inputs.impute_features.empty()) {
    const AdjacencyGraph graph = rook_adjacency(inputs.block_groups);
    auto imputed = impute_adjacent_mean(std::move(list), graph, inputs.impute_features, schema);
    list = std::move(imputed.records);
    for (const auto& u : imputed.unresolved) {
      out.flags.push_back({u.geoid, "impute", fmt::format("'{}' unresolvable from neighbours", u.feature)});
    }
  }
  out.records = std::move(list);
  return out;
}

}  // namespace solarmap::ingest
