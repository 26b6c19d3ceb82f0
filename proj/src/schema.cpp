#include "solarmap/schema.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

#include <fmt/format.h>

namespace solarmap::ingest {

std::string_view to_string(Granularity g) {
  switch (g) {
    case Granularity::BlockGroup: return "block_group";
    case Granularity::Tract: return "tract";
    case Granularity::County: return "county";
    case Granularity::Zip: return "zip";
    case Granularity::Jurisdiction: return "jurisdiction";
    case Granularity::Utility: return "utility";
  }
  return "unknown";
}

FeatureSchema::FeatureSchema(std::vector<FeatureSpec> features, std::vector<FeatureSpec> targets)
    : features_(std::move(features)), targets_(std::move(targets)) {
  std::set<std::string> seen;
  for (const auto* list : {&features_, &targets_}) {
    for (const auto& f : *list) {
      if (!seen.insert(f.name).second) throw std::invalid_argument(fmt::format("schema: duplicate name '{}'", f.name));
      if (!(f.min <= f.max)) throw std::invalid_argument(fmt::format("schema: '{}' has min > max", f.name));
    }
  }
}

const FeatureSchema& FeatureSchema::standard() {
  using G = Granularity;
  static const FeatureSchema schema(
      {
          {"% Tree-to-Land Area", "ratio", 0.001, 0.052, G::BlockGroup},
          {"Solar Radiation", "kWh/m2/day", 4.712, 7.236, G::BlockGroup},
          {"Median HH Income", "USD", 14145, 250000, G::BlockGroup},
          {"Median Age", "years", 17.7, 84.6, G::BlockGroup},
          {"% 65 +", "ratio", 0.001, 1.000, G::BlockGroup},
          {"% Bachelors +", "ratio", 0.001, 0.855, G::BlockGroup},
          {"% Renters", "ratio", 0.001, 1.000, G::BlockGroup},
          {"Year Structure Built", "year", 1939, 2014, G::BlockGroup},
          {"Avg. No. Bedrooms", "count", 0.466, 4.524, G::BlockGroup},
          {"Median Home Value", "USD", 10000, 2000000, G::BlockGroup},
          {"Rurality", "code", 1.000, 9.000, G::County},
          {"% Dem. Votes", "ratio", 0.109, 0.796, G::County},
          {"% African American", "ratio", 0.000, 0.633, G::BlockGroup},
          {"% Hispanic", "ratio", 0.000, 0.923, G::BlockGroup},
          {"% Asian", "ratio", 0.000, 0.422, G::BlockGroup},
          {"% Other Race", "ratio", 0.000, 0.973, G::BlockGroup},
          {"Transmission Volt.", "aggregate", 0.000, 8.166, G::BlockGroup},
          {"Transmission Length", "aggregate", 0.000, 14.455, G::BlockGroup},
          {"Muni. Utilities", "flag", 0.000, 1.000, G::Utility},
          {"Rural Co-Ops", "flag", 0.000, 1.000, G::Utility},
          {"Resident. Elec. Rate", "USD/kWh", 0.062, 0.212, G::Zip},
          {"Commercial Elec. Rate", "USD/kWh", 0.076, 0.260, G::Zip},
          {"Solar Mandate", "flag", 0.000, 1.000, G::Jurisdiction, true},
          {"Net Metering", "flag", 0.000, 1.000, G::Jurisdiction, true},
          {"SolSmart Awardee", "flag", 0.000, 1.000, G::Jurisdiction, true},
          {"Online Permit", "flag", 0.000, 1.000, G::Jurisdiction, true},
          {"Sameday InPerson Permit", "flag", 0.000, 1.000, G::Jurisdiction, true},
          {"Permit & Pre-Install Days", "business days", 8.000, 35, G::Jurisdiction, true},
          {"Drought Risk", "EAL score", 0.000, 29.35, G::Tract},
          {"Wildfire Risk", "EAL score", 0.000, 48.921, G::Tract},
          {"Hail Risk", "EAL score", 2.583, 64.351, G::Tract},
          {"Winter Weather Risk", "EAL score", 0.000, 62.890, G::Tract},
          {"Strong Wind Risk", "EAL score", 4.107, 59.476, G::Tract},
          {"Tornado Risk", "EAL score", 5.345, 56.195, G::Tract},
          {"% Below Poverty", "ratio", 0.000, 0.847, G::Tract},
          {"% Disability", "percent", 0.400, 44.6, G::Tract},
          {"% Single Parent", "percent", 0.000, 27.600, G::Tract},
          {"% Limited English", "percent", 0.000, 37.700, G::Tract},
          {"% 10+ Unit Housing", "percent", 0.000, 98.900, G::Tract},
          {"% Mobile Homes", "percent", 0.000, 79.100, G::Tract},
          {"% Ppl. > Rooms", "percent", 0.000, 24.800, G::Tract},
          {"% No Vehicle", "percent", 0.000, 43.300, G::Tract},
          {"% Unemployed", "percent", 0.000, 28.400, G::Tract},
      },
      {
          {std::string(kTargetPvCount), "systems/household", 0.001, 0.784, G::BlockGroup},
          {std::string(kTargetPvRatio), "ratio", 0.001, 0.259, G::BlockGroup},
      });
  return schema;
}

std::optional<std::size_t> FeatureSchema::find(std::string_view name) const {
  const auto it = std::find_if(features_.begin(), features_.end(), [&](const FeatureSpec& f) { return f.name == name; });
  if (it == features_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - features_.begin());
}

std::size_t FeatureSchema::index_of(std::string_view name) const {
  if (auto i = find(name)) return *i;
  throw std::out_of_range(fmt::format("schema: unknown feature '{}'", name));
}

const FeatureSpec& FeatureSchema::target(std::string_view name) const {
  for (const auto& t : targets_) {
    if (t.name == name) return t;
  }
  throw std::out_of_range(fmt::format("schema: unknown target '{}'", name));
}

std::vector<std::string> FeatureSchema::names(bool include_policy) const {
  std::vector<std::string> out;
  for (const auto& f : features_) {
    if (include_policy || !f.policy) out.push_back(f.name);
  }
  return out;
}

}  // namespace solarmap::ingest
