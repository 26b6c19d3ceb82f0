#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace solarmap::ingest {

/// Spatial unit a feature is published at before it reaches block groups.
enum class Granularity { BlockGroup, Tract, County, Zip, Jurisdiction, Utility };

std::string_view to_string(Granularity g);

struct FeatureSpec {
  std::string name;
  std::string unit;
  double min = 0.0;
  double max = 0.0;
  Granularity granularity = Granularity::BlockGroup;
  /// Local energy-policy variable; missing for unincorporated block groups.
  bool policy = false;

  bool in_range(double v) const { return v >= min && v <= max; }
};

inline constexpr std::string_view kTargetPvCount = "PV Count per HH";
inline constexpr std::string_view kTargetPvRatio = "PV-to-Roof Ratio";

/// The 43 predictors and two targets of the block-group feature table, with
/// legal ranges taken from the published summary statistics.
class FeatureSchema {
 public:
  FeatureSchema(std::vector<FeatureSpec> features, std::vector<FeatureSpec> targets);

  static const FeatureSchema& standard();

  const std::vector<FeatureSpec>& features() const { return features_; }
  const std::vector<FeatureSpec>& targets() const { return targets_; }
  std::size_t size() const { return features_.size(); }

  std::optional<std::size_t> find(std::string_view name) const;
  /// Throws std::out_of_range for unknown names.
  std::size_t index_of(std::string_view name) const;
  const FeatureSpec& target(std::string_view name) const;
  bool contains(std::string_view name) const { return find(name).has_value(); }

  std::vector<std::string> names(bool include_policy = true) const;

 private:
  std::vector<FeatureSpec> features_;
  std::vector<FeatureSpec> targets_;
};

}  // namespace solarmap::ingest
