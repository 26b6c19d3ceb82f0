#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "solarmap/detect.hpp"

namespace solarmap::deploy {

/// Post-NMS boxes of one image tile together with its block group and ground
/// sample distance.
struct ImageObservation {
  std::string image_id;
  std::string block_group_id;
  std::vector<detect::BBox> roof_boxes;
  std::vector<detect::BBox> pv_boxes;
  double gsd_m_per_px = 0.0;
};

struct ImageContribution {
  std::int64_t pv_count = 0;
  double pv_area_m2 = 0.0;
  double roof_area_m2 = 0.0;
};

struct CountingOptions {
  /// Merge PV boxes whose boundaries, grown by merge_epsilon_px, touch or
  /// overlap into a single system.
  bool merge_adjacent = false;
  double merge_epsilon_px = 0.0;
};

/// Number of PV systems among the boxes: one per box, or one per connected
/// component of the expanded-box contact graph when merging.
std::int64_t count_pv_systems(std::span<const detect::BBox> pv_boxes, const CountingOptions& options);

/// PV on an image without any detected roof is discarded.
ImageContribution image_contribution(const ImageObservation& obs, const CountingOptions& options = {});

double pv_count_per_hh(std::span<const ImageContribution> contributions, std::int64_t households);

/// Ratio of summed PV area to summed roof area; empty when roof area is zero.
std::optional<double> pv_to_roof_ratio(std::span<const ImageContribution> contributions);

struct BlockGroupDeployment {
  std::string block_group_id;
  std::int64_t pv_system_count = 0;
  std::int64_t households = 0;
  double pv_area_m2 = 0.0;
  double roof_area_m2 = 0.0;
  double pv_count_per_hh = 0.0;
  std::optional<double> pv_to_roof_ratio;
};

struct RollupError {
  std::string block_group_id;
  std::string message;
};

struct RollupResult {
  std::vector<BlockGroupDeployment> records;
  std::vector<RollupError> errors;
};

/// One record per block group ordered by id. Within a block group images are
/// reduced in image-id order, so input permutation never changes the output.
RollupResult rollup(std::span<const ImageObservation> observations,
                    const std::map<std::string, std::int64_t>& households,
                    const CountingOptions& options = {});

/// Splits a detection set into roof and PV boxes.
ImageObservation make_observation(const detect::DetectionSet& dets, std::string block_group_id,
                                  double gsd_m_per_px);

// Observation JSON-lines: {"image_id", "block_group_id", "gsd", "boxes": [{"class", "score", "bbox"}]}.
std::vector<ImageObservation> read_observations(std::istream& in);
std::vector<ImageObservation> read_observations(const std::filesystem::path& path);
void write_observations(std::ostream& out, std::span<const ImageObservation> observations);

/// CSV "geoid,households".
std::map<std::string, std::int64_t> read_households(const std::filesystem::path& path);

std::string deployment_csv(std::span<const BlockGroupDeployment> records);

}  // namespace solarmap::deploy
