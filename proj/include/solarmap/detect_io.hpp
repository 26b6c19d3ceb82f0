#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"
#include "solarmap/detect.hpp"

namespace solarmap::detect {

// JSON-lines box records: {"image_id", "class", "score"?, "bbox": [xmin, ymin, xmax, ymax]}.

nlohmann::json box_to_json(const std::string& image_id, const BBox& box);
nlohmann::json box_to_json(const std::string& image_id, const GroundTruthBox& box);
BBox box_from_json(const nlohmann::json& j);
GroundTruthBox gt_box_from_json(const nlohmann::json& j);

/// Groups records by image id; sets come back sorted by id, boxes in file order.
std::vector<DetectionSet> read_detections(std::istream& in);
std::vector<DetectionSet> read_detections(const std::filesystem::path& path);
std::vector<GroundTruthSet> read_ground_truth(std::istream& in);
std::vector<GroundTruthSet> read_ground_truth(const std::filesystem::path& path);

void write_detections(std::ostream& out, const std::vector<DetectionSet>& sets);
void write_ground_truth(std::ostream& out, const std::vector<GroundTruthSet>& sets);

}  // namespace solarmap::detect
