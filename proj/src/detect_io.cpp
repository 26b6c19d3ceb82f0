#include "solarmap/detect_io.hpp"

#include <fstream>
#include <map>
#include <stdexcept>

#include <fmt/format.h>

namespace solarmap::detect {

namespace {

Rect rect_from_json(const nlohmann::json& bbox) {
  if (!bbox.is_array() || bbox.size() != 4) throw std::invalid_argument("detect: bbox must have 4 numbers");
  Rect r{bbox[0].get<double>(), bbox[1].get<double>(), bbox[2].get<double>(), bbox[3].get<double>()};
  if (!r.valid()) throw std::invalid_argument("detect: bbox with non-positive extent");
  return r;
}

template <typename Set, typename Parse>
std::vector<Set> read_grouped(std::istream& in, Parse&& parse) {
  std::map<std::string, Set> by_image;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw std::invalid_argument(fmt::format("detect: line {}: {}", line_no, e.what()));
    }
    const std::string id = j.at("image_id").get<std::string>();
    if (id.empty()) throw std::invalid_argument(fmt::format("detect: line {}: empty image_id", line_no));
    auto& set = by_image[id];
    set.image_id = id;
    set.boxes.push_back(parse(j));
  }
  std::vector<Set> out;
  for (auto& [_, set] : by_image) out.push_back(std::move(set));
  return out;
}

std::ifstream open(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(fmt::format("detect: cannot open {}", path.string()));
  return in;
}

}  // namespace

nlohmann::json box_to_json(const std::string& image_id, const BBox& box) {
  return {{"image_id", image_id},
          {"class", to_string(box.cls)},
          {"score", box.score},
          {"bbox", {box.rect.xmin, box.rect.ymin, box.rect.xmax, box.rect.ymax}}};
}

nlohmann::json box_to_json(const std::string& image_id, const GroundTruthBox& box) {
  return {{"image_id", image_id},
          {"class", to_string(box.cls)},
          {"bbox", {box.rect.xmin, box.rect.ymin, box.rect.xmax, box.rect.ymax}}};
}

BBox box_from_json(const nlohmann::json& j) {
  BBox box{rect_from_json(j.at("bbox")), parse_class(j.at("class").get<std::string>()),
           j.value("score", 1.0)};
  validate_box(box);
  return box;
}

GroundTruthBox gt_box_from_json(const nlohmann::json& j) {
  return {rect_from_json(j.at("bbox")), parse_class(j.at("class").get<std::string>())};
}

std::vector<DetectionSet> read_detections(std::istream& in) {
  return read_grouped<DetectionSet>(in, box_from_json);
}

std::vector<DetectionSet> read_detections(const std::filesystem::path& path) {
  auto in = open(path);
  return read_detections(in);
}

std::vector<GroundTruthSet> read_ground_truth(std::istream& in) {
  return read_grouped<GroundTruthSet>(in, gt_box_from_json);
}

std::vector<GroundTruthSet> read_ground_truth(const std::filesystem::path& path) {
  auto in = open(path);
  return read_ground_truth(in);
}

void write_detections(std::ostream& out, const std::vector<DetectionSet>& sets) {
  for (const auto& s : sets) {
    for (const auto& b : s.boxes) out << box_to_json(s.image_id, b).dump() << '\n';
  }
}

void write_ground_truth(std::ostream& out, const std::vector<GroundTruthSet>& sets) {
  for (const auto& s : sets) {
    for (const auto& b : s.boxes) out << box_to_json(s.image_id, b).dump() << '\n';
  }
}

}  // namespace solarmap::detect
