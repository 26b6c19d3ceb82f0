#include "solarmap/deploy.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <fmt/format.h>

#include "json.hpp"
#include "solarmap/detect_io.hpp"
#include "solarmap/table_io.hpp"

namespace solarmap::deploy {

namespace {

double summed_area_px(std::span<const detect::BBox> boxes) {
  double total = 0.0;
  for (const auto& b : boxes) total += b.rect.area();
  return total;
}

bool expanded_contact(const detect::Rect& a, const detect::Rect& b, double eps) {
  return a.xmin - eps <= b.xmax + eps && b.xmin - eps <= a.xmax + eps && a.ymin - eps <= b.ymax + eps &&
         b.ymin - eps <= a.ymax + eps;
}

std::size_t find_root(std::vector<std::size_t>& parent, std::size_t i) {
  while (parent[i] != i) {
    parent[i] = parent[parent[i]];
    i = parent[i];
  }
  return i;
}

}  // namespace

std::int64_t count_pv_systems(std::span<const detect::BBox> pv_boxes, const CountingOptions& options) {
  if (!options.merge_adjacent) return static_cast<std::int64_t>(pv_boxes.size());
  std::vector<std::size_t> parent(pv_boxes.size());
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  for (std::size_t i = 0; i < pv_boxes.size(); ++i) {
    for (std::size_t j = i + 1; j < pv_boxes.size(); ++j) {
      if (expanded_contact(pv_boxes[i].rect, pv_boxes[j].rect, options.merge_epsilon_px)) {
        parent[find_root(parent, i)] = find_root(parent, j);
      }
    }
  }
  std::int64_t components = 0;
  for (std::size_t i = 0; i < parent.size(); ++i) components += find_root(parent, i) == i ? 1 : 0;
  return components;
}

ImageContribution image_contribution(const ImageObservation& obs, const CountingOptions& options) {
  if (!(obs.gsd_m_per_px > 0.0)) {
    throw std::invalid_argument(fmt::format("deploy: image {} has non-positive gsd", obs.image_id));
  }
  const double px_to_m2 = obs.gsd_m_per_px * obs.gsd_m_per_px;
  ImageContribution c;
  c.roof_area_m2 = summed_area_px(obs.roof_boxes) * px_to_m2;
  if (obs.roof_boxes.empty()) return c;
  c.pv_count = count_pv_systems(obs.pv_boxes, options);
  c.pv_area_m2 = summed_area_px(obs.pv_boxes) * px_to_m2;
  return c;
}

double pv_count_per_hh(std::span<const ImageContribution> contributions, std::int64_t households) {
  if (households <= 0) throw std::invalid_argument("deploy: household count must be positive");
  std::int64_t systems = 0;
  for (const auto& c : contributions) systems += c.pv_count;
  return static_cast<double>(systems) / static_cast<double>(households);
}

std::optional<double> pv_to_roof_ratio(std::span<const ImageContribution> contributions) {
  double pv = 0.0;
  double roof = 0.0;
  for (const auto& c : contributions) {
    pv += c.pv_area_m2;
    roof += c.roof_area_m2;
  }
  if (!(roof > 0.0)) return std::nullopt;
  return pv / roof;
}

RollupResult rollup(std::span<const ImageObservation> observations,
                    const std::map<std::string, std::int64_t>& households, const CountingOptions& options) {
  std::map<std::string, std::vector<const ImageObservation*>> groups;
  for (const auto& obs : observations) groups[obs.block_group_id].push_back(&obs);

  RollupResult result;
  for (auto& [bg, images] : groups) {
    std::stable_sort(images.begin(), images.end(), [](const ImageObservation* a, const ImageObservation* b) {
      return a->image_id < b->image_id;
    });
    const auto hh = households.find(bg);
    if (hh == households.end() || hh->second <= 0) {
      result.errors.push_back({bg, hh == households.end() ? "missing household count" : "non-positive household count"});
      continue;
    }
    std::vector<ImageContribution> contributions;
    contributions.reserve(images.size());
    for (const auto* obs : images) contributions.push_back(image_contribution(*obs, options));

    BlockGroupDeployment rec;
    rec.block_group_id = bg;
    rec.households = hh->second;
    for (const auto& c : contributions) {
      rec.pv_system_count += c.pv_count;
      rec.pv_area_m2 += c.pv_area_m2;
      rec.roof_area_m2 += c.roof_area_m2;
    }
    rec.pv_count_per_hh = pv_count_per_hh(contributions, rec.households);
    rec.pv_to_roof_ratio = pv_to_roof_ratio(contributions);
    result.records.push_back(std::move(rec));
  }
  return result;
}

ImageObservation make_observation(const detect::DetectionSet& dets, std::string block_group_id,
                                  double gsd_m_per_px) {
  ImageObservation obs;
  obs.image_id = dets.image_id;
  obs.block_group_id = std::move(block_group_id);
  obs.gsd_m_per_px = gsd_m_per_px;
  for (const auto& b : dets.boxes) {
    (b.cls == detect::BoxClass::Roof ? obs.roof_boxes : obs.pv_boxes).push_back(b);
  }
  return obs;
}

std::vector<ImageObservation> read_observations(std::istream& in) {
  std::vector<ImageObservation> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      detect::DetectionSet dets{j.at("image_id").get<std::string>(), {}};
      for (const auto& b : j.at("boxes")) dets.boxes.push_back(detect::box_from_json(b));
      out.push_back(make_observation(dets, j.at("block_group_id").get<std::string>(), j.at("gsd").get<double>()));
    } catch (const nlohmann::json::exception& e) {
      throw std::invalid_argument(fmt::format("deploy: observation line {}: {}", line_no, e.what()));
    }
  }
  return out;
}

std::vector<ImageObservation> read_observations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(fmt::format("deploy: cannot open {}", path.string()));
  return read_observations(in);
}

void write_observations(std::ostream& out, std::span<const ImageObservation> observations) {
  for (const auto& obs : observations) {
    auto boxes = nlohmann::json::array();
    for (const auto* list : {&obs.roof_boxes, &obs.pv_boxes}) {
      for (const auto& b : *list) {
        boxes.push_back({{"class", detect::to_string(b.cls)},
                         {"score", b.score},
                         {"bbox", {b.rect.xmin, b.rect.ymin, b.rect.xmax, b.rect.ymax}}});
      }
    }
    const nlohmann::json j{{"image_id", obs.image_id},
                           {"block_group_id", obs.block_group_id},
                           {"gsd", obs.gsd_m_per_px},
                           {"boxes", boxes}};
    out << j.dump() << '\n';
  }
}

std::map<std::string, std::int64_t> read_households(const std::filesystem::path& path) {
  const auto table = io::read_csv(path);
  const std::size_t geoid = table.column("geoid");
  const std::size_t hh = table.column("households");
  std::map<std::string, std::int64_t> out;
  for (const auto& row : table.rows) out[row[geoid]] = std::stoll(row[hh]);
  return out;
}

std::string deployment_csv(std::span<const BlockGroupDeployment> records) {
  std::string out = "geoid,pv_system_count,households,pv_area_m2,roof_area_m2,pv_count_per_hh,pv_to_roof_ratio\n";
  for (const auto& r : records) {
    out += io::csv_line({r.block_group_id, std::to_string(r.pv_system_count), std::to_string(r.households),
                         io::format_number(r.pv_area_m2), io::format_number(r.roof_area_m2),
                         io::format_number(r.pv_count_per_hh), io::format_optional(r.pv_to_roof_ratio)});
  }
  return out;
}

}  // namespace solarmap::deploy
