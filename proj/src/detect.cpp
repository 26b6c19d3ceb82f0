#include "solarmap/detect.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

#include <fmt/format.h>

namespace solarmap::detect {

namespace {

constexpr int kRecallPoints = 101;

bool same_threshold(double a, double b) { return std::abs(a - b) < 1e-12; }

/// Precision envelope sampled at recall 0.00:0.01:1.00.
double interpolated_ap(const std::vector<char>& tp_flags, std::size_t num_gt) {
  const std::size_t n = tp_flags.size();
  std::vector<double> recall(n);
  std::vector<double> precision(n);
  std::size_t tp = 0;
  for (std::size_t i = 0; i < n; ++i) {
    tp += tp_flags[i] ? 1 : 0;
    recall[i] = static_cast<double>(tp) / static_cast<double>(num_gt);
    precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
  }
  for (std::size_t i = n; i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);
  double sum = 0.0;
  for (int r = 0; r < kRecallPoints; ++r) {
    const double thr = r / 100.0;
    const auto it = std::lower_bound(recall.begin(), recall.end(), thr);
    if (it != recall.end()) sum += precision[static_cast<std::size_t>(it - recall.begin())];
  }
  return sum / kRecallPoints;
}

struct ImageClassEval {
  std::string image_id;
  std::vector<double> scores;                  // score-ordered, truncated
  std::vector<std::vector<char>> matched;      // [t][d]
  std::vector<std::vector<char>> ignored;      // [t][d]
  std::size_t num_gt = 0;                      // non-ignored ground truth
};

bool in_range(double area, const AreaRange& r) { return area >= r.lo && area < r.hi; }

ImageClassEval evaluate_image(const std::string& image_id, const DetectionSet* dets,
                              const GroundTruthSet* gts, BoxClass cls, const AreaRange& range,
                              int max_det, std::span<const double> thresholds) {
  ImageClassEval out;
  out.image_id = image_id;

  std::vector<Rect> gt_rects;
  std::vector<char> gt_ignore;
  if (gts != nullptr) {
    // Non-ignored ground truth first, stable within each group.
    for (int pass = 0; pass < 2; ++pass) {
      for (const auto& g : gts->boxes) {
        if (g.cls != cls) continue;
        const bool ignore = !in_range(g.rect.area(), range);
        if (ignore != (pass == 1)) continue;
        gt_rects.push_back(g.rect);
        gt_ignore.push_back(ignore ? 1 : 0);
      }
    }
  }
  out.num_gt = static_cast<std::size_t>(std::count(gt_ignore.begin(), gt_ignore.end(), 0));

  std::vector<BBox> det_boxes;
  if (dets != nullptr) {
    for (const auto& d : dets->boxes) {
      if (d.cls == cls) det_boxes.push_back(d);
    }
  }
  std::vector<BBox> ordered;
  for (std::size_t i : score_order(det_boxes)) {
    if (static_cast<int>(ordered.size()) >= max_det) break;
    ordered.push_back(det_boxes[i]);
  }
  for (const auto& d : ordered) out.scores.push_back(d.score);

  const std::size_t nd = ordered.size();
  const std::size_t ng = gt_rects.size();
  for (double thr : thresholds) {
    std::vector<char> matched(nd, 0);
    std::vector<char> ignored(nd, 0);
    std::vector<char> gt_taken(ng, 0);
    for (std::size_t d = 0; d < nd; ++d) {
      double best = std::min(thr, 1.0 - 1e-10);
      std::optional<std::size_t> m;
      for (std::size_t g = 0; g < ng; ++g) {
        if (gt_taken[g]) continue;
        // Once matched to a regular ground truth, never move to an ignored one.
        if (m && !gt_ignore[*m] && gt_ignore[g]) break;
        const double v = iou(ordered[d].rect, gt_rects[g]);
        if (v < best) continue;
        best = v;
        m = g;
      }
      if (m) {
        matched[d] = 1;
        ignored[d] = gt_ignore[*m];
        gt_taken[*m] = 1;
      } else if (!in_range(ordered[d].rect.area(), range)) {
        ignored[d] = 1;
      }
    }
    out.matched.push_back(std::move(matched));
    out.ignored.push_back(std::move(ignored));
  }
  return out;
}

}  // namespace

std::string_view to_string(BoxClass cls) { return cls == BoxClass::Roof ? "roof" : "pv"; }

BoxClass parse_class(std::string_view text) {
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "roof") return BoxClass::Roof;
  if (lower == "pv") return BoxClass::PV;
  throw std::invalid_argument(fmt::format("detect: unknown class '{}'", text));
}

void validate_box(const BBox& box) {
  if (!box.rect.valid()) throw std::invalid_argument("detect: box with non-positive extent");
  if (!(box.score >= 0.0 && box.score <= 1.0)) {
    throw std::invalid_argument(fmt::format("detect: score {} outside [0, 1]", box.score));
  }
}

double iou(const Rect& a, const Rect& b) {
  const double iw = std::min(a.xmax, b.xmax) - std::max(a.xmin, b.xmin);
  const double ih = std::min(a.ymax, b.ymax) - std::max(a.ymin, b.ymin);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

std::vector<std::size_t> score_order(std::span<const BBox> boxes) {
  std::vector<std::size_t> order(boxes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return boxes[a].score > boxes[b].score; });
  return order;
}

DetectionSet nms(const DetectionSet& dets, const NmsThresholds& thresholds) {
  DetectionSet out{dets.image_id, {}};
  for (std::size_t i : score_order(dets.boxes)) {
    const BBox& candidate = dets.boxes[i];
    const double thr = thresholds.for_class(candidate.cls);
    const bool suppressed = std::any_of(out.boxes.begin(), out.boxes.end(), [&](const BBox& kept) {
      return kept.cls == candidate.cls && iou(kept.rect, candidate.rect) > thr;
    });
    if (!suppressed) out.boxes.push_back(candidate);
  }
  return out;
}

MatchResult match_detections(const DetectionSet& dets, std::span<const GroundTruthBox> gts,
                             double iou_thr) {
  MatchResult result;
  result.matched_gt.assign(dets.boxes.size(), std::nullopt);
  std::vector<char> taken(gts.size(), 0);
  for (std::size_t d : score_order(dets.boxes)) {
    const BBox& det = dets.boxes[d];
    std::optional<std::size_t> best;
    double best_iou = -1.0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (taken[g] || gts[g].cls != det.cls) continue;
      const double v = iou(det.rect, gts[g].rect);
      if (v > best_iou) {
        best_iou = v;
        best = g;
      }
    }
    if (best && best_iou >= iou_thr) {
      taken[*best] = 1;
      result.matched_gt[d] = best;
      ++result.true_positives;
    } else {
      ++result.false_positives;
    }
  }
  result.missed_gt = static_cast<std::size_t>(std::count(taken.begin(), taken.end(), 0));
  return result;
}

double average_precision(std::span<const ScoredOutcome> outcomes, std::size_t num_gt) {
  if (num_gt == 0) return -1.0;
  std::vector<const ScoredOutcome*> sorted;
  sorted.reserve(outcomes.size());
  for (const auto& o : outcomes) sorted.push_back(&o);
  std::stable_sort(sorted.begin(), sorted.end(), [](const ScoredOutcome* a, const ScoredOutcome* b) {
    if (a->score != b->score) return a->score > b->score;
    if (a->image_id != b->image_id) return a->image_id < b->image_id;
    return a->index < b->index;
  });
  std::vector<char> flags;
  flags.reserve(sorted.size());
  for (const auto* o : sorted) flags.push_back(o->true_positive ? 1 : 0);
  return interpolated_ap(flags, num_gt);
}

EvalConfig EvalConfig::coco() {
  EvalConfig config;
  for (int i = 0; i < 10; ++i) config.iou_thresholds.push_back((50 + 5 * i) / 100.0);
  config.area_ranges = {{"all", 0.0, 1e10},
                        {"small", 0.0, 32.0 * 32.0},
                        {"medium", 32.0 * 32.0, 96.0 * 96.0},
                        {"large", 96.0 * 96.0, 1e10}};
  config.max_dets = {1, 10, 100};
  config.classes = {BoxClass::Roof, BoxClass::PV};
  return config;
}

void EvalConfig::validate() const {
  if (iou_thresholds.empty()) throw std::invalid_argument("detect: no IoU thresholds");
  for (std::size_t i = 0; i < iou_thresholds.size(); ++i) {
    const double t = iou_thresholds[i];
    if (!(t > 0.0 && t <= 1.0)) throw std::invalid_argument("detect: IoU threshold outside (0, 1]");
    if (i > 0 && !(t > iou_thresholds[i - 1])) {
      throw std::invalid_argument("detect: IoU thresholds must be strictly increasing");
    }
  }
  if (area_ranges.empty() || max_dets.empty() || classes.empty()) {
    throw std::invalid_argument("detect: empty evaluation grid");
  }
  for (int m : max_dets) {
    if (m <= 0) throw std::invalid_argument("detect: max_dets must be positive");
  }
}

std::size_t EvalReport::cell(std::size_t t, std::size_t k, std::size_t a, std::size_t m) const {
  const std::size_t K = config.classes.size();
  const std::size_t A = config.area_ranges.size();
  const std::size_t M = config.max_dets.size();
  return ((t * K + k) * A + a) * M + m;
}

double EvalReport::summarize(bool average_precision, std::optional<double> iou_thr,
                             std::string_view area, int max_dets, std::optional<BoxClass> cls) const {
  const auto a_it = std::find_if(config.area_ranges.begin(), config.area_ranges.end(),
                                 [&](const AreaRange& r) { return r.name == area; });
  const auto m_it = std::find(config.max_dets.begin(), config.max_dets.end(), max_dets);
  if (a_it == config.area_ranges.end() || m_it == config.max_dets.end()) return -1.0;
  const auto a = static_cast<std::size_t>(a_it - config.area_ranges.begin());
  const auto m = static_cast<std::size_t>(m_it - config.max_dets.begin());
  const auto& values = average_precision ? ap : ar;
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t t = 0; t < config.iou_thresholds.size(); ++t) {
    if (iou_thr && !same_threshold(*iou_thr, config.iou_thresholds[t])) continue;
    for (std::size_t k = 0; k < config.classes.size(); ++k) {
      if (cls && config.classes[k] != *cls) continue;
      const double v = values[cell(t, k, a, m)];
      if (v > -1.0) {
        sum += v;
        ++count;
      }
    }
  }
  return count == 0 ? -1.0 : sum / static_cast<double>(count);
}

std::vector<double> EvalReport::per_class_ap50() const {
  std::vector<double> out;
  for (BoxClass cls : config.classes) {
    out.push_back(summarize(true, 0.5, "all", config.max_dets.back(), cls));
  }
  return out;
}

double EvalReport::map50() const {
  double sum = 0.0;
  std::size_t count = 0;
  for (double v : per_class_ap50()) {
    if (v > -1.0) {
      sum += v;
      ++count;
    }
  }
  return count == 0 ? -1.0 : sum / static_cast<double>(count);
}

EvalReport eval_report(const Corpus& corpus, const EvalConfig& config) {
  config.validate();
  std::map<std::string, const DetectionSet*> det_by_image;
  std::map<std::string, const GroundTruthSet*> gt_by_image;
  for (const auto& d : corpus.detections) {
    if (d.image_id.empty()) throw std::invalid_argument("detect: empty image id");
    if (!det_by_image.emplace(d.image_id, &d).second) {
      throw std::invalid_argument(fmt::format("detect: duplicate detection set for {}", d.image_id));
    }
    for (const auto& b : d.boxes) validate_box(b);
  }
  for (const auto& g : corpus.ground_truth) {
    if (g.image_id.empty()) throw std::invalid_argument("detect: empty image id");
    if (!gt_by_image.emplace(g.image_id, &g).second) {
      throw std::invalid_argument(fmt::format("detect: duplicate ground truth set for {}", g.image_id));
    }
  }
  std::vector<std::string> images;
  for (const auto& [id, _] : det_by_image) images.push_back(id);
  for (const auto& [id, _] : gt_by_image) {
    if (!det_by_image.contains(id)) images.push_back(id);
  }
  std::sort(images.begin(), images.end());
  if (images.empty()) throw std::invalid_argument("detect: empty corpus");

  EvalReport report;
  report.config = config;
  const std::size_t T = config.iou_thresholds.size();
  const std::size_t K = config.classes.size();
  const std::size_t A = config.area_ranges.size();
  const std::size_t M = config.max_dets.size();
  report.ap.assign(T * K * A * M, -1.0);
  report.ar.assign(T * K * A * M, -1.0);
  const int max_det = *std::max_element(config.max_dets.begin(), config.max_dets.end());

  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t a = 0; a < A; ++a) {
      std::vector<ImageClassEval> per_image;
      std::size_t num_gt = 0;
      for (const auto& id : images) {
        const auto d = det_by_image.find(id);
        const auto g = gt_by_image.find(id);
        per_image.push_back(evaluate_image(id, d == det_by_image.end() ? nullptr : d->second,
                                           g == gt_by_image.end() ? nullptr : g->second,
                                           config.classes[k], config.area_ranges[a], max_det,
                                           config.iou_thresholds));
        num_gt += per_image.back().num_gt;
      }
      if (num_gt == 0) continue;
      for (std::size_t m = 0; m < M; ++m) {
        struct Entry {
          double score;
          std::size_t image;
          std::size_t index;
        };
        std::vector<Entry> entries;
        for (std::size_t i = 0; i < per_image.size(); ++i) {
          const std::size_t take = std::min<std::size_t>(per_image[i].scores.size(),
                                                         static_cast<std::size_t>(config.max_dets[m]));
          for (std::size_t j = 0; j < take; ++j) entries.push_back({per_image[i].scores[j], i, j});
        }
        // Images are already in id order, so image position breaks score ties.
        std::stable_sort(entries.begin(), entries.end(), [](const Entry& x, const Entry& y) {
          if (x.score != y.score) return x.score > y.score;
          if (x.image != y.image) return x.image < y.image;
          return x.index < y.index;
        });
        for (std::size_t t = 0; t < T; ++t) {
          std::vector<char> flags;
          std::size_t tp = 0;
          for (const auto& e : entries) {
            if (per_image[e.image].ignored[t][e.index]) continue;
            const bool hit = per_image[e.image].matched[t][e.index] != 0;
            flags.push_back(hit ? 1 : 0);
            tp += hit ? 1 : 0;
          }
          report.ap[report.cell(t, k, a, m)] = interpolated_ap(flags, num_gt);
          report.ar[report.cell(t, k, a, m)] = static_cast<double>(tp) / static_cast<double>(num_gt);
        }
      }
    }
  }

  const int last = config.max_dets.back();
  const int first = config.max_dets.front();
  const int middle = config.max_dets[config.max_dets.size() / 2];
  report.stats = {
      report.summarize(true, std::nullopt, "all", last),
      report.summarize(true, 0.5, "all", last),
      report.summarize(true, 0.75, "all", last),
      report.summarize(true, std::nullopt, "small", last),
      report.summarize(true, std::nullopt, "medium", last),
      report.summarize(true, std::nullopt, "large", last),
      report.summarize(false, std::nullopt, "all", first),
      report.summarize(false, std::nullopt, "all", middle),
      report.summarize(false, std::nullopt, "all", last),
      report.summarize(false, std::nullopt, "small", last),
      report.summarize(false, std::nullopt, "medium", last),
      report.summarize(false, std::nullopt, "large", last),
  };
  return report;
}

std::string format_coco_summary(const EvalReport& report) {
  const auto& cfg = report.config;
  const std::string iou_range =
      fmt::format("{:0.2f}:{:0.2f}", cfg.iou_thresholds.front(), cfg.iou_thresholds.back());
  const int first = cfg.max_dets.front();
  const int middle = cfg.max_dets[cfg.max_dets.size() / 2];
  const int last = cfg.max_dets.back();
  struct Row {
    bool ap;
    std::string iou;
    const char* area;
    int max_dets;
  };
  const std::array<Row, 12> rows{{
      {true, iou_range, "all", last},
      {true, "0.50", "all", last},
      {true, "0.75", "all", last},
      {true, iou_range, "small", last},
      {true, iou_range, "medium", last},
      {true, iou_range, "large", last},
      {false, iou_range, "all", first},
      {false, iou_range, "all", middle},
      {false, iou_range, "all", last},
      {false, iou_range, "small", last},
      {false, iou_range, "medium", last},
      {false, iou_range, "large", last},
  }};
  std::string out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Row& r = rows[i];
    out += fmt::format(" {:<18} {} @[ IoU={:<9} | area={:>6} | maxDets={:>3} ] = {:0.3f}\n",
                       r.ap ? "Average Precision" : "Average Recall", r.ap ? "(AP)" : "(AR)", r.iou,
                       r.area, r.max_dets, report.stats[i]);
  }
  return out;
}

std::string eval_report_csv(const EvalReport& report) {
  const auto& cfg = report.config;
  std::string out = "metric,iou,area,max_dets,class,value\n";
  std::vector<std::optional<double>> ious{std::nullopt};
  for (double t : cfg.iou_thresholds) ious.push_back(t);
  std::vector<std::optional<BoxClass>> classes{std::nullopt};
  for (BoxClass c : cfg.classes) classes.push_back(c);
  const std::string iou_range =
      fmt::format("{:0.2f}:{:0.2f}", cfg.iou_thresholds.front(), cfg.iou_thresholds.back());
  for (bool ap : {true, false}) {
    for (const auto& t : ious) {
      for (const auto& area : cfg.area_ranges) {
        for (int m : cfg.max_dets) {
          for (const auto& c : classes) {
            out += fmt::format("{},{},{},{},{},{:.6f}\n", ap ? "AP" : "AR",
                               t ? fmt::format("{:0.2f}", *t) : iou_range, area.name, m,
                               c ? to_string(*c) : "all", report.summarize(ap, t, area.name, m, c));
          }
        }
      }
    }
  }
  return out;
}

}  // namespace solarmap::detect
