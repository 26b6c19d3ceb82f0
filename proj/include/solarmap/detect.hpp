#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace solarmap::detect {

enum class BoxClass { Roof, PV };

std::string_view to_string(BoxClass cls);
/// Accepts "roof" and "pv" (case-insensitive).
BoxClass parse_class(std::string_view text);

/// Axis-aligned pixel rectangle in continuous coordinates.
struct Rect {
  double xmin = 0.0;
  double ymin = 0.0;
  double xmax = 0.0;
  double ymax = 0.0;

  double width() const { return xmax - xmin; }
  double height() const { return ymax - ymin; }
  double area() const { return width() * height(); }
  bool valid() const { return xmax > xmin && ymax > ymin; }

  friend bool operator==(const Rect&, const Rect&) = default;
};

struct BBox {
  Rect rect;
  BoxClass cls = BoxClass::Roof;
  double score = 1.0;
};

struct GroundTruthBox {
  Rect rect;
  BoxClass cls = BoxClass::Roof;
};

struct DetectionSet {
  std::string image_id;
  std::vector<BBox> boxes;
};

struct GroundTruthSet {
  std::string image_id;
  std::vector<GroundTruthBox> boxes;
};

/// Throws std::invalid_argument when the box is degenerate or the score is
/// outside [0, 1].
void validate_box(const BBox& box);

double iou(const Rect& a, const Rect& b);

struct NmsThresholds {
  double roof = 0.2;
  double pv = 0.1;

  double for_class(BoxClass cls) const { return cls == BoxClass::Roof ? roof : pv; }
};

/// Indices sorted by score descending; equal scores keep input order.
std::vector<std::size_t> score_order(std::span<const BBox> boxes);

/// Class-specific greedy suppression. Kept boxes are returned in keep order.
DetectionSet nms(const DetectionSet& dets, const NmsThresholds& thresholds = {});

struct MatchResult {
  /// Matched ground-truth index per detection, in input order.
  std::vector<std::optional<std::size_t>> matched_gt;
  std::size_t true_positives = 0;
  std::size_t false_positives = 0;
  std::size_t missed_gt = 0;
};

/// Greedy one-to-one matching in score order. Each detection takes the
/// unmatched same-class ground truth with highest IoU (lowest index on ties)
/// when that IoU reaches iou_thr.
MatchResult match_detections(const DetectionSet& dets, std::span<const GroundTruthBox> gts,
                             double iou_thr);

struct ScoredOutcome {
  double score = 0.0;
  bool true_positive = false;
  std::string image_id;
  std::size_t index = 0;
};

/// 101-point interpolated AP over a corpus of matched detections of one
/// class. Returns -1 when num_gt is zero.
double average_precision(std::span<const ScoredOutcome> outcomes, std::size_t num_gt);

struct AreaRange {
  std::string name;
  double lo = 0.0;  // inclusive
  double hi = 0.0;  // exclusive
};

struct EvalConfig {
  std::vector<double> iou_thresholds;
  std::vector<AreaRange> area_ranges;
  std::vector<int> max_dets;
  std::vector<BoxClass> classes;

  /// IoU 0.50:0.05:0.95, areas all/small/medium/large, maxDets 1/10/100,
  /// both classes.
  static EvalConfig coco();
  void validate() const;
};

struct Corpus {
  std::vector<DetectionSet> detections;
  std::vector<GroundTruthSet> ground_truth;
};

/// Per-class AP/AR cells over (iou threshold, class, area range, max dets),
/// plus the twelve standard summary statistics.
struct EvalReport {
  EvalConfig config;
  std::vector<double> ap;  // -1 where the class has no ground truth in the bucket
  std::vector<double> ar;
  std::array<double, 12> stats{};

  std::size_t cell(std::size_t t, std::size_t k, std::size_t a, std::size_t m) const;

  /// Mean over classes of defined cells. When iou is empty the mean also runs
  /// over all thresholds. `cls` restricts to a single class.
  double summarize(bool average_precision, std::optional<double> iou, std::string_view area,
                   int max_dets, std::optional<BoxClass> cls = std::nullopt) const;

  /// AP at IoU 0.5, area all, largest max_dets, per configured class.
  std::vector<double> per_class_ap50() const;
  /// Mean of the defined per-class AP@0.5 values.
  double map50() const;
};

EvalReport eval_report(const Corpus& corpus, const EvalConfig& config = EvalConfig::coco());

/// The twelve-line fixed-width COCO summary block.
std::string format_coco_summary(const EvalReport& report);

/// Long-format CSV of every grid cell (class "all" plus each class).
std::string eval_report_csv(const EvalReport& report);

}  // namespace solarmap::detect
