#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "solarmap/deploy.hpp"
#include "solarmap/detect.hpp"
#include "solarmap/ingest.hpp"
#include "solarmap/learn.hpp"

namespace solarmap::synth {

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

/// Rooftop scene parameters. Roofs sit in disjoint grid cells so no two roofs
/// overlap and none crosses the image edge.
struct SceneSpec {
  int block_groups = 4;
  Range households{400, 1500};
  double images_per_block_group = 189.0;  // Poisson mean, at least one image
  int image_px = 640;
  double gsd_m_per_px = 0.1149;
  int max_roofs_per_image = 6;
  Range roof_px{24, 80};
  double adoption_probability = 0.1;
  Range coverage{0.05, 0.4};  // PV area / roof area
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument for bad probabilities or ranges, or when
  /// the roof grid cannot hold max_roofs_per_image.
  void validate() const;
};

struct SceneImage {
  std::string image_id;
  std::string block_group_id;
  double gsd_m_per_px = 0.0;
  std::vector<detect::GroundTruthBox> boxes;
};

struct BlockGroupTruth {
  std::string geoid;
  std::int64_t households = 0;
  std::int64_t pv_system_count = 0;
  double pv_area_m2 = 0.0;
  double roof_area_m2 = 0.0;
  double pv_count_per_hh = 0.0;
  std::optional<double> pv_to_roof_ratio;
};

struct Scene {
  int image_px = 640;
  std::vector<SceneImage> images;  // ordered by image id
  std::vector<BlockGroupTruth> truth;  // ordered by geoid

  std::map<std::string, std::int64_t> households() const;
  std::vector<detect::GroundTruthSet> ground_truth() const;
};

Scene generate_scene(const SceneSpec& spec);

struct DetectorModel {
  enum class Mode { Perfect, Noisy };
  Mode mode = Mode::Perfect;
  double jitter_px = 0.0;
  double drop_probability = 0.0;
  double spurious_per_image = 0.0;  // Poisson mean
  // Beta score parameters; true positives dominate false positives.
  double tp_alpha = 6.0;
  double tp_beta = 1.5;
  double fp_alpha = 1.5;
  double fp_beta = 4.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// One detection set per scene image, same order.
std::vector<detect::DetectionSet> render_detections(const Scene& scene, const DetectorModel& detector);

/// Pairs detections with their scene image metadata for rollup.
std::vector<deploy::ImageObservation> observations(const Scene& scene,
                                                   const std::vector<detect::DetectionSet>& detections);

std::string truth_csv(const std::vector<BlockGroupTruth>& truth);

/// Draw from Beta(a, b) through two gamma variates.
template <class Rng>
double beta_variate(Rng& rng, double a, double b) {
  std::gamma_distribution<double> ga(a, 1.0);
  std::gamma_distribution<double> gb(b, 1.0);
  const double x = ga(rng);
  const double y = gb(rng);
  return x + y > 0.0 ? x / (x + y) : 0.5;
}

struct Coefficient {
  std::string term;  // label as printed by explain::Term::label
  double value = 0.0;
};

struct SynthRegression {
  learn::Dataset data;
  std::vector<Coefficient> coefficients;  // empty for nonlinear truths
  double noise_sd = 0.0;
};

/// y = intercept + sum_j beta_j x_j + noise, features x1..xp ~ U(0, 1).
SynthRegression generate_linear(std::size_t n, std::vector<double> beta, double intercept, double noise_sd,
                                 std::uint64_t seed);

/// Friedman #1 surface on x1..x5 plus an x6*x7 interaction, with x8
/// correlated to x4 and x9..xp pure noise (p >= 10).
SynthRegression generate_friedman(std::size_t n, std::size_t p, double noise_sd, std::uint64_t seed);

struct IncomeRaceSpec {
  std::size_t n = 2000;
  double intercept = 0.02;
  double income = 0.004;  // per $10k
  double asian = 0.01;
  double hispanic = -0.01;
  double income_x_asian = 0.01;
  double income_x_hispanic = -0.006;
  double home_value = 0.001;  // collinear with income
  double noise_sd = 0.01;
  std::uint64_t seed = 0;
};

/// Columns income ($10k), asian, hispanic, home_value ($100k). The truth is
/// linear plus the two income interactions.
SynthRegression generate_income_race(const IncomeRaceSpec& spec);

/// Block-group rows named after the standard schema with values inside the
/// published ranges and targets driven by a handful of features. Policy
/// features are missing for roughly `unincorporated_share` of rows.
std::vector<ingest::BlockGroupRecord> generate_feature_table(std::size_t n, double unincorporated_share,
                                                             std::uint64_t seed);

}  // namespace solarmap::synth

