#include "solarmap/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include <fmt/format.h>

#include "solarmap/table_io.hpp"

namespace solarmap::synth {

using detect::BoxClass;
using detect::Rect;

namespace {

// Coordinates live on a 1/64 px lattice so box sums and differences are exact.
double snap(double v) { return std::round(v * 64.0) / 64.0; }

double uniform(std::mt19937_64& rng, double lo, double hi) {
  if (lo == hi) return lo;
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

bool valid_range(const Range& r) { return std::isfinite(r.lo) && std::isfinite(r.hi) && r.lo <= r.hi; }

int cell_size(const SceneSpec& spec) { return static_cast<int>(std::ceil(spec.roof_px.hi)) + 2; }

std::string geoid_for(int b) { return fmt::format("08001{:06d}{}", 100 + b / 4, b % 4 + 1); }

}  // namespace

void SceneSpec::validate() const {
  auto fail = [](std::string_view what) { throw std::invalid_argument(fmt::format("synth: {}", what)); };
  if (block_groups < 1) fail("need at least one block group");
  if (!valid_range(households) || households.lo < 1) fail("household range must be positive");
  if (!(images_per_block_group > 0.0)) fail("images per block group must be positive");
  if (image_px < 1) fail("image size must be positive");
  if (!(gsd_m_per_px > 0.0)) fail("gsd must be positive");
  if (max_roofs_per_image < 0) fail("roof count must be non-negative");
  if (!valid_range(roof_px) || roof_px.lo < 1.0) fail("roof sizes must be at least one pixel");
  if (!(adoption_probability >= 0.0 && adoption_probability <= 1.0)) fail("adoption probability outside [0, 1]");
  if (!valid_range(coverage) || coverage.lo <= 0.0 || coverage.hi > 1.0) fail("coverage must lie in (0, 1]");
  const int per_side = image_px / cell_size(*this);
  if (per_side * per_side < max_roofs_per_image) {
    fail(fmt::format("{} roofs of up to {} px do not fit a {} px image", max_roofs_per_image, roof_px.hi, image_px));
  }
}

void DetectorModel::validate() const {
  auto fail = [](std::string_view what) { throw std::invalid_argument(fmt::format("synth: {}", what)); };
  if (!(jitter_px >= 0.0)) fail("jitter must be non-negative");
  if (!(drop_probability >= 0.0 && drop_probability <= 1.0)) fail("drop probability outside [0, 1]");
  if (!(spurious_per_image >= 0.0)) fail("spurious rate must be non-negative");
  if (!(tp_alpha > 0 && tp_beta > 0 && fp_alpha > 0 && fp_beta > 0)) fail("beta parameters must be positive");
}

std::map<std::string, std::int64_t> Scene::households() const {
  std::map<std::string, std::int64_t> out;
  for (const auto& t : truth) out[t.geoid] = t.households;
  return out;
}

std::vector<detect::GroundTruthSet> Scene::ground_truth() const {
  std::vector<detect::GroundTruthSet> out;
  for (const auto& img : images) out.push_back({img.image_id, img.boxes});
  return out;
}

Scene generate_scene(const SceneSpec& spec) {
  spec.validate();
  Scene scene;
  scene.image_px = spec.image_px;
  const int cell = cell_size(spec);
  const int per_side = spec.image_px / cell;
  const double px_to_m2 = spec.gsd_m_per_px * spec.gsd_m_per_px;
  std::mt19937_64 top(learn::derive_seed(spec.seed, 0));

  for (int b = 0; b < spec.block_groups; ++b) {
    BlockGroupTruth truth;
    truth.geoid = geoid_for(b);
    truth.households = std::uniform_int_distribution<std::int64_t>(
        static_cast<std::int64_t>(spec.households.lo), static_cast<std::int64_t>(spec.households.hi))(top);
    const int n_images = std::max(1, std::poisson_distribution<int>(spec.images_per_block_group)(top));
    const std::uint64_t bg_seed = learn::derive_seed(spec.seed, static_cast<std::uint64_t>(b) + 1);

    for (int k = 0; k < n_images; ++k) {
      std::mt19937_64 rng(learn::derive_seed(bg_seed, static_cast<std::uint64_t>(k)));
      SceneImage img;
      img.image_id = fmt::format("{}-{:05d}", truth.geoid, k);
      img.block_group_id = truth.geoid;
      img.gsd_m_per_px = spec.gsd_m_per_px;

      const int n_roofs = std::uniform_int_distribution<int>(0, spec.max_roofs_per_image)(rng);
      std::vector<int> cells(static_cast<std::size_t>(per_side * per_side));
      std::iota(cells.begin(), cells.end(), 0);
      for (int i = 0; i < n_roofs; ++i) {
        std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(i), cells.size() - 1);
        std::swap(cells[static_cast<std::size_t>(i)], cells[pick(rng)]);
      }
      std::sort(cells.begin(), cells.begin() + n_roofs);

      double roof_px = 0.0;
      double pv_px = 0.0;
      std::int64_t pv_count = 0;
      for (int i = 0; i < n_roofs; ++i) {
        const int cx = cells[static_cast<std::size_t>(i)] % per_side;
        const int cy = cells[static_cast<std::size_t>(i)] / per_side;
        const double w = std::max(1.0, std::round(uniform(rng, spec.roof_px.lo, spec.roof_px.hi) * 32.0) / 32.0);
        const double h = std::max(1.0, std::round(uniform(rng, spec.roof_px.lo, spec.roof_px.hi) * 32.0) / 32.0);
        const double x0 = cx * cell + 1 + snap(uniform(rng, 0.0, cell - 2 - w));
        const double y0 = cy * cell + 1 + snap(uniform(rng, 0.0, cell - 2 - h));
        const Rect roof{x0, y0, x0 + w, y0 + h};
        img.boxes.push_back({roof, BoxClass::Roof});
        roof_px += roof.area();

        if (!std::bernoulli_distribution(spec.adoption_probability)(rng)) continue;
        const double s = std::sqrt(uniform(rng, spec.coverage.lo, spec.coverage.hi));
        const double pw = std::clamp(snap(w * s), 1.0 / 64.0, w);
        const double ph = std::clamp(snap(h * s), 1.0 / 64.0, h);
        const double px = x0 + snap(uniform(rng, 0.0, w - pw));
        const double py = y0 + snap(uniform(rng, 0.0, h - ph));
        const Rect pv{px, py, std::min(px + pw, roof.xmax), std::min(py + ph, roof.ymax)};
        img.boxes.push_back({pv, BoxClass::PV});
        pv_px += pv.area();
        ++pv_count;
      }
      // An image without roofs contributes nothing, matching the exclusion rule.
      if (n_roofs > 0) {
        truth.pv_system_count += pv_count;
        truth.pv_area_m2 += pv_px * px_to_m2;
        truth.roof_area_m2 += roof_px * px_to_m2;
      }
      scene.images.push_back(std::move(img));
    }
    truth.pv_count_per_hh = static_cast<double>(truth.pv_system_count) / static_cast<double>(truth.households);
    if (truth.roof_area_m2 > 0.0) truth.pv_to_roof_ratio = truth.pv_area_m2 / truth.roof_area_m2;
    scene.truth.push_back(std::move(truth));
  }
  return scene;
}

std::vector<detect::DetectionSet> render_detections(const Scene& scene, const DetectorModel& detector) {
  detector.validate();
  std::vector<detect::DetectionSet> out;
  out.reserve(scene.images.size());
  const double edge = static_cast<double>(scene.image_px);
  for (std::size_t i = 0; i < scene.images.size(); ++i) {
    const auto& img = scene.images[i];
    detect::DetectionSet dets{img.image_id, {}};
    if (detector.mode == DetectorModel::Mode::Perfect) {
      for (const auto& gt : img.boxes) dets.boxes.push_back({gt.rect, gt.cls, 1.0});
      out.push_back(std::move(dets));
      continue;
    }
    std::mt19937_64 rng(learn::derive_seed(detector.seed, i));
    std::normal_distribution<double> jitter(0.0, 1.0);
    for (const auto& gt : img.boxes) {
      if (std::bernoulli_distribution(detector.drop_probability)(rng)) continue;
      Rect r = gt.rect;
      if (detector.jitter_px > 0.0) {
        r.xmin += detector.jitter_px * jitter(rng);
        r.ymin += detector.jitter_px * jitter(rng);
        r.xmax += detector.jitter_px * jitter(rng);
        r.ymax += detector.jitter_px * jitter(rng);
      }
      r.xmin = std::clamp(r.xmin, 0.0, edge - 1.0);
      r.ymin = std::clamp(r.ymin, 0.0, edge - 1.0);
      r.xmax = std::clamp(std::max(r.xmax, r.xmin + 1.0), 1.0, edge);
      r.ymax = std::clamp(std::max(r.ymax, r.ymin + 1.0), 1.0, edge);
      dets.boxes.push_back({r, gt.cls, beta_variate(rng, detector.tp_alpha, detector.tp_beta)});
    }
    const int spurious = detector.spurious_per_image > 0.0
                             ? std::poisson_distribution<int>(detector.spurious_per_image)(rng)
                             : 0;
    for (int s = 0; s < spurious; ++s) {
      const BoxClass cls = std::bernoulli_distribution(0.5)(rng) ? BoxClass::Roof : BoxClass::PV;
      const double w = uniform(rng, 8.0, 60.0);
      const double h = uniform(rng, 8.0, 60.0);
      const double x = uniform(rng, 0.0, edge - w);
      const double y = uniform(rng, 0.0, edge - h);
      dets.boxes.push_back({Rect{x, y, x + w, y + h}, cls, beta_variate(rng, detector.fp_alpha, detector.fp_beta)});
    }
    out.push_back(std::move(dets));
  }
  return out;
}

std::vector<deploy::ImageObservation> observations(const Scene& scene,
                                                   const std::vector<detect::DetectionSet>& detections) {
  std::map<std::string, const SceneImage*> by_id;
  for (const auto& img : scene.images) by_id[img.image_id] = &img;
  std::vector<deploy::ImageObservation> out;
  for (const auto& d : detections) {
    const auto it = by_id.find(d.image_id);
    if (it == by_id.end()) throw std::invalid_argument(fmt::format("synth: unknown image {}", d.image_id));
    out.push_back(deploy::make_observation(d, it->second->block_group_id, it->second->gsd_m_per_px));
  }
  return out;
}

std::string truth_csv(const std::vector<BlockGroupTruth>& truth) {
  std::string out = "geoid,pv_system_count,households,pv_area_m2,roof_area_m2,pv_count_per_hh,pv_to_roof_ratio\n";
  for (const auto& t : truth) {
    out += io::csv_line({t.geoid, std::to_string(t.pv_system_count), std::to_string(t.households),
                         io::format_number(t.pv_area_m2), io::format_number(t.roof_area_m2),
                         io::format_number(t.pv_count_per_hh), io::format_optional(t.pv_to_roof_ratio)});
  }
  return out;
}

SynthRegression generate_linear(std::size_t n, std::vector<double> beta, double intercept, double noise_sd,
                                 std::uint64_t seed) {
  if (n == 0 || beta.empty()) throw std::invalid_argument("synth: linear data needs rows and coefficients");
  std::mt19937_64 rng(learn::derive_seed(seed, 0));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  SynthRegression out;
  out.noise_sd = noise_sd;
  auto& d = out.data;
  for (std::size_t j = 0; j < beta.size(); ++j) d.names.push_back(fmt::format("x{}", j + 1));
  out.coefficients.push_back({"(Intercept)", intercept});
  for (std::size_t j = 0; j < beta.size(); ++j) out.coefficients.push_back({d.names[j], beta[j]});
  for (std::size_t i = 0; i < n; ++i) {
    double y = intercept;
    for (double b : beta) {
      const double x = u(rng);
      d.x.push_back(x);
      y += b * x;
    }
    if (noise_sd > 0.0) y += noise_sd * noise(rng);
    d.y.push_back(y);
  }
  return out;
}

SynthRegression generate_friedman(std::size_t n, std::size_t p, double noise_sd, std::uint64_t seed) {
  if (p < 10) throw std::invalid_argument("synth: the Friedman surface needs at least 10 columns");
  if (n == 0) throw std::invalid_argument("synth: need at least one row");
  std::mt19937_64 rng(learn::derive_seed(seed, 0));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  SynthRegression out;
  out.noise_sd = noise_sd;
  auto& d = out.data;
  for (std::size_t j = 0; j < p; ++j) d.names.push_back(fmt::format("x{}", j + 1));
  std::vector<double> x(p);
  for (std::size_t i = 0; i < n; ++i) {
    for (auto& v : x) v = u(rng);
    x[7] = 0.8 * x[3] + 0.2 * x[7];
    const double y = 10.0 * std::sin(std::numbers::pi * x[0] * x[1]) + 20.0 * (x[2] - 0.5) * (x[2] - 0.5) +
                     10.0 * x[3] + 5.0 * x[4] + 8.0 * x[5] * x[6];
    d.x.insert(d.x.end(), x.begin(), x.end());
    d.y.push_back(y + (noise_sd > 0.0 ? noise_sd * noise(rng) : 0.0));
  }
  return out;
}

SynthRegression generate_income_race(const IncomeRaceSpec& spec) {
  if (spec.n == 0) throw std::invalid_argument("synth: need at least one row");
  std::mt19937_64 rng(learn::derive_seed(spec.seed, 0));
  std::normal_distribution<double> noise(0.0, 1.0);
  SynthRegression out;
  out.noise_sd = spec.noise_sd;
  auto& d = out.data;
  d.names = {"income", "asian", "hispanic", "home_value"};
  out.coefficients = {{"(Intercept)", spec.intercept},
                      {"income", spec.income},
                      {"asian", spec.asian},
                      {"hispanic", spec.hispanic},
                      {"home_value", spec.home_value},
                      {"income x asian", spec.income_x_asian},
                      {"income x hispanic", spec.income_x_hispanic}};
  for (std::size_t i = 0; i < spec.n; ++i) {
    const double income = 1.5 + 10.0 * beta_variate(rng, 2.0, 4.0);
    const double asian = 0.42 * beta_variate(rng, 1.0, 6.0);
    const double hispanic = 0.9 * beta_variate(rng, 1.2, 4.0);
    const double home_value = 1.0 + 0.35 * income + 0.4 * noise(rng);
    const double y = spec.intercept + spec.income * income + spec.asian * asian + spec.hispanic * hispanic +
                     spec.home_value * home_value + spec.income_x_asian * income * asian +
                     spec.income_x_hispanic * income * hispanic + spec.noise_sd * noise(rng);
    d.x.insert(d.x.end(), {income, asian, hispanic, home_value});
    d.y.push_back(y);
  }
  return out;
}

std::vector<ingest::BlockGroupRecord> generate_feature_table(std::size_t n, double unincorporated_share,
                                                             std::uint64_t seed) {
  if (!(unincorporated_share >= 0.0 && unincorporated_share <= 1.0)) {
    throw std::invalid_argument("synth: unincorporated share outside [0, 1]");
  }
  const auto& schema = ingest::FeatureSchema::standard();
  std::mt19937_64 rng(learn::derive_seed(seed, 0));
  std::normal_distribution<double> noise(0.0, 1.0);
  auto z = [&](const ingest::BlockGroupRecord& r, std::string_view name) {
    const auto& spec = schema.features()[schema.index_of(name)];
    const auto& v = r.values[schema.index_of(name)];
    return v ? (*v - spec.min) / (spec.max - spec.min) : 0.0;
  };
  std::vector<ingest::BlockGroupRecord> out;
  for (std::size_t i = 0; i < n; ++i) {
    auto rec = ingest::BlockGroupRecord::empty(geoid_for(static_cast<int>(i)), schema);
    const bool unincorporated = std::bernoulli_distribution(unincorporated_share)(rng);
    for (std::size_t j = 0; j < schema.size(); ++j) {
      const auto& f = schema.features()[j];
      double v = 0.0;
      if (f.unit == "flag") {
        v = std::bernoulli_distribution(0.5)(rng) ? 1.0 : 0.0;
      } else if (f.unit == "year" || f.unit == "code") {
        v = static_cast<double>(std::uniform_int_distribution<int>(static_cast<int>(std::ceil(f.min)),
                                                                   static_cast<int>(std::floor(f.max)))(rng));
      } else {
        v = uniform(rng, f.min, f.max);
      }
      if (f.policy && unincorporated) continue;
      rec.values[j] = v;
    }
    const double count = 0.03 + 0.12 * z(rec, "Median HH Income") +
                         0.06 * std::sin(std::numbers::pi * z(rec, "Solar Radiation") * z(rec, "% Bachelors +")) +
                         0.08 * std::pow(z(rec, "% Renters") - 0.5, 2) + 0.03 * z(rec, "Net Metering") +
                         0.02 * z(rec, "Median HH Income") * z(rec, "% Asian") + 0.01 * noise(rng);
    rec.pv_count_per_hh = std::clamp(count, 0.0, 0.784);
    const double ratio = 0.25 * *rec.pv_count_per_hh + 0.015 * z(rec, "Resident. Elec. Rate") +
                         0.01 * z(rec, "Solar Mandate") + 0.003 * noise(rng);
    rec.pv_to_roof_ratio = std::clamp(ratio, 0.0, 0.26);
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace solarmap::synth
