// Acceptance run: one line per criterion, nonzero exit when any fails.

#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include <fmt/core.h>

#include "solarmap/deploy.hpp"
#include "solarmap/detect.hpp"
#include "solarmap/explain.hpp"
#include "solarmap/geo.hpp"
#include "solarmap/ingest.hpp"
#include "solarmap/learn.hpp"
#include "solarmap/synth.hpp"
#include "support/oracles.hpp"
#include "support/pipeline.hpp"

using namespace solarmap;

namespace {

// Collects failed checks; the first few are kept for the report line.
struct Tally {
  std::size_t checks = 0;
  std::size_t failures = 0;
  std::vector<std::string> notes;
  std::string summary;

  void expect(bool ok, const std::string& what) {
    ++checks;
    if (ok) return;
    ++failures;
    if (notes.size() < 3) notes.push_back(what);
  }
};

struct Criterion {
  int id;
  std::string name;
  double limit_s;  // 0: no runtime bound
  std::function<void(Tally&)> body;
};

bool close_rel(double a, double b, double rel) { return std::abs(a - b) <= rel * std::abs(b); }

// ---- 1 ----------------------------------------------------------------------

void geometry(Tally& t) {
  constexpr double R = 6378137.0, kDeg = std::numbers::pi / 180.0;
  const double eq = geo::ground_resolution(0, 0);
  const double denver = geo::ground_resolution(39.7, 20);
  t.expect(std::abs(eq - 156543.034) <= 0.01, fmt::format("gsd(0,0)={}", eq));
  t.expect(std::abs(denver - 0.1149) <= 0.0005, fmt::format("gsd(39.7,20)={}", denver));
  double worst = 0;
  for (double side : {50.0, 100.0, 1000.0, 10000.0}) {
    for (double lat : {-33.9, 0.0, 39.7, 60.0}) {
      const double dlat = side / R / kDeg, dlon = side / (R * std::cos(lat * kDeg)) / kDeg;
      const auto sq = geo::box_polygon(-105 - dlon / 2, lat - dlat / 2, -105 + dlon / 2, lat + dlat / 2);
      const double err = std::abs(geo::polygon_area_m2(sq) / (side * side) - 1.0);
      worst = std::max(worst, err);
      t.expect(err <= 0.002, fmt::format("square {} m at {} off by {}", side, lat, err));
    }
  }
  t.summary = fmt::format("gsd(0,0)={:.4f} gsd(39.7,20)={:.5f} worst square error {:.2e}", eq, denver, worst);
}

// ---- 2 ----------------------------------------------------------------------

void iou_nms(Tally& t) {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> count(1, 10);
  double worst = 0;
  for (int scene = 0; scene < 1000; ++scene) {
    detect::DetectionSet d{"s", {}};
    const int n = count(rng);
    for (int i = 0; i < n; ++i) {
      d.boxes.push_back(oracle::lattice_box(rng, 24, i % 3 == 0 ? detect::BoxClass::PV : detect::BoxClass::Roof));
    }
    const auto kept = detect::nms(d);
    const auto ref = oracle::greedy_nms(d.boxes, 0.2, 0.1);
    bool same = kept.boxes.size() == ref.size();
    for (std::size_t i = 0; same && i < ref.size(); ++i) {
      same = kept.boxes[i].rect == d.boxes[ref[i]].rect && kept.boxes[i].score == d.boxes[ref[i]].score &&
             kept.boxes[i].cls == d.boxes[ref[i]].cls;
    }
    t.expect(same, fmt::format("scene {} differs from greedy oracle", scene));
    for (int i = 0; i + 1 < n; ++i) {
      const double err = std::abs(detect::iou(d.boxes[i].rect, d.boxes[i + 1].rect) -
                                  oracle::raster_iou(d.boxes[i].rect, d.boxes[i + 1].rect, 0.25));
      worst = std::max(worst, err);
      t.expect(err <= 1e-3, fmt::format("scene {} iou off by {}", scene, err));
    }
  }
  t.summary = fmt::format("1000 scenes match greedy oracle, worst IoU raster gap {:.1e}", worst);
}

// ---- 3 ----------------------------------------------------------------------

detect::Corpus jitter_corpus(std::uint64_t seed, int images, int per_image) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> pos(0, 500), side(8, 140), unit(0, 1);
  std::normal_distribution<double> jitter(0, 3);
  detect::Corpus c;
  for (int i = 0; i < images; ++i) {
    const std::string id = "img" + std::to_string(i);
    detect::GroundTruthSet g{id, {}};
    detect::DetectionSet d{id, {}};
    for (int b = 0; b < per_image; ++b) {
      const double x = pos(rng), y = pos(rng), w = side(rng), h = side(rng);
      const auto cls = unit(rng) < 0.5 ? detect::BoxClass::Roof : detect::BoxClass::PV;
      g.boxes.push_back({{x, y, x + w, y + h}, cls});
      if (unit(rng) < 0.15) continue;
      const double x0 = x + jitter(rng), y0 = y + jitter(rng);
      d.boxes.push_back({{x0, y0, std::max(x0 + 1, x + w + jitter(rng)), std::max(y0 + 1, y + h + jitter(rng))},
                         cls,
                         std::round(unit(rng) * 20) / 20});
    }
    for (int s = 0; s < 2; ++s) {
      const double x = pos(rng), y = pos(rng);
      d.boxes.push_back({{x, y, x + side(rng), y + side(rng)},
                         unit(rng) < 0.5 ? detect::BoxClass::Roof : detect::BoxClass::PV,
                         unit(rng) * 0.6});
    }
    c.ground_truth.push_back(std::move(g));
    c.detections.push_back(std::move(d));
  }
  return c;
}

void ap_protocol(Tally& t) {
  const auto c = jitter_corpus(3, 1, 20);
  const auto rep = detect::eval_report(c);
  const auto ref = oracle::reference_eval(c.detections, c.ground_truth);
  double worst = 0;
  for (std::size_t tt = 0; tt < 10; ++tt) {
    for (std::size_t k = 0; k < 2; ++k) {
      for (std::size_t a = 0; a < 4; ++a) {
        for (std::size_t m = 0; m < 3; ++m) {
          const auto i = rep.cell(tt, k, a, m);
          const auto j = ((tt * 2 + k) * 4 + a) * 3 + m;
          worst = std::max({worst, std::abs(rep.ap[i] - ref.ap[j]), std::abs(rep.ar[i] - ref.ar[j])});
        }
      }
    }
  }
  t.expect(worst <= 1e-6, fmt::format("reference gap {}", worst));

  // Perfect detector on 20 boxes, one roof and one PV per image so the
  // single-detection cap cannot bind.
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> pos(0, 400), side(10, 130);
  detect::Corpus perfect;
  for (int i = 0; i < 10; ++i) {
    detect::GroundTruthSet g{"p" + std::to_string(i), {}};
    detect::DetectionSet d{g.image_id, {}};
    for (auto cls : {detect::BoxClass::Roof, detect::BoxClass::PV}) {
      const double x = pos(rng), y = pos(rng);
      g.boxes.push_back({{x, y, x + side(rng), y + side(rng)}, cls});
      d.boxes.push_back({g.boxes.back().rect, cls, 1.0});
    }
    perfect.ground_truth.push_back(g);
    perfect.detections.push_back(d);
  }
  const auto pr = detect::eval_report(perfect);
  std::size_t defined = 0;
  for (std::size_t i = 0; i < pr.ap.size(); ++i) {
    if (pr.ap[i] >= 0) {
      ++defined;
      t.expect(pr.ap[i] == 1.0, fmt::format("perfect AP cell {} = {}", i, pr.ap[i]));
    }
    if (pr.ar[i] >= 0) t.expect(pr.ar[i] == 1.0, fmt::format("perfect AR cell {} = {}", i, pr.ar[i]));
  }
  t.expect(defined > 0, "no defined cells");

  detect::EvalReport fixed;
  fixed.config = detect::EvalConfig::coco();
  fixed.stats = {0.661, 0.962, 0.773, 0.091, 0.602, 0.742, 0.113, 0.718, 0.725, 0.371, 0.665, 0.801};
  const std::string expected =
      " Average Precision  (AP) @[ IoU=0.50:0.95 | area=   all | maxDets=100 ] = 0.661\n"
      " Average Precision  (AP) @[ IoU=0.50      | area=   all | maxDets=100 ] = 0.962\n"
      " Average Precision  (AP) @[ IoU=0.75      | area=   all | maxDets=100 ] = 0.773\n"
      " Average Precision  (AP) @[ IoU=0.50:0.95 | area= small | maxDets=100 ] = 0.091\n"
      " Average Precision  (AP) @[ IoU=0.50:0.95 | area=medium | maxDets=100 ] = 0.602\n"
      " Average Precision  (AP) @[ IoU=0.50:0.95 | area= large | maxDets=100 ] = 0.742\n"
      " Average Recall     (AR) @[ IoU=0.50:0.95 | area=   all | maxDets=  1 ] = 0.113\n"
      " Average Recall     (AR) @[ IoU=0.50:0.95 | area=   all | maxDets= 10 ] = 0.718\n"
      " Average Recall     (AR) @[ IoU=0.50:0.95 | area=   all | maxDets=100 ] = 0.725\n"
      " Average Recall     (AR) @[ IoU=0.50:0.95 | area= small | maxDets=100 ] = 0.371\n"
      " Average Recall     (AR) @[ IoU=0.50:0.95 | area=medium | maxDets=100 ] = 0.665\n"
      " Average Recall     (AR) @[ IoU=0.50:0.95 | area= large | maxDets=100 ] = 0.801\n";
  t.expect(detect::format_coco_summary(fixed) == expected, "summary block differs");
  t.summary = fmt::format("reference gap {:.1e}, {} perfect cells at 1.0, summary block exact", worst, defined);
}

// ---- 4 ----------------------------------------------------------------------

void deployment(Tally& t) {
  std::size_t groups = 0;
  double worst = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    synth::SceneSpec spec;
    spec.block_groups = 4;
    spec.images_per_block_group = 40;
    spec.seed = seed;
    const auto scene = synth::generate_scene(spec);
    auto dets = synth::render_detections(scene, {});
    for (auto& d : dets) d = detect::nms(d);
    const auto r = deploy::rollup(synth::observations(scene, dets), scene.households());
    t.expect(r.records.size() == scene.truth.size(), fmt::format("scene {} lost block groups", seed));
    for (std::size_t i = 0; i < std::min(r.records.size(), scene.truth.size()); ++i) {
      const auto& got = r.records[i];
      const auto& want = scene.truth[i];
      ++groups;
      t.expect(got.pv_system_count == want.pv_system_count, fmt::format("scene {} count", seed));
      t.expect(got.pv_count_per_hh == want.pv_count_per_hh, fmt::format("scene {} count per hh", seed));
      if (got.pv_to_roof_ratio && want.pv_to_roof_ratio) {
        const double rel = std::abs(*got.pv_to_roof_ratio - *want.pv_to_roof_ratio) /
                           std::max(*want.pv_to_roof_ratio, std::numeric_limits<double>::min());
        if (*want.pv_to_roof_ratio > 0) worst = std::max(worst, rel);
        t.expect(*want.pv_to_roof_ratio == 0 ? *got.pv_to_roof_ratio == 0 : rel <= 1e-9,
                 fmt::format("scene {} ratio off by {}", seed, rel));
      } else {
        t.expect(got.pv_to_roof_ratio.has_value() == want.pv_to_roof_ratio.has_value(),
                 fmt::format("scene {} ratio presence", seed));
      }
    }
  }
  t.summary = fmt::format("{} block groups over 50 scenes, worst ratio error {:.1e}", groups, worst);
}

// ---- 5 ----------------------------------------------------------------------

void ingest_rules(Tally& t) {
  using geo::box_polygon;
  using ingest::OverlayLayer;
  constexpr double W = -105.0, S = 39.7, D = 0.01;
  auto feature = [](std::string id, geo::Polygon p, std::optional<double> pop = std::nullopt) {
    return ingest::OverlayFeature{std::move(id), std::move(p), {}, pop};
  };
  const auto bg = box_polygon(W, S, W + D, S + D);

  OverlayLayer split{"j", {feature("west", box_polygon(W - D, S - D, W + 0.6 * D, S + 2 * D)),
                           feature("east", box_polygon(W + 0.6 * D, S - D, W + 2 * D, S + 2 * D))}};
  t.expect(ingest::spatial_join_largest_share(bg, split).chosen == 0u, "60/40 split");
  OverlayLayer tie{"j", {feature("b", box_polygon(W - D, S - D, W + 0.5 * D, S + 2 * D)),
                         feature("a", box_polygon(W + 0.5 * D, S - D, W + 2 * D, S + 2 * D))}};
  t.expect(ingest::spatial_join_largest_share(bg, tie).chosen == 1u, "share tie goes to the smaller id");

  OverlayLayer zips{"z", {feature("80203", box_polygon(W - D, S - D, W + 0.8 * D, S + 2 * D), 12000.0),
                          feature("80202", box_polygon(W + 0.8 * D, S - D, W + 2 * D, S + 2 * D), 30000.0)}};
  t.expect(ingest::assign_zip_by_population(bg, zips).chosen == 1u, "most populous zip");
  OverlayLayer ztie{"z", {feature("80210", box_polygon(W - D, S - D, W + 0.5 * D, S + 2 * D), 100.0),
                          feature("9999", box_polygon(W + 0.5 * D, S - D, W + 2 * D, S + 2 * D), 100.0)}};
  t.expect(ingest::assign_zip_by_population(bg, ztie).chosen == 1u, "zip population tie");

  const ingest::TractTable tracts{{"08031004102", {{"Hail Risk", 12.5}}}};
  const std::vector<std::string> bgs{"080310041021", "080310041022", "080310099991"};
  const auto br = ingest::broadcast_tract_to_blockgroups(tracts, bgs);
  t.expect(br.values.size() == 2 && br.values.at(bgs[1]).at("Hail Risk") == 12.5, "tract broadcast");
  t.expect(br.unknown == std::vector<std::string>{"080310099991"}, "unknown tract");

  const auto& s = ingest::FeatureSchema::standard();
  const std::string f = "Median Home Value";
  auto rec = [&](std::string id, std::optional<double> v) {
    auto r = ingest::BlockGroupRecord::empty(std::move(id), s);
    r.at(s, f) = v;
    return r;
  };
  std::vector<ingest::BlockGroupRecord> recs{rec("A", std::nullopt), rec("B", 300000), rec("C", 400000),
                                             rec("F", std::nullopt), rec("G", std::nullopt), rec("H", 500000),
                                             rec("W", std::nullopt)};
  ingest::AdjacencyGraph g{{"A", {"B", "C"}}, {"B", {"A"}}, {"C", {"A"}}, {"F", {"G"}},
                           {"G", {"F", "H"}}, {"H", {"G"}}, {"W", {}}};
  const std::vector<std::string> features{f};
  const auto imp = ingest::impute_adjacent_mean(recs, g, features, s);
  t.expect(*imp.records[0].at(s, f) == 350000, "A is the mean of its neighbours");
  t.expect(*imp.records[3].at(s, f) == 500000 && *imp.records[4].at(s, f) == 500000, "chain fill");
  t.expect(!imp.records[6].at(s, f).has_value() && imp.unresolved.size() == 1, "isolated stays missing");
  const auto again = ingest::impute_adjacent_mean(imp.records, g, features, s);
  t.expect(again.filled == 0 && ingest::feature_table_csv(again.records, s) == ingest::feature_table_csv(imp.records, s),
           "imputation is idempotent");

  auto table = synth::generate_feature_table(300, 0.2, 17);
  t.expect(ingest::validate_schema(table, s).total_violations() == 0, "clean table flagged");
  table[3].at(s, "% Renters") = 1.2;
  table[50].at(s, "Median Age") = 84.6;
  table[60].at(s, "Median Age") = 84.7;
  table[61].pv_to_roof_ratio = -0.01;
  const auto report = ingest::validate_schema(table, s);
  t.expect(report.total_violations() == 3, fmt::format("{} violations instead of 3", report.total_violations()));
  for (const auto& fr : report.features) {
    if (fr.name == "% Renters") t.expect(fr.offending_geoids == std::vector{table[3].geoid}, "renters row");
    if (fr.name == "Median Age") t.expect(fr.offending_geoids == std::vector{table[60].geoid}, "age row");
  }
  t.summary = "join, zip, tract, imputation and range fixtures hold";
}

// ---- 6 ----------------------------------------------------------------------

void learner_correctness(Tally& t) {
  const std::vector<double> y{3, 1, 4, 1, 5, 9, 2, 6};
  const auto perfect = learn::metrics(y, y);
  t.expect(perfect.mae == 0 && perfect.rmse == 0 && perfect.r2 == 1.0, "perfect metrics");
  double mean = 0;
  for (double v : y) mean += v;
  mean /= static_cast<double>(y.size());
  const std::vector<double> flat(y.size(), mean);
  t.expect(learn::metrics(y, flat).r2 == 0.0, "mean predictor R2");

  std::mt19937_64 rng(6);
  std::normal_distribution<double> z(0, 2);
  std::uniform_int_distribution<int> len(1, 40);
  for (int i = 0; i < 10000; ++i) {
    std::vector<double> a(len(rng)), b(a.size());
    for (auto& v : a) v = z(rng);
    for (auto& v : b) v = z(rng);
    const auto m = learn::metrics(a, b);
    t.expect(m.rmse >= m.mae, "RMSE below MAE");
  }

  const auto d = synth::generate_friedman(500, 10, 1.0, 6).data;
  learn::LearnerConfig c;
  c.n_estimators = 200;
  c.max_depth = 3;
  c.learning_rate = 0.1;
  c.gamma = 0;
  c.alpha = 0;
  learn::FitTrace trace;
  learn::fit_gbdt(d, c, {}, &trace);
  std::size_t rises = 0;
  for (std::size_t i = 1; i < trace.train_loss.size(); ++i) rises += trace.train_loss[i] > trace.train_loss[i - 1];
  t.expect(trace.train_loss.size() == 200 && rises == 0, fmt::format("{} loss increases", rises));

  auto coarse = d;
  for (auto& v : coarse.x) v = std::round(v * 50) / 50;
  auto exact = c;
  exact.n_estimators = 10;
  exact.max_depth = 5;
  auto hist = exact;
  hist.max_bin = 64;
  t.expect(learn::to_json(learn::fit_gbdt(coarse, exact)).at("trees") ==
               learn::to_json(learn::fit_gbdt(coarse, hist)).at("trees"),
           "histogram trees differ from exact trees");

  auto rf = learn::config_from_params("random_forest", {{"n_estimators", 24}, {"max_features", "sqrt"},
                                                        {"min_samples_leaf", 2}, {"random_state", 3}});
  t.expect(learn::to_json(learn::fit_random_forest(d, rf, {1})).dump() ==
               learn::to_json(learn::fit_random_forest(d, rf, {4})).dump(),
           "forest differs across thread counts");
  auto gb = c;
  gb.n_estimators = 30;
  gb.feature_fraction = 0.6;
  gb.bagging_fraction = 0.7;
  gb.bagging_freq = 1;
  t.expect(learn::to_json(learn::fit_gbdt(d, gb, {1})).dump() == learn::to_json(learn::fit_gbdt(d, gb, {4})).dump(),
           "boosting differs across thread counts");
  t.summary = "metric identities, 10000 RMSE>=MAE draws, monotone loss, histogram and thread equivalence";
}

// ---- 7 ----------------------------------------------------------------------

void learner_power(Tally& t) {
  const auto d = synth::generate_friedman(2000, 10, 1.0, 11).data;
  const std::vector<double> f{0.8, 0.2};
  const auto parts = learn::split_dataset(d, f, 0);
  const auto grid = learn::appendix_b_grid();
  const auto& gb_cfg = grid[4].config;   // boosted trees, depth 7, 311 rounds
  const auto& rf_cfg = grid[15].config;  // 300 trees, sqrt features
  const auto gb = learn::fit(parts[0], gb_cfg);
  const auto rf = learn::fit(parts[0], rf_cfg);
  const double r2_gb = *learn::metrics(parts[1].y, gb.predict(parts[1])).r2;
  const double r2_rf = *learn::metrics(parts[1].y, rf.predict(parts[1])).r2;
  t.expect(r2_gb >= 0.80, fmt::format("GBDT R2 {:.3f}", r2_gb));
  t.expect(r2_rf >= 0.75, fmt::format("RF R2 {:.3f}", r2_rf));
  t.summary = fmt::format("held-out R2 GBDT {:.3f}, RF {:.3f}", r2_gb, r2_rf);
}

// ---- 8 ----------------------------------------------------------------------

void shap(Tally& t) {
  const auto base = synth::generate_friedman(1000, 11, 1.0, 8).data;
  learn::Dataset d = base;
  d.names.push_back("flat");
  d.x.clear();
  for (std::size_t i = 0; i < base.rows(); ++i) {
    d.x.insert(d.x.end(), base.row(i).begin(), base.row(i).end());
    d.x.push_back(0.5);
  }
  learn::LearnerConfig c;
  c.n_estimators = 60;
  c.max_depth = 6;
  c.learning_rate = 0.1;
  c.feature_fraction = 0.8;
  c.seed = 8;
  const auto gb = learn::fit_gbdt(d, c);
  auto rc = c;
  rc.algorithm = learn::Algorithm::RandomForest;
  rc.n_estimators = 20;
  rc.max_depth = 8;
  rc.max_features = learn::MaxFeatures::Sqrt;
  const auto rf = learn::fit_random_forest(d, rc);

  double worst_acc = 0, worst_ref = 0;
  for (const auto* e : {&gb, &rf}) {
    const auto all = explain::explain_dataset(*e, d);
    for (std::size_t i = 0; i < all.size(); ++i) {
      const double sum = std::accumulate(all[i].phi.begin(), all[i].phi.end(), all[i].base_value);
      const double gap = std::abs(e->predict(d.row(i)) - sum);
      worst_acc = std::max(worst_acc, gap);
      t.expect(gap <= 1e-8, fmt::format("local accuracy gap {}", gap));
      t.expect(all[i].phi.back() == 0.0, "dummy feature attributed");
    }
    for (std::size_t i = 0; i < 20; ++i) {
      const auto ref = oracle::brute_force_shapley(*e, d.row(i));
      double scale = 0;
      for (std::size_t j = 1; j < ref.size(); ++j) scale = std::max(scale, std::abs(ref[j]));
      const double b = std::abs(all[i].base_value - ref[0]) / std::abs(ref[0]);
      t.expect(b <= 1e-8, fmt::format("base value off by {}", b));
      for (std::size_t j = 0; j < all[i].phi.size(); ++j) {
        const double rel = std::abs(all[i].phi[j] - ref[j + 1]) / scale;
        worst_ref = std::max(worst_ref, rel);
        t.expect(rel <= 1e-8, fmt::format("phi {} off by {}", j, rel));
      }
    }
  }
  t.summary = fmt::format("2000 explanations, worst local gap {:.1e}, worst oracle gap {:.1e} (p=12)", worst_acc,
                          worst_ref);
}

// ---- 9 ----------------------------------------------------------------------

void fis(Tally& t) {
  const std::vector<std::string> f{"a", "b", "c"};
  std::vector<explain::ModelFis> models{{"A", f, {10, 5, 0}, 0.5}, {"B", f, {0, 4, 8}, 0.25}};
  const auto agg = explain::aggregate_fis(models);
  const std::vector<std::pair<std::string, double>> want{
      {"a", (0.5 * 1.0 + 0.25 * 0.0) / 0.75}, {"b", 0.5}, {"c", (0.5 * 0.0 + 0.25 * 1.0) / 0.75}};
  t.expect(agg.rows.size() == 3, "row count");
  for (std::size_t i = 0; i < std::min<std::size_t>(3, agg.rows.size()); ++i) {
    t.expect(agg.rows[i].feature == want[i].first && agg.rows[i].aggregate == want[i].second,
             fmt::format("row {} = {} {}", i, agg.rows[i].feature, agg.rows[i].aggregate));
  }
  for (double k : {2.0, 0.01, 37.0}) {
    auto scaled = models;
    for (auto& m : scaled) m.weight *= k;
    const auto a2 = explain::aggregate_fis(scaled);
    for (std::size_t i = 0; i < 3; ++i) {
      t.expect(close_rel(a2.rows[i].aggregate, agg.rows[i].aggregate, 1e-14) || agg.rows[i].aggregate == 0,
               "weight rescaling moved the aggregate");
    }
  }
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0, 50);
  for (int i = 0; i < 100; ++i) {
    std::vector<double> g(12);
    for (auto& v : g) v = u(rng);
    const auto s = explain::standardize_fis(g).scores;
    t.expect(*std::min_element(s.begin(), s.end()) == 0.0 && *std::max_element(s.begin(), s.end()) == 1.0,
             "standardized scores miss 0 or 1");
  }
  t.summary = "hand example exact, rescaling invariant, standardized range [0, 1]";
}

// ---- 10 ---------------------------------------------------------------------

void ols_ame(Tally& t) {
  synth::IncomeRaceSpec spec;
  spec.seed = 10;
  const auto data = synth::generate_income_race(spec).data;
  explain::LinearModelSpec s;
  for (const char* term : {"income", "asian", "hispanic", "income*asian", "income*hispanic", "home_value", "income^2"}) {
    s.terms.push_back(explain::parse_term(term));
  }
  const auto fit = explain::ols_fit(data, s);
  const Eigen::MatrixXd X = explain::design_matrix(data, s);
  const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(data.y.data(), data.rows());
  const Eigen::VectorXd beta = oracle::normal_equation_beta(X, y);
  const Eigen::MatrixXd cov = oracle::hc1_sandwich(X, y - X * beta);
  double worst_b = 0, worst_se = 0, worst_ame = 0;
  for (Eigen::Index j = 0; j < beta.size(); ++j) {
    worst_b = std::max(worst_b, std::abs(fit.beta[j] - beta[j]) / std::abs(beta[j]));
    worst_se = std::max(worst_se, std::abs(fit.se(j) - std::sqrt(cov(j, j))) / std::sqrt(cov(j, j)));
  }
  t.expect(worst_b <= 1e-10, fmt::format("beta off by {}", worst_b));
  t.expect(worst_se <= 1e-10, fmt::format("SE off by {}", worst_se));

  const std::size_t inc = *data.find("income");
  double scale = 0;
  for (std::size_t i = 0; i < data.rows(); ++i) scale = std::max(scale, std::abs(data.at(i, inc)));
  double slope[2] = {0, 0};
  int k = 0;
  for (const char* mod : {"asian", "hispanic"}) {
    const auto grid = explain::moderator_grid(data, mod, 20);
    const auto r = explain::ame(fit, data, "income", mod, grid);
    for (const auto& pt : r.points) {
      const double fd = oracle::fd_ame(fit, data, inc, *data.find(mod), pt.moderator, 1e-5 * scale);
      const double rel = std::abs(pt.ame - fd) / std::abs(fd);
      worst_ame = std::max(worst_ame, rel);
      t.expect(rel <= 1e-6, fmt::format("AME off by {}", rel));
    }
    slope[k++] = (r.points.back().ame - r.points.front().ame) / (grid.back() - grid.front());
  }
  t.expect(slope[0] > 0, "AME should rise with the Asian share");
  t.expect(slope[1] < 0, "AME should fall with the Hispanic share");
  t.summary = fmt::format("beta {:.1e}, SE {:.1e}, AME {:.1e}; slopes {:+.4f} / {:+.4f}", worst_b, worst_se,
                          worst_ame, slope[0], slope[1]);
}

// ---- 11 ---------------------------------------------------------------------

void reproducibility(Tally& t) {
  oracle::TempDir a("accept_a"), b("accept_b");
  const auto ra = pipeline::run_all(a.path(), 4242);
  const auto snap_a = pipeline::snapshot(a.path());
  const auto rb = pipeline::run_all(b.path(), 4242);
  const auto snap_b = pipeline::snapshot(b.path());
  std::set<std::string> commands;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    commands.insert(ra[i].name);
    const bool ok = ra[i].exit_code == (ra[i].name == "fetch-tiles-miss" ? 2 : 0);
    t.expect(ok, fmt::format("{} exited {}: {}", ra[i].name, ra[i].exit_code, ra[i].err.substr(0, 120)));
    t.expect(ra[i].out == rb[i].out && ra[i].err == rb[i].err && ra[i].exit_code == rb[i].exit_code,
             fmt::format("{} console output differs", ra[i].name));
  }
  t.expect(snap_a.size() == snap_b.size(), "file sets differ");
  for (const auto& [path, bytes] : snap_a) {
    const auto it = snap_b.find(path);
    t.expect(it != snap_b.end() && it->second == bytes, fmt::format("{} differs", path));
  }
  // Re-running over existing outputs rewrites the same bytes.
  pipeline::run_all(a.path(), 4242);
  t.expect(pipeline::snapshot(a.path()) == snap_a, "re-run in place changed outputs");
  t.summary = fmt::format("{} command lines, {} output files byte-identical", commands.size(), snap_a.size());
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "geometry", 1.0, geometry},
      {2, "iou-nms-oracle", 10.0, iou_nms},
      {3, "ap-protocol", 0.0, ap_protocol},
      {4, "deployment-oracle", 30.0, deployment},
      {5, "ingest-rules", 0.0, ingest_rules},
      {6, "learner-correctness", 0.0, learner_correctness},
      {7, "learner-power", 60.0, learner_power},
      {8, "shap", 60.0, shap},
      {9, "fis-aggregation", 0.0, fis},
      {10, "ols-ame", 0.0, ols_ame},
      {11, "reproducibility", 0.0, reproducibility},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    Tally t;
    const auto start = std::chrono::steady_clock::now();
    try {
      c.body(t);
    } catch (const std::exception& e) {
      t.expect(false, fmt::format("threw: {}", e.what()));
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (c.limit_s > 0) t.expect(secs < c.limit_s, fmt::format("took {:.2f}s, limit {:.0f}s", secs, c.limit_s));
    const bool ok = t.failures == 0;
    failed += ok ? 0 : 1;
    std::string line = fmt::format("{} {:>2} {:<20} {:7.2f}s  {}", ok ? "PASS" : "FAIL", c.id, c.name, secs, t.summary);
    for (const auto& n : t.notes) line += " | " + n;
    if (!ok) line += fmt::format(" ({} of {} checks failed)", t.failures, t.checks);
    std::cout << line << std::endl;
  }
  std::cout << fmt::format("{} of {} criteria passed\n", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
