#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "solarmap/learn.hpp"
#include "solarmap/synth.hpp"

using namespace solarmap;
using learn::Algorithm;
using learn::Dataset;
using learn::LearnerConfig;

namespace {

Dataset make(std::vector<std::string> names, std::vector<std::vector<double>> rows, std::vector<double> y) {
  Dataset d;
  d.names = std::move(names);
  for (const auto& r : rows) d.x.insert(d.x.end(), r.begin(), r.end());
  d.y = std::move(y);
  return d;
}

Dataset friedman(std::size_t n, std::uint64_t seed) { return synth::generate_friedman(n, 10, 1.0, seed).data; }

LearnerConfig gbdt(int rounds, int depth) {
  LearnerConfig c;
  c.algorithm = Algorithm::Gbdt;
  c.n_estimators = rounds;
  c.max_depth = depth;
  c.learning_rate = 0.1;
  return c;
}

LearnerConfig forest(int trees) {
  LearnerConfig c;
  c.algorithm = Algorithm::RandomForest;
  c.n_estimators = trees;
  c.max_depth = 0;
  c.reg_lambda = 0;
  c.max_features = learn::MaxFeatures::Sqrt;
  c.seed = 99;
  return c;
}

std::string tree_json(const learn::Tree& t) {
  learn::TreeEnsemble e;
  e.feature_names = {"a"};
  e.trees = {t};
  return learn::to_json(e)["trees"].dump();
}

}  // namespace

TEST_CASE("metrics on hand cases") {
  const std::vector<double> y{1, 2}, yhat{2, 4};
  const auto m = learn::metrics(y, yhat);
  CHECK(m.mae == 1.5);
  CHECK(m.rmse == std::sqrt(2.5));
  CHECK(m.r2.has_value());
  CHECK(*m.r2 == doctest::Approx(1.0 - 5.0 / 0.5));

  const std::vector<double> v{3, 1, 4, 1, 5, 9, 2, 6};
  const auto perfect = learn::metrics(v, v);
  CHECK(perfect.mae == 0.0);
  CHECK(perfect.rmse == 0.0);
  CHECK(*perfect.r2 == 1.0);

  double mean = 0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  const std::vector<double> flat(v.size(), mean);
  CHECK(*learn::metrics(v, flat).r2 == 0.0);

  const std::vector<double> constant{2, 2, 2};
  CHECK_FALSE(learn::metrics(constant, constant).r2.has_value());
  CHECK_THROWS(learn::metrics(y, constant));
}

TEST_CASE("RMSE is never below MAE and R2 never above 1") {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> len(1, 30);
  std::normal_distribution<double> z(0, 3);
  for (int t = 0; t < 10000; ++t) {
    std::vector<double> y(len(rng)), yhat(y.size());
    for (auto& v : y) v = z(rng);
    for (auto& v : yhat) v = z(rng);
    const auto m = learn::metrics(y, yhat);
    CHECK(m.rmse >= m.mae);
    if (m.r2) CHECK(*m.r2 <= 1.0);
  }
}

TEST_CASE("seeded splits") {
  Dataset ten = friedman(10, 1);
  ten.ids.clear();
  for (int i = 0; i < 10; ++i) ten.ids.push_back(std::to_string(i));
  const std::vector<double> f3{0.8, 0.1, 0.1};
  const auto parts = learn::split_dataset(ten, f3, 5);
  REQUIRE(parts.size() == 3);
  CHECK(parts[0].rows() == 8);
  CHECK(parts[1].rows() == 1);
  CHECK(parts[2].rows() == 1);
  std::set<std::string> seen;
  for (const auto& p : parts) seen.insert(p.ids.begin(), p.ids.end());
  CHECK(seen.size() == 10);
  const auto again = learn::split_dataset(ten, f3, 5);
  for (int i = 0; i < 3; ++i) CHECK(again[i].ids == parts[i].ids);

  const auto big = friedman(3441, 2);
  const std::vector<double> f2{0.8, 0.2};
  const auto tt = learn::split_dataset(big, f2, 0);
  CHECK(tt[0].rows() == 2752);
  CHECK(tt[1].rows() == 689);

  const auto three = friedman(3, 3);
  const std::vector<double> thin{0.1, 0.9};
  CHECK_THROWS(learn::split_dataset(three, thin, 0));
  const std::vector<double> bad{0.5, 0.4};
  CHECK_THROWS(learn::split_dataset(ten, bad, 0));
}

TEST_CASE("single trees") {
  const auto constant = make({"a"}, {{1}, {2}, {3}}, {4, 4, 4});
  const auto leaf = learn::fit_tree(constant, forest(1));
  CHECK(leaf.leaves() == 1);
  CHECK(leaf.nodes[0].value == 4.0);

  // Step at zero; every threshold between the two clusters is the midpoint.
  const auto step = make({"a"}, {{-3}, {-2}, {-1}, {0}, {1}, {2}}, {0, 0, 0, 1, 1, 1});
  const auto stump = learn::fit_tree(step, forest(1));
  CHECK(stump.depth() == 1);
  CHECK(stump.nodes[0].threshold == -0.5);
  for (std::size_t i = 0; i < step.rows(); ++i) CHECK(stump.predict(step.row(i)) == step.y[i]);

  auto gated = gbdt(1, 3);
  gated.gamma = 1e6;
  CHECK(learn::fit_tree(step, gated).leaves() == 1);
}

TEST_CASE("threshold ties route right") {
  learn::Tree t;
  t.nodes = {{0, 2.5, 1, 2, 1.0, 2.0, 0.0}, {-1, 0, -1, -1, 0, 1, -7.0}, {-1, 0, -1, -1, 0, 1, 7.0}};
  const double below[] = {std::nextafter(2.5, 0.0)};
  const double at[] = {2.5};
  CHECK(t.predict(below) == -7.0);
  CHECK(t.predict(at) == 7.0);

  learn::TreeEnsemble e;
  e.base_score = 0.25;
  e.learning_rate = 0.5;
  e.feature_names = {"a"};
  e.trees = {learn::Tree{{{-1, 0, -1, -1, 0, 1, 3.0}}}};
  CHECK(e.predict(at) == 0.25 + 0.5 * 3.0);
  const double two[] = {1.0, 2.0};
  CHECK_THROWS(e.predict(two));
}

TEST_CASE("histogram splits equal exact splits when every value has a bin") {
  auto d = friedman(300, 7);
  // Round to a coarse grid so the distinct count stays below max_bin.
  for (auto& v : d.x) v = std::round(v * 40) / 40;
  auto exact = gbdt(1, 5);
  auto hist = exact;
  hist.max_bin = 64;
  CHECK(tree_json(learn::fit_tree(d, exact)) == tree_json(learn::fit_tree(d, hist)));
  auto rf_exact = forest(1);
  rf_exact.max_features = learn::MaxFeatures::All;
  auto rf_hist = rf_exact;
  rf_hist.max_bin = 41;
  CHECK(tree_json(learn::fit_tree(d, rf_exact)) == tree_json(learn::fit_tree(d, rf_hist)));
}

TEST_CASE("monotone feature transforms leave training predictions unchanged") {
  const auto d = friedman(200, 8);
  auto t = d;
  for (std::size_t i = 0; i < t.rows(); ++i) t.x[i * t.cols()] = std::exp(3 * t.x[i * t.cols()]);
  auto c = gbdt(20, 4);
  const auto a = learn::fit_gbdt(d, c).predict(d);
  const auto b = learn::fit_gbdt(t, c).predict(t);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("boosting loss never increases without regularisation gates") {
  const auto d = friedman(400, 9);
  auto c = gbdt(200, 3);
  c.feature_fraction = 0.5;
  c.bagging_fraction = 0.7;
  c.bagging_freq = 1;
  learn::FitTrace trace;
  learn::fit_gbdt(d, c, {}, &trace);
  REQUIRE(trace.train_loss.size() == 200);
  for (std::size_t i = 1; i < trace.train_loss.size(); ++i) CHECK(trace.train_loss[i] <= trace.train_loss[i - 1]);
}

TEST_CASE("degenerate boosting") {
  const auto d = friedman(100, 10);
  auto one = gbdt(1, 4);
  one.learning_rate = 1.0;
  one.reg_lambda = 0;
  one.gamma = 1e9;
  one.base_score = 0.0;
  const double mean = std::accumulate(d.y.begin(), d.y.end(), 0.0) / static_cast<double>(d.rows());
  for (double p : learn::fit_gbdt(d, one).predict(d)) CHECK(p == doctest::Approx(mean).epsilon(1e-12));

  auto frozen = gbdt(30, 4);
  frozen.learning_rate = 0.0;
  frozen.base_score = 0.3;
  for (double p : learn::fit_gbdt(d, frozen).predict(d)) CHECK(p == 0.3);
}

TEST_CASE("leaf-wise growth respects the leaf cap") {
  const auto d = friedman(300, 11);
  auto c = gbdt(5, 0);
  c.growth = learn::Growth::LeafWise;
  c.num_leaves = 7;
  const auto e = learn::fit_gbdt(d, c);
  for (const auto& t : e.trees) CHECK(t.leaves() <= 7);
  CHECK(e.trees[0].leaves() == 7);
}

TEST_CASE("forest prediction is the mean of its trees") {
  const auto d = friedman(300, 12);
  const auto e = learn::fit_random_forest(d, forest(25));
  REQUIRE(e.trees.size() == 25);
  for (std::size_t i = 0; i < 50; ++i) {
    const auto x = d.row(i);
    double sum = 0, lo = 1e300, hi = -1e300;
    for (const auto& t : e.trees) {
      const double v = t.predict(x);
      sum += v;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    CHECK(e.predict(x) == sum / 25.0);
    CHECK(e.predict(x) >= lo);
    CHECK(e.predict(x) <= hi);
  }

  auto single = forest(1);
  single.bootstrap = false;
  single.max_features = learn::MaxFeatures::All;
  const auto f = learn::fit_random_forest(d, single);
  const auto t = learn::fit_tree(d, single);
  for (std::size_t i = 0; i < d.rows(); ++i) CHECK(f.predict(d.row(i)) == t.predict(d.row(i)));
}

TEST_CASE("parallel and serial training are bit-identical") {
  const auto d = friedman(400, 13);
  const auto rf1 = learn::to_json(learn::fit_random_forest(d, forest(16), {1})).dump();
  const auto rf4 = learn::to_json(learn::fit_random_forest(d, forest(16), {4})).dump();
  CHECK(rf1 == rf4);
  auto c = gbdt(20, 4);
  c.feature_fraction = 0.6;
  c.bagging_fraction = 0.8;
  c.bagging_freq = 2;
  c.max_bin = 32;
  CHECK(learn::to_json(learn::fit_gbdt(d, c, {1})).dump() == learn::to_json(learn::fit_gbdt(d, c, {3})).dump());
}

TEST_CASE("prediction follows feature names, not column order") {
  const auto d = friedman(100, 14);
  const auto e = learn::fit_gbdt(d, gbdt(10, 3));
  Dataset shuffled;
  std::vector<std::size_t> perm(d.cols());
  std::iota(perm.begin(), perm.end(), 0);
  std::reverse(perm.begin(), perm.end());
  for (auto j : perm) shuffled.names.push_back(d.names[j]);
  for (std::size_t i = 0; i < d.rows(); ++i) {
    for (auto j : perm) shuffled.x.push_back(d.at(i, j));
  }
  shuffled.y = d.y;
  CHECK(e.predict(shuffled) == e.predict(d));
  shuffled.names[0] = "nope";
  CHECK_THROWS(e.predict(shuffled));
}

TEST_CASE("ensemble JSON round trip") {
  const auto d = friedman(150, 15);
  for (const auto& e : {learn::fit_gbdt(d, gbdt(8, 3)), learn::fit_random_forest(d, forest(5))}) {
    const auto doc = learn::to_json(e);
    CHECK(doc.at("schema_version") == learn::kEnsembleSchemaVersion);
    const auto back = learn::ensemble_from_json(doc);
    CHECK(learn::to_json(back).dump() == doc.dump());
    CHECK(back.predict(d) == e.predict(d));
  }
  auto doc = learn::to_json(learn::fit_gbdt(d, gbdt(2, 2)));
  doc["schema_version"] = 99;
  CHECK_THROWS(learn::ensemble_from_json(doc));
}

TEST_CASE("library hyperparameters map onto the unified config") {
  const auto cat = learn::config_from_params("catboost", {{"l2_leaf_reg", 2}, {"depth", 9}, {"iterations", 150}});
  CHECK(cat.reg_lambda == 2);
  CHECK(cat.max_depth == 9);
  CHECK(cat.n_estimators == 150);

  const auto xgb = learn::config_from_params(
      "xgboost", nlohmann::json::parse(R"({"seed": 712, "random_state": 700, "colsample_bytree": 0.3, "alpha": 12})"));
  CHECK(xgb.seed == 700);
  CHECK(xgb.feature_fraction == 0.3);
  CHECK(xgb.alpha == 12);

  const auto lgb = learn::config_from_params(
      "lightgbm", nlohmann::json::parse(R"({"num_leaves": 36, "max_bin": 23, "bagging_freq": 4, "metric": "rmse"})"));
  CHECK(lgb.growth == learn::Growth::LeafWise);
  CHECK(lgb.num_leaves == 36);
  CHECK(lgb.max_bin == 23);

  const auto rf = learn::config_from_params("random_forest", {{"max_features", "sqrt"}, {"n_estimators", 19}});
  CHECK(rf.algorithm == Algorithm::RandomForest);
  CHECK(rf.max_features == learn::MaxFeatures::Sqrt);

  CHECK_THROWS(learn::config_from_params("xgboost", {{"colsample_bynode", 0.5}}));
  CHECK_THROWS(learn::config_from_params("sklearn", nlohmann::json::object()));

  const auto grid = learn::appendix_b_grid();
  REQUIRE(grid.size() == 16);
  CHECK(grid[4].config.seed == 185);
  CHECK(grid[4].config.n_estimators == 311);
  CHECK(*grid[4].config.base_score == 0.5);
  CHECK(grid[7].config.n_estimators == 700);
  CHECK(learn::config_from_json(learn::to_json(grid[2].config)).num_leaves == 36);
}

TEST_CASE("experiment grid on synthetic block groups") {
  const auto& schema = ingest::FeatureSchema::standard();
  const auto records = synth::generate_feature_table(250, 0.1, 21);
  std::map<learn::DatasetTag, Dataset> datasets;
  for (auto tag : {learn::DatasetTag::PvCount, learn::DatasetTag::PvCountPolicy, learn::DatasetTag::PvRatio,
                   learn::DatasetTag::PvRatioPolicy}) {
    datasets[tag] = learn::assemble_dataset(records, schema, tag).dataset;
  }
  CHECK(datasets[learn::DatasetTag::PvCount].cols() == 37);
  CHECK(datasets[learn::DatasetTag::PvCountPolicy].cols() == 43);
  auto cells = learn::appendix_b_grid();
  // Thin the largest forests so the test stays quick; the shape is what matters.
  for (auto& c : cells) c.config.n_estimators = std::min(c.config.n_estimators, 40);
  const auto rows = learn::run_experiment_grid(datasets, cells, {});
  REQUIRE(rows.size() == 16);
  for (const auto& r : rows) {
    CHECK(r.error.empty());
    REQUIRE(r.test.has_value());
    CHECK(r.test->r2.has_value());
  }
  const auto csv = learn::table1_csv(rows);
  CHECK(csv.starts_with("Model,Dataset,Algorithm,MAE,RMSE,R2\n"));
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 17);
  CHECK(learn::table1_text(rows).find("M16") != std::string::npos);

  datasets.erase(learn::DatasetTag::PvRatio);
  const auto partial = learn::run_experiment_grid(datasets, cells, {});
  CHECK(partial.size() == 16);
  CHECK_FALSE(partial[8].error.empty());
  CHECK(partial[12].error.empty());
}

TEST_CASE("reseeding a forest moves R2 only a little") {
  const auto d = friedman(2000, 22);
  const std::vector<double> f{0.8, 0.2};
  const auto parts = learn::split_dataset(d, f, 0);
  auto r2 = [&](std::uint64_t seed) {
    auto c = forest(60);
    c.seed = seed;
    const auto e = learn::fit_random_forest(parts[0], c, {2});
    return *learn::metrics(parts[1].y, e.predict(parts[1])).r2;
  };
  const double a = r2(1), b = r2(2);
  CHECK(a != b);
  CHECK(std::abs(a - b) < 0.1);
}
