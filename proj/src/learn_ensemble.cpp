#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include <fmt/format.h>

#include "solarmap/learn.hpp"
#include "solarmap/parallel.hpp"
#include "tree_builder.hpp"

namespace solarmap::learn {

using nlohmann::json;

std::string_view to_string(Algorithm a) { return a == Algorithm::RandomForest ? "random_forest" : "gbdt"; }
std::string_view to_string(Growth g) { return g == Growth::LeafWise ? "leaf_wise" : "depth_wise"; }

namespace {

Algorithm parse_algorithm(std::string_view s) {
  if (s == "random_forest") return Algorithm::RandomForest;
  if (s == "gbdt") return Algorithm::Gbdt;
  throw std::invalid_argument(fmt::format("learn: unknown algorithm '{}'", s));
}

Growth parse_growth(std::string_view s) {
  if (s == "depth_wise") return Growth::DepthWise;
  if (s == "leaf_wise") return Growth::LeafWise;
  throw std::invalid_argument(fmt::format("learn: unknown growth '{}'", s));
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double number(const json& v, std::string_view key) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    try {
      std::size_t used = 0;
      const std::string s = v.get<std::string>();
      const double d = std::stod(s, &used);
      if (used == s.size()) return d;
    } catch (const std::exception&) {
    }
  }
  throw std::invalid_argument(fmt::format("learn: parameter '{}' must be numeric", key));
}

int integer(const json& v, std::string_view key) {
  const double d = number(v, key);
  if (d != std::floor(d) || std::abs(d) > 1e9) {
    throw std::invalid_argument(fmt::format("learn: parameter '{}' must be an integer", key));
  }
  return static_cast<int>(d);
}

std::string text(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

bool flag(const json& v, std::string_view key) {
  if (v.is_boolean()) return v.get<bool>();
  const std::string s = text(v);
  if (s == "true" || s == "True" || s == "1") return true;
  if (s == "false" || s == "False" || s == "0") return false;
  throw std::invalid_argument(fmt::format("learn: parameter '{}' must be boolean", key));
}

void set_subsample(LearnerConfig& c, double fraction) {
  c.bagging_fraction = fraction;
  if (c.bagging_freq == 0 && fraction < 1.0) c.bagging_freq = 1;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  return splitmix64(splitmix64(seed) ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

void LearnerConfig::validate() const {
  auto fail = [](std::string_view what) { throw std::invalid_argument(fmt::format("learn: {}", what)); };
  if (!std::isfinite(learning_rate) || learning_rate < 0.0) fail("learning_rate must be finite and non-negative");
  if (n_estimators < 1) fail("n_estimators must be at least 1");
  if (num_leaves < 0 || num_leaves == 1) fail("num_leaves must be 0 or at least 2");
  if (!(feature_fraction > 0.0 && feature_fraction <= 1.0)) fail("feature_fraction must lie in (0, 1]");
  if (!(bagging_fraction > 0.0 && bagging_fraction <= 1.0)) fail("bagging_fraction must lie in (0, 1]");
  if (bagging_freq < 0) fail("bagging_freq must be non-negative");
  if (!(reg_lambda >= 0.0) || !std::isfinite(reg_lambda)) fail("reg_lambda must be non-negative");
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) fail("alpha must be non-negative");
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) fail("gamma must be non-negative");
  if (max_bin < 0) fail("max_bin must be non-negative");
  if (max_bin == 1) fail("max_bin must be 0 or at least 2");
  if (min_samples_split < 2) fail("min_samples_split must be at least 2");
  if (min_samples_leaf < 1) fail("min_samples_leaf must be at least 1");
  if (base_score && !std::isfinite(*base_score)) fail("base_score must be finite");
}

json to_json(const LearnerConfig& c) {
  json j;
  j["algorithm"] = to_string(c.algorithm);
  j["learning_rate"] = c.learning_rate;
  j["n_estimators"] = c.n_estimators;
  j["max_depth"] = c.max_depth;
  j["num_leaves"] = c.num_leaves;
  j["growth"] = to_string(c.growth);
  j["feature_fraction"] = c.feature_fraction;
  j["max_features"] = c.max_features == MaxFeatures::Sqrt ? "sqrt" : "all";
  j["bootstrap"] = c.bootstrap;
  j["bagging_fraction"] = c.bagging_fraction;
  j["bagging_freq"] = c.bagging_freq;
  j["reg_lambda"] = c.reg_lambda;
  j["alpha"] = c.alpha;
  j["gamma"] = c.gamma;
  j["max_bin"] = c.max_bin;
  j["min_samples_split"] = c.min_samples_split;
  j["min_samples_leaf"] = c.min_samples_leaf;
  j["base_score"] = c.base_score ? json(*c.base_score) : json(nullptr);
  j["seed"] = c.seed;
  return j;
}

LearnerConfig config_from_json(const json& doc) {
  if (!doc.is_object()) throw std::invalid_argument("learn: config must be an object");
  LearnerConfig c;
  for (const auto& [key, v] : doc.items()) {
    if (key == "algorithm") c.algorithm = parse_algorithm(text(v));
    else if (key == "learning_rate") c.learning_rate = number(v, key);
    else if (key == "n_estimators") c.n_estimators = integer(v, key);
    else if (key == "max_depth") c.max_depth = integer(v, key);
    else if (key == "num_leaves") c.num_leaves = integer(v, key);
    else if (key == "growth") c.growth = parse_growth(text(v));
    else if (key == "feature_fraction") c.feature_fraction = number(v, key);
    else if (key == "max_features") c.max_features = text(v) == "sqrt" ? MaxFeatures::Sqrt : MaxFeatures::All;
    else if (key == "bootstrap") c.bootstrap = flag(v, key);
    else if (key == "bagging_fraction") c.bagging_fraction = number(v, key);
    else if (key == "bagging_freq") c.bagging_freq = integer(v, key);
    else if (key == "reg_lambda") c.reg_lambda = number(v, key);
    else if (key == "alpha") c.alpha = number(v, key);
    else if (key == "gamma") c.gamma = number(v, key);
    else if (key == "max_bin") c.max_bin = integer(v, key);
    else if (key == "min_samples_split") c.min_samples_split = integer(v, key);
    else if (key == "min_samples_leaf") c.min_samples_leaf = integer(v, key);
    else if (key == "base_score") c.base_score = v.is_null() ? std::nullopt : std::optional<double>(number(v, key));
    else if (key == "seed") c.seed = v.get<std::uint64_t>();
    else throw std::invalid_argument(fmt::format("learn: unknown config key '{}'", key));
  }
  c.validate();
  return c;
}

LearnerConfig config_from_params(std::string_view family, const json& params) {
  if (!params.is_object()) throw std::invalid_argument("learn: parameters must be an object");
  LearnerConfig c;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> random_state;
  auto unknown = [&](const std::string& key) {
    throw std::invalid_argument(fmt::format("learn: unknown {} parameter '{}'", family, key));
  };
  auto seed_of = [](const json& v, std::string_view key) {
    return static_cast<std::uint64_t>(static_cast<std::int64_t>(integer(v, key)));
  };

  if (family == "xgboost") {
    c.algorithm = Algorithm::Gbdt;
    c.learning_rate = 0.3;
    c.max_depth = 6;
    c.reg_lambda = 1.0;
    for (const auto& [key, v] : params.items()) {
      if (key == "gamma" || key == "min_split_loss") c.gamma = number(v, key);
      else if (key == "alpha" || key == "reg_alpha") c.alpha = number(v, key);
      else if (key == "lambda" || key == "reg_lambda") c.reg_lambda = number(v, key);
      else if (key == "learning_rate" || key == "eta") c.learning_rate = number(v, key);
      else if (key == "colsample_bytree") c.feature_fraction = number(v, key);
      else if (key == "subsample") set_subsample(c, number(v, key));
      else if (key == "n_estimators") c.n_estimators = integer(v, key);
      else if (key == "base_score") c.base_score = number(v, key);
      else if (key == "max_depth") c.max_depth = integer(v, key);
      else if (key == "max_bin") c.max_bin = integer(v, key);
      else if (key == "seed") seed = seed_of(v, key);
      else if (key == "random_state") random_state = seed_of(v, key);
      else if (key == "objective") {
        if (text(v) != "reg:squarederror") throw std::invalid_argument("learn: only squared-error objectives");
      } else unknown(key);
    }
  } else if (family == "catboost") {
    c.algorithm = Algorithm::Gbdt;
    c.learning_rate = 0.03;
    c.n_estimators = 1000;
    c.max_depth = 6;
    c.reg_lambda = 3.0;
    c.max_bin = 254;
    for (const auto& [key, v] : params.items()) {
      if (key == "l2_leaf_reg" || key == "reg_lambda") c.reg_lambda = number(v, key);
      else if (key == "learning_rate" || key == "eta") c.learning_rate = number(v, key);
      else if (key == "depth" || key == "max_depth") c.max_depth = integer(v, key);
      else if (key == "iterations" || key == "n_estimators" || key == "num_boost_round") c.n_estimators = integer(v, key);
      else if (key == "border_count" || key == "max_bin") c.max_bin = integer(v, key);
      else if (key == "rsm" || key == "colsample_bylevel") c.feature_fraction = number(v, key);
      else if (key == "random_seed" || key == "random_state") random_state = seed_of(v, key);
      else if (key == "loss_function") {
        if (text(v) != "RMSE") throw std::invalid_argument("learn: only RMSE loss");
      } else unknown(key);
    }
  } else if (family == "lightgbm") {
    c.algorithm = Algorithm::Gbdt;
    c.growth = Growth::LeafWise;
    c.learning_rate = 0.1;
    c.num_leaves = 31;
    c.max_depth = 0;
    c.max_bin = 255;
    c.reg_lambda = 0.0;
    c.min_samples_leaf = 20;
    for (const auto& [key, v] : params.items()) {
      if (key == "num_leaves") c.num_leaves = integer(v, key);
      else if (key == "feature_fraction" || key == "colsample_bytree") c.feature_fraction = number(v, key);
      else if (key == "bagging_fraction" || key == "subsample") c.bagging_fraction = number(v, key);
      else if (key == "bagging_freq" || key == "subsample_freq") c.bagging_freq = integer(v, key);
      else if (key == "learning_rate") c.learning_rate = number(v, key);
      else if (key == "max_depth") c.max_depth = std::max(0, integer(v, key));
      else if (key == "max_bin") c.max_bin = integer(v, key);
      else if (key == "lambda_l2" || key == "reg_lambda") c.reg_lambda = number(v, key);
      else if (key == "lambda_l1" || key == "reg_alpha") c.alpha = number(v, key);
      else if (key == "min_gain_to_split") c.gamma = number(v, key);
      else if (key == "min_data_in_leaf" || key == "min_child_samples") c.min_samples_leaf = integer(v, key);
      else if (key == "n_estimators" || key == "num_iterations") c.n_estimators = integer(v, key);
      else if (key == "seed") seed = seed_of(v, key);
      else if (key == "random_state") random_state = seed_of(v, key);
      else if (key == "objective") {
        if (text(v) != "regression") throw std::invalid_argument("learn: only the regression objective");
      } else if (key == "boosting") {
        if (text(v) != "gbdt") throw std::invalid_argument("learn: only gbdt boosting");
      } else if (key == "metric" || key == "is_unbalance" || key == "is_training_metric") {
        // reporting-only switches
      } else unknown(key);
    }
  } else if (family == "random_forest") {
    c.algorithm = Algorithm::RandomForest;
    c.max_depth = 0;
    c.reg_lambda = 0.0;
    for (const auto& [key, v] : params.items()) {
      if (key == "n_estimators") c.n_estimators = integer(v, key);
      else if (key == "max_depth") c.max_depth = v.is_null() ? 0 : integer(v, key);
      else if (key == "min_samples_split") c.min_samples_split = integer(v, key);
      else if (key == "min_samples_leaf") c.min_samples_leaf = integer(v, key);
      else if (key == "max_features") {
        if (v.is_null() || text(v) == "1.0" || text(v) == "1") c.max_features = MaxFeatures::All;
        else if (text(v) == "sqrt") c.max_features = MaxFeatures::Sqrt;
        else throw std::invalid_argument(fmt::format("learn: unsupported max_features {}", text(v)));
      } else if (key == "bootstrap") c.bootstrap = flag(v, key);
      else if (key == "random_state") random_state = seed_of(v, key);
      else unknown(key);
    }
  } else {
    throw std::invalid_argument(fmt::format("learn: unknown algorithm family '{}'", family));
  }
  // random_state wins when both are given, as in the scikit-learn wrappers.
  if (random_state) c.seed = *random_state;
  else if (seed) c.seed = *seed;
  c.validate();
  return c;
}

double TreeEnsemble::tree_weight() const {
  if (kind == Algorithm::Gbdt) return learning_rate;
  return trees.empty() ? 0.0 : 1.0 / static_cast<double>(trees.size());
}

double TreeEnsemble::predict(std::span<const double> x) const {
  if (x.size() != feature_names.size()) {
    throw std::invalid_argument(
        fmt::format("learn: expected {} features, got {}", feature_names.size(), x.size()));
  }
  double sum = 0.0;
  for (const auto& t : trees) sum += t.predict(x);
  if (kind == Algorithm::Gbdt) return base_score + learning_rate * sum;
  return sum / static_cast<double>(trees.size());
}

std::vector<double> TreeEnsemble::predict(const Dataset& data) const {
  std::vector<std::size_t> col(feature_names.size());
  for (std::size_t j = 0; j < feature_names.size(); ++j) {
    const auto found = data.find(feature_names[j]);
    if (!found) throw std::invalid_argument(fmt::format("learn: dataset lacks feature '{}'", feature_names[j]));
    col[j] = *found;
  }
  std::vector<double> out(data.rows());
  std::vector<double> x(feature_names.size());
  for (std::size_t i = 0; i < data.rows(); ++i) {
    for (std::size_t j = 0; j < col.size(); ++j) x[j] = data.at(i, col[j]);
    out[i] = predict(x);
  }
  return out;
}

namespace {

std::vector<int> all_features(std::size_t p) {
  std::vector<int> f(p);
  std::iota(f.begin(), f.end(), 0);
  return f;
}

std::vector<int> sample_features(std::size_t p, double fraction, std::mt19937_64& rng) {
  auto f = all_features(p);
  if (fraction >= 1.0) return f;
  const std::size_t k = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(fraction * p + 1e-9)));
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, p - 1);
    std::swap(f[i], f[pick(rng)]);
  }
  f.resize(k);
  std::sort(f.begin(), f.end());
  return f;
}

TreeEnsemble empty_ensemble(const Dataset& train, const LearnerConfig& config) {
  TreeEnsemble e;
  e.kind = config.algorithm;
  e.feature_names = train.names;
  e.config = config;
  return e;
}

}  // namespace

TreeEnsemble fit_random_forest(const Dataset& train, const LearnerConfig& config, const FitOptions& options) {
  train.validate();
  config.validate();
  if (config.algorithm != Algorithm::RandomForest) throw std::invalid_argument("learn: config is not a random forest");
  const std::size_t n = train.rows();
  const auto bins = detail::BinnedMatrix::build(train, config.max_bin);
  std::vector<double> g(n);
  for (std::size_t i = 0; i < n; ++i) g[i] = -train.y[i];
  const std::vector<double> h(n, 1.0);

  TreeEnsemble e = empty_ensemble(train, config);
  e.trees.resize(config.n_estimators);
  ThreadPool pool(resolve_threads(options.threads));
  pool.parallel_for(e.trees.size(), [&](std::size_t t) {
    const std::uint64_t tree_seed = derive_seed(config.seed, t);
    std::mt19937_64 rng(tree_seed);
    std::vector<std::size_t> sample(n);
    if (config.bootstrap) {
      std::uniform_int_distribution<std::size_t> draw(0, n - 1);
      for (auto& s : sample) s = draw(rng);
    } else {
      std::iota(sample.begin(), sample.end(), std::size_t{0});
    }
    auto params = detail::params_for(config, train.cols());
    params.seed = derive_seed(tree_seed, 1);
    e.trees[t] = detail::build_tree(train, bins, g, h, std::move(sample),
                                    sample_features(train.cols(), config.feature_fraction, rng), params);
  });
  return e;
}

TreeEnsemble fit_gbdt(const Dataset& train, const LearnerConfig& config, const FitOptions& options, FitTrace* trace) {
  train.validate();
  config.validate();
  if (config.algorithm != Algorithm::Gbdt) throw std::invalid_argument("learn: config is not gradient boosting");
  const std::size_t n = train.rows();
  const auto bins = detail::BinnedMatrix::build(train, config.max_bin);

  TreeEnsemble e = empty_ensemble(train, config);
  e.learning_rate = config.learning_rate;
  e.base_score = config.base_score.value_or(std::accumulate(train.y.begin(), train.y.end(), 0.0) / n);

  ThreadPool pool(resolve_threads(options.threads));
  std::vector<double> pred(n, e.base_score);
  std::vector<double> g(n);
  const std::vector<double> h(n, 1.0);
  std::vector<std::size_t> sample(n);
  std::iota(sample.begin(), sample.end(), std::size_t{0});
  const bool bagging = config.bagging_freq > 0 && config.bagging_fraction < 1.0;
  const std::size_t bag_size =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(config.bagging_fraction * n + 1e-9)));

  for (int r = 0; r < config.n_estimators; ++r) {
    const std::uint64_t round_seed = derive_seed(config.seed, static_cast<std::uint64_t>(r));
    std::mt19937_64 rng(round_seed);
    auto features = sample_features(train.cols(), config.feature_fraction, rng);
    if (bagging && r % config.bagging_freq == 0) {
      std::vector<std::size_t> perm(n);
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      for (std::size_t i = 0; i < bag_size; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, n - 1);
        std::swap(perm[i], perm[pick(rng)]);
      }
      perm.resize(bag_size);
      std::sort(perm.begin(), perm.end());
      sample = std::move(perm);
    }
    for (std::size_t i = 0; i < n; ++i) g[i] = pred[i] - train.y[i];
    auto params = detail::params_for(config, train.cols());
    params.seed = derive_seed(round_seed, 1);
    params.pool = &pool;
    Tree tree = detail::build_tree(train, bins, g, h, sample, std::move(features), params);
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      pred[i] += e.learning_rate * tree.predict(train.row(i));
      const double d = pred[i] - train.y[i];
      loss += d * d;
    }
    if (trace) trace->train_loss.push_back(loss / n);
    e.trees.push_back(std::move(tree));
  }
  return e;
}

TreeEnsemble fit(const Dataset& train, const LearnerConfig& config, const FitOptions& options) {
  return config.algorithm == Algorithm::RandomForest ? fit_random_forest(train, config, options)
                                                     : fit_gbdt(train, config, options);
}

namespace {

json node_to_json(const Tree& tree, int i) {
  const auto& n = tree.nodes[i];
  json j;
  j["id"] = i;
  j["cover"] = n.cover;
  j["value"] = n.value;
  if (!n.is_leaf()) {
    j["feature"] = n.feature;
    j["threshold"] = n.threshold;
    j["gain"] = n.gain;
    j["left"] = node_to_json(tree, n.left);
    j["right"] = node_to_json(tree, n.right);
  }
  return j;
}

int node_from_json(const json& j, std::vector<TreeNode>& nodes, std::size_t p) {
  const int id = j.at("id").get<int>();
  if (id < 0) throw std::invalid_argument("learn: negative node id");
  if (static_cast<std::size_t>(id) >= nodes.size()) nodes.resize(id + 1);
  TreeNode n;
  n.cover = j.at("cover").get<double>();
  n.value = j.at("value").get<double>();
  if (j.contains("feature")) {
    n.feature = j.at("feature").get<int>();
    if (n.feature < 0 || static_cast<std::size_t>(n.feature) >= p) {
      throw std::invalid_argument("learn: split feature out of range");
    }
    n.threshold = j.at("threshold").get<double>();
    n.gain = j.at("gain").get<double>();
    n.left = node_from_json(j.at("left"), nodes, p);
    n.right = node_from_json(j.at("right"), nodes, p);
  }
  nodes[id] = n;
  return id;
}

}  // namespace

json to_json(const TreeEnsemble& e) {
  json j;
  j["schema_version"] = kEnsembleSchemaVersion;
  j["kind"] = to_string(e.kind);
  j["base_score"] = e.base_score;
  j["learning_rate"] = e.learning_rate;
  j["features"] = e.feature_names;
  j["config"] = to_json(e.config);
  json trees = json::array();
  for (const auto& t : e.trees) trees.push_back(node_to_json(t, 0));
  j["trees"] = std::move(trees);
  return j;
}

TreeEnsemble ensemble_from_json(const json& doc) {
  if (doc.value("schema_version", 0) != kEnsembleSchemaVersion) {
    throw std::invalid_argument("learn: unsupported ensemble schema version");
  }
  TreeEnsemble e;
  e.kind = parse_algorithm(doc.at("kind").get<std::string>());
  e.base_score = doc.at("base_score").get<double>();
  e.learning_rate = doc.at("learning_rate").get<double>();
  e.feature_names = doc.at("features").get<std::vector<std::string>>();
  e.config = config_from_json(doc.at("config"));
  for (const auto& t : doc.at("trees")) {
    Tree tree;
    node_from_json(t, tree.nodes, e.feature_names.size());
    e.trees.push_back(std::move(tree));
  }
  return e;
}

MetricsReport metrics(std::span<const double> y, std::span<const double> yhat) {
  if (y.size() != yhat.size()) throw std::invalid_argument("learn: metric inputs differ in length");
  if (y.empty()) throw std::invalid_argument("learn: metrics need at least one row");
  const double n = static_cast<double>(y.size());
  double abs_sum = 0.0;
  double sq_sum = 0.0;
  double mean = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double e = y[i] - yhat[i];
    abs_sum += std::abs(e);
    sq_sum += e * e;
    mean += y[i];
  }
  mean /= n;
  double total = 0.0;
  for (double v : y) total += (v - mean) * (v - mean);
  MetricsReport m;
  m.n = y.size();
  m.mae = abs_sum / n;
  m.rmse = std::sqrt(sq_sum / n);
  if (y.size() >= 2 && total > 0.0) m.r2 = 1.0 - sq_sum / total;
  return m;
}

}  // namespace solarmap::learn
