#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "solarmap/ingest.hpp"

namespace solarmap::learn {

enum class DatasetTag { PvCount, PvCountPolicy, PvRatio, PvRatioPolicy, Synthetic };

std::string_view to_string(DatasetTag tag);
DatasetTag parse_dataset_tag(std::string_view text);
/// Row label used in the model comparison table.
std::string_view display_name(DatasetTag tag);
bool uses_policy(DatasetTag tag);
std::string_view target_of(DatasetTag tag);

/// Dense row-major feature matrix with a continuous target.
struct Dataset {
  std::vector<std::string> names;
  std::vector<double> x;
  std::vector<double> y;
  std::vector<std::string> ids;  // optional, parallel to rows when present
  DatasetTag tag = DatasetTag::Synthetic;

  std::size_t rows() const { return y.size(); }
  std::size_t cols() const { return names.size(); }
  double at(std::size_t i, std::size_t j) const { return x[i * names.size() + j]; }
  std::span<const double> row(std::size_t i) const { return {x.data() + i * names.size(), names.size()}; }

  /// Throws std::invalid_argument on shape mismatch, non-finite values or n = 0.
  void validate() const;
  Dataset subset(std::span<const std::size_t> indices) const;
  std::optional<std::size_t> find(std::string_view name) const;
};

/// Partitions rows after a seeded shuffle. Every part but the last takes
/// floor(fraction * n) rows; the last takes the remainder.
std::vector<Dataset> split_dataset(const Dataset& ds, std::span<const double> fractions, std::uint64_t seed);

struct AssembledDataset {
  Dataset dataset;
  std::vector<std::string> dropped;  // geoids with a missing value
};

/// Builds one of the four modelling datasets from joined block-group rows.
/// Policy datasets use all 43 features; the others omit the six policy ones.
AssembledDataset assemble_dataset(std::span<const ingest::BlockGroupRecord> records,
                                  const ingest::FeatureSchema& schema, DatasetTag tag);

Dataset read_dataset_csv(const std::filesystem::path& path, std::string_view target, DatasetTag tag);

enum class Algorithm { RandomForest, Gbdt };
enum class Growth { DepthWise, LeafWise };
enum class MaxFeatures { All, Sqrt };

std::string_view to_string(Algorithm a);
std::string_view to_string(Growth g);

struct LearnerConfig {
  Algorithm algorithm = Algorithm::Gbdt;
  double learning_rate = 0.1;
  int n_estimators = 100;
  int max_depth = 6;    // <= 0: unlimited
  int num_leaves = 0;   // leaf-wise cap, 0: unlimited
  Growth growth = Growth::DepthWise;
  double feature_fraction = 1.0;  // per tree / boosting round
  MaxFeatures max_features = MaxFeatures::All;  // per split
  bool bootstrap = true;
  double bagging_fraction = 1.0;
  int bagging_freq = 0;
  double reg_lambda = 1.0;
  double alpha = 0.0;
  double gamma = 0.0;
  int max_bin = 0;  // 0: exact splits
  int min_samples_split = 2;
  int min_samples_leaf = 1;
  std::optional<double> base_score;  // default: training mean
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::json to_json(const LearnerConfig& config);
LearnerConfig config_from_json(const nlohmann::json& doc);

/// Translates a library-style hyperparameter dictionary into a LearnerConfig.
/// family is one of xgboost, catboost, lightgbm, random_forest; unknown keys
/// are rejected.
LearnerConfig config_from_params(std::string_view family, const nlohmann::json& params);

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double gain = 0.0;
  double cover = 0.0;  // hessian sum of the training rows reaching the node
  double value = 0.0;  // leaf output; for internal nodes the would-be leaf

  bool is_leaf() const { return feature < 0; }
};

/// Nodes are stored in creation order; node 0 is the root.
struct Tree {
  std::vector<TreeNode> nodes;

  /// Rows go left when x[feature] < threshold.
  double predict(std::span<const double> x) const;
  int leaf_index(std::span<const double> x) const;
  int depth() const;
  std::size_t leaves() const;
};

struct FitOptions {
  int threads = 1;
};

/// Fits a single tree to gradients and hessians indexed by row. Empty
/// gradients mean plain least squares on the target.
Tree fit_tree(const Dataset& train, const LearnerConfig& config, std::span<const double> grad = {},
              std::span<const double> hess = {});

struct TreeEnsemble {
  Algorithm kind = Algorithm::Gbdt;
  double base_score = 0.0;
  double learning_rate = 1.0;
  std::vector<std::string> feature_names;
  std::vector<Tree> trees;
  LearnerConfig config;

  /// Throws std::invalid_argument on dimension mismatch.
  double predict(std::span<const double> x) const;
  /// Maps the dataset's columns onto the model's features by name.
  std::vector<double> predict(const Dataset& data) const;
  /// Scale on every tree's output: the learning rate when boosting, 1/T
  /// for a forest.
  double tree_weight() const;
};

struct FitTrace {
  std::vector<double> train_loss;  // mean squared error after each round
};

TreeEnsemble fit_random_forest(const Dataset& train, const LearnerConfig& config, const FitOptions& options = {});
TreeEnsemble fit_gbdt(const Dataset& train, const LearnerConfig& config, const FitOptions& options = {},
                      FitTrace* trace = nullptr);
TreeEnsemble fit(const Dataset& train, const LearnerConfig& config, const FitOptions& options = {});

inline constexpr int kEnsembleSchemaVersion = 1;
nlohmann::json to_json(const TreeEnsemble& ensemble);
TreeEnsemble ensemble_from_json(const nlohmann::json& doc);

struct MetricsReport {
  double mae = 0.0;
  double rmse = 0.0;
  std::optional<double> r2;  // empty when the target has zero variance
  std::size_t n = 0;
};

MetricsReport metrics(std::span<const double> y, std::span<const double> yhat);

/// Seed for the index-th tree or round of a run seeded with `seed`.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

struct GridCell {
  std::string model_id;
  DatasetTag dataset = DatasetTag::PvCount;
  std::string algorithm;  // library the configuration came from
  LearnerConfig config;
};

/// The sixteen published configurations, four algorithms per dataset.
std::vector<GridCell> appendix_b_grid();

struct GridRow {
  GridCell cell;
  std::optional<MetricsReport> train;
  std::optional<MetricsReport> test;
  std::optional<TreeEnsemble> ensemble;
  std::string error;
};

struct GridOptions {
  std::vector<double> fractions{0.8, 0.2};
  std::uint64_t split_seed = 0;
  int threads = 1;
};

/// Trains every cell whose dataset is present. A failing cell records its
/// error and the grid continues.
std::vector<GridRow> run_experiment_grid(const std::map<DatasetTag, Dataset>& datasets,
                                         const std::vector<GridCell>& cells, const GridOptions& options);

/// Model,Dataset,Algorithm,MAE,RMSE,R2 on the held-out split.
std::string table1_csv(std::span<const GridRow> rows);
/// Fixed-width text mirror with R2 as a percentage.
std::string table1_text(std::span<const GridRow> rows);
/// Train and test metrics, labelled by split.
std::string grid_metrics_csv(std::span<const GridRow> rows);

}  // namespace solarmap::learn
