#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>

#include "solarmap/learn.hpp"
#include "solarmap/table_io.hpp"

namespace solarmap::learn {

using nlohmann::json;

std::string_view to_string(DatasetTag tag) {
  switch (tag) {
    case DatasetTag::PvCount: return "pv_count";
    case DatasetTag::PvCountPolicy: return "pv_count+policy";
    case DatasetTag::PvRatio: return "pv_ratio";
    case DatasetTag::PvRatioPolicy: return "pv_ratio+policy";
    case DatasetTag::Synthetic: return "synthetic";
  }
  return "unknown";
}

DatasetTag parse_dataset_tag(std::string_view text) {
  for (auto t : {DatasetTag::PvCount, DatasetTag::PvCountPolicy, DatasetTag::PvRatio, DatasetTag::PvRatioPolicy,
                 DatasetTag::Synthetic}) {
    if (to_string(t) == text) return t;
  }
  throw std::invalid_argument(fmt::format("learn: unknown dataset tag '{}'", text));
}

std::string_view display_name(DatasetTag tag) {
  switch (tag) {
    case DatasetTag::PvCount: return "PV count per HH";
    case DatasetTag::PvCountPolicy: return "PV count per HH + Energy policy";
    case DatasetTag::PvRatio: return "PV-to-roof ratio";
    case DatasetTag::PvRatioPolicy: return "PV-to-roof ratio + Energy policy";
    case DatasetTag::Synthetic: return "Synthetic";
  }
  return "unknown";
}

bool uses_policy(DatasetTag tag) { return tag == DatasetTag::PvCountPolicy || tag == DatasetTag::PvRatioPolicy; }

std::string_view target_of(DatasetTag tag) {
  switch (tag) {
    case DatasetTag::PvCount:
    case DatasetTag::PvCountPolicy: return ingest::kTargetPvCount;
    case DatasetTag::PvRatio:
    case DatasetTag::PvRatioPolicy: return ingest::kTargetPvRatio;
    case DatasetTag::Synthetic: break;
  }
  return "y";
}

void Dataset::validate() const {
  if (y.empty()) throw std::invalid_argument("learn: dataset has no rows");
  if (names.empty()) throw std::invalid_argument("learn: dataset has no features");
  if (x.size() != y.size() * names.size()) throw std::invalid_argument("learn: feature matrix shape mismatch");
  if (!ids.empty() && ids.size() != y.size()) throw std::invalid_argument("learn: id column length mismatch");
  for (double v : x) {
    if (!std::isfinite(v)) throw std::invalid_argument("learn: non-finite feature value");
  }
  for (double v : y) {
    if (!std::isfinite(v)) throw std::invalid_argument("learn: non-finite target value");
  }
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.names = names;
  out.tag = tag;
  const std::size_t p = names.size();
  out.x.reserve(indices.size() * p);
  out.y.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= rows()) throw std::out_of_range("learn: subset index out of range");
    out.x.insert(out.x.end(), x.begin() + i * p, x.begin() + (i + 1) * p);
    out.y.push_back(y[i]);
    if (!ids.empty()) out.ids.push_back(ids[i]);
  }
  return out;
}

std::optional<std::size_t> Dataset::find(std::string_view name) const {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) return std::nullopt;
  return static_cast<std::size_t>(it - names.begin());
}

std::vector<Dataset> split_dataset(const Dataset& ds, std::span<const double> fractions, std::uint64_t seed) {
  if (fractions.size() < 2) throw std::invalid_argument("learn: need at least two split fractions");
  double total = 0.0;
  for (double f : fractions) {
    if (!(f > 0.0 && f < 1.0)) throw std::invalid_argument("learn: split fractions must lie in (0, 1)");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("learn: split fractions must sum to 1");
  const std::size_t n = ds.rows();
  std::vector<std::size_t> sizes;
  std::size_t used = 0;
  for (std::size_t k = 0; k + 1 < fractions.size(); ++k) {
    const auto s = static_cast<std::size_t>(std::floor(fractions[k] * n + 1e-9));
    sizes.push_back(s);
    used += s;
  }
  if (used > n) throw std::invalid_argument("learn: split exceeds dataset size");
  sizes.push_back(n - used);
  for (std::size_t s : sizes) {
    if (s == 0) throw std::invalid_argument(fmt::format("learn: split of {} rows leaves an empty part", n));
  }
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::mt19937_64 rng(derive_seed(seed, 0));
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<Dataset> parts;
  std::size_t start = 0;
  for (std::size_t s : sizes) {
    std::vector<std::size_t> idx(perm.begin() + start, perm.begin() + start + s);
    std::sort(idx.begin(), idx.end());
    parts.push_back(ds.subset(idx));
    start += s;
  }
  return parts;
}

AssembledDataset assemble_dataset(std::span<const ingest::BlockGroupRecord> records,
                                  const ingest::FeatureSchema& schema, DatasetTag tag) {
  if (tag == DatasetTag::Synthetic) throw std::invalid_argument("learn: synthetic datasets are not assembled");
  AssembledDataset out;
  Dataset& ds = out.dataset;
  ds.tag = tag;
  ds.names = schema.names(uses_policy(tag));
  std::vector<std::size_t> cols;
  for (const auto& name : ds.names) cols.push_back(schema.index_of(name));
  const bool count_target = target_of(tag) == ingest::kTargetPvCount;
  for (const auto& rec : records) {
    const auto& target = count_target ? rec.pv_count_per_hh : rec.pv_to_roof_ratio;
    bool complete = target.has_value() && std::isfinite(*target);
    for (std::size_t c : cols) {
      if (!complete) break;
      complete = c < rec.values.size() && rec.values[c].has_value() && std::isfinite(*rec.values[c]);
    }
    if (!complete) {
      out.dropped.push_back(rec.geoid);
      continue;
    }
    for (std::size_t c : cols) ds.x.push_back(*rec.values[c]);
    ds.y.push_back(*target);
    ds.ids.push_back(rec.geoid);
  }
  if (ds.y.empty()) {
    throw std::invalid_argument(fmt::format("learn: no complete rows for dataset {}", to_string(tag)));
  }
  return out;
}

Dataset read_dataset_csv(const std::filesystem::path& path, std::string_view target, DatasetTag tag) {
  const auto table = io::read_csv(path);
  Dataset ds;
  ds.tag = tag;
  const std::size_t ycol = table.column(target);
  const auto idcol = table.find_column("geoid");
  std::vector<std::size_t> cols;
  for (std::size_t j = 0; j < table.header.size(); ++j) {
    if (j == ycol || (idcol && j == *idcol)) continue;
    cols.push_back(j);
    ds.names.push_back(table.header[j]);
  }
  for (const auto& row : table.rows) {
    for (std::size_t j : cols) ds.x.push_back(io::parse_number(row[j]));
    ds.y.push_back(io::parse_number(row[ycol]));
    if (idcol) ds.ids.push_back(row[*idcol]);
  }
  ds.validate();
  return ds;
}

std::vector<GridCell> appendix_b_grid() {
  struct Raw {
    const char* family;
    const char* label;
    const char* params;
  };
  // Hyperparameters as published, one block of four per dataset.
  static const Raw raw[16] = {
      {"xgboost", "XGBoost",
       R"({"gamma": 0, "alpha": 12, "learning_rate": 0.027, "seed": 712, "colsample_bytree": 0.3, "reg_lambda": 1,
           "random_state": 700, "n_estimators": 299, "base_score": 0.29, "max_depth": 7})"},
      {"catboost", "CATBoost", R"({"l2_leaf_reg": 2, "learning_rate": 0.1, "depth": 9, "iterations": 150})"},
      {"lightgbm", "LightGBM",
       R"({"objective": "regression", "metric": "rmse", "is_unbalance": "true", "is_training_metric": "true",
           "boosting": "gbdt", "num_leaves": 36, "feature_fraction": 0.99, "bagging_fraction": 0.69,
           "bagging_freq": 4, "learning_rate": 0.01, "max_depth": 15, "max_bin": 23})"},
      {"random_forest", "Random Forest",
       R"({"n_estimators": 19, "max_depth": 150, "min_samples_split": 2, "max_features": "sqrt",
           "min_samples_leaf": 2, "random_state": 531})"},
      {"xgboost", "XGBoost",
       R"({"gamma": 0, "alpha": 5, "learning_rate": 0.05, "random_state": 185, "colsample_bytree": 0.5,
           "reg_lambda": 0, "n_estimators": 311, "base_score": 0.5, "max_depth": 7, "seed": 855})"},
      {"catboost", "CATBoost", R"({"l2_leaf_reg": 2, "learning_rate": 0.1, "depth": 6, "iterations": 200})"},
      {"lightgbm", "LightGBM",
       R"({"objective": "regression", "metric": "rmse", "is_unbalance": "true", "is_training_metric": "true",
           "boosting": "gbdt", "num_leaves": 36, "feature_fraction": 0.81, "bagging_fraction": 0.91,
           "bagging_freq": 20, "learning_rate": 0.021, "max_depth": 14, "max_bin": 23})"},
      {"random_forest", "Random Forest",
       R"({"n_estimators": 700, "max_depth": 150, "min_samples_split": 2, "max_features": "sqrt",
           "min_samples_leaf": 2, "random_state": 372})"},
      {"xgboost", "XGBoost",
       R"({"gamma": 0, "alpha": 12, "learning_rate": 0.025, "seed": 712, "colsample_bytree": 0.35, "reg_lambda": 1,
           "random_state": 789, "n_estimators": 300, "base_score": 0.5, "max_depth": 8})"},
      {"catboost", "CATBoost", R"({"l2_leaf_reg": 1, "learning_rate": 0.09, "depth": 10, "iterations": 200})"},
      {"lightgbm", "LightGBM",
       R"({"objective": "regression", "metric": "rmse", "is_unbalance": "true", "is_training_metric": "true",
           "boosting": "gbdt", "num_leaves": 45, "feature_fraction": 0.25, "bagging_fraction": 0.75,
           "bagging_freq": 4, "learning_rate": 0.01, "max_depth": 15, "max_bin": 52})"},
      {"random_forest", "Random Forest",
       R"({"n_estimators": 300, "max_depth": 64, "min_samples_split": 3, "max_features": "sqrt",
           "min_samples_leaf": 2, "random_state": 435})"},
      {"xgboost", "XGBoost",
       R"({"gamma": 0, "alpha": 5, "learning_rate": 0.05, "seed": 1164, "colsample_bytree": 0.5, "reg_lambda": 0,
           "random_state": 185, "n_estimators": 500, "base_score": 0.52, "max_depth": 9})"},
      {"catboost", "CATBoost", R"({"l2_leaf_reg": 1, "learning_rate": 0.09, "depth": 6, "iterations": 150})"},
      {"lightgbm", "LightGBM",
       R"({"objective": "regression", "metric": "rmse", "is_unbalance": "true", "is_training_metric": "true",
           "boosting": "gbdt", "num_leaves": 36, "feature_fraction": 0.34, "bagging_fraction": 0.75,
           "bagging_freq": 4, "learning_rate": 0.01, "max_depth": 15, "max_bin": 23})"},
      {"random_forest", "Random Forest",
       R"({"n_estimators": 300, "max_depth": 280, "min_samples_split": 2, "max_features": "sqrt",
           "min_samples_leaf": 2, "random_state": 42})"},
  };
  static const DatasetTag tags[4] = {DatasetTag::PvCount, DatasetTag::PvCountPolicy, DatasetTag::PvRatio,
                                     DatasetTag::PvRatioPolicy};
  std::vector<GridCell> cells;
  for (int i = 0; i < 16; ++i) {
    GridCell c;
    c.model_id = fmt::format("M{}", i + 1);
    c.dataset = tags[i / 4];
    c.algorithm = raw[i].label;
    c.config = config_from_params(raw[i].family, json::parse(raw[i].params));
    cells.push_back(std::move(c));
  }
  return cells;
}

std::vector<GridRow> run_experiment_grid(const std::map<DatasetTag, Dataset>& datasets,
                                         const std::vector<GridCell>& cells, const GridOptions& options) {
  std::map<DatasetTag, std::vector<Dataset>> splits;
  std::vector<GridRow> rows;
  for (const auto& cell : cells) {
    GridRow row;
    row.cell = cell;
    try {
      const auto found = datasets.find(cell.dataset);
      if (found == datasets.end()) {
        throw std::invalid_argument(fmt::format("learn: dataset {} not provided", to_string(cell.dataset)));
      }
      auto& parts = splits[cell.dataset];
      if (parts.empty()) parts = split_dataset(found->second, options.fractions, options.split_seed);
      const Dataset& train = parts.front();
      const Dataset& test = parts.back();
      auto model = fit(train, cell.config, FitOptions{options.threads});
      const auto train_pred = model.predict(train);
      const auto test_pred = model.predict(test);
      row.train = metrics(train.y, train_pred);
      row.test = metrics(test.y, test_pred);
      row.ensemble = std::move(model);
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace {

std::string metric_field(const std::optional<MetricsReport>& m, int which) {
  if (!m) return "NA";
  switch (which) {
    case 0: return io::format_number(m->mae);
    case 1: return io::format_number(m->rmse);
    default: return io::format_optional(m->r2);
  }
}

}  // namespace

std::string table1_csv(std::span<const GridRow> rows) {
  std::string out = io::csv_line({"Model", "Dataset", "Algorithm", "MAE", "RMSE", "R2"});
  for (const auto& r : rows) {
    out += io::csv_line({r.cell.model_id, std::string(display_name(r.cell.dataset)), r.cell.algorithm,
                         metric_field(r.test, 0), metric_field(r.test, 1), metric_field(r.test, 2)});
  }
  return out;
}

std::string table1_text(std::span<const GridRow> rows) {
  std::string out = fmt::format("{:<6}{:<34}{:<15}{:>8}{:>8}{:>8}\n", "Model", "Dataset", "Algorithm", "MAE", "RMSE",
                                "R^2");
  for (const auto& r : rows) {
    std::string mae = "NA";
    std::string rmse = "NA";
    std::string r2 = "NA";
    if (r.test) {
      mae = fmt::format("{:.3f}", r.test->mae);
      rmse = fmt::format("{:.3f}", r.test->rmse);
      if (r.test->r2) r2 = fmt::format("{:.1f}%", 100.0 * *r.test->r2);
    }
    out += fmt::format("{:<6}{:<34}{:<15}{:>8}{:>8}{:>8}\n", r.cell.model_id, display_name(r.cell.dataset),
                       r.cell.algorithm, mae, rmse, r2);
  }
  return out;
}

std::string grid_metrics_csv(std::span<const GridRow> rows) {
  std::string out = io::csv_line({"model", "dataset", "algorithm", "split", "n", "mae", "rmse", "r2", "error"});
  for (const auto& r : rows) {
    for (int s = 0; s < 2; ++s) {
      const auto& m = s == 0 ? r.train : r.test;
      out += io::csv_line({r.cell.model_id, std::string(to_string(r.cell.dataset)), r.cell.algorithm,
                           s == 0 ? "train" : "test", m ? std::to_string(m->n) : "NA", metric_field(m, 0),
                           metric_field(m, 1), metric_field(m, 2), r.error});
    }
  }
  return out;
}

}  // namespace solarmap::learn
